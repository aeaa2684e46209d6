import { mountApp } from "./ui.js";

const DEFAULT_BASE_URL = "http://127.0.0.1:8080";

function baseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery ?? DEFAULT_BASE_URL;
}

const root = document.getElementById("app");
if (root) {
  mountApp(root, { baseUrl: baseUrl() });
}
