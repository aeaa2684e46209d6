import { describe, expect, it } from "vitest";

import { ApiError, getHealth, getTaxonomy, postPredict } from "../src/api.js";
import type { PredictRequestBody } from "../src/types.js";

const body: PredictRequestBody = {
  chronic: "", surgery: "", therapy: "", usage: "",
  symptom: "catsign0", allergy: "",
  age: 40, height: null, weight: null, duration: null,
  gender: "female", pregnancy: "unknown",
};

function jsonResponse(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("postPredict", () => {
  it("posts JSON to <base>/predict and returns the parsed body", async () => {
    let seenUrl = "";
    let seenInit: RequestInit | undefined;
    const fetchImpl = async (url: string, init?: RequestInit) => {
      seenUrl = url;
      seenInit = init;
      return jsonResponse(200, {
        categories: [{ category: "cat00", probability: 1 }],
        selected_category: "cat00",
        diseases: [],
        composite: [],
        model_version: "m",
      });
    };
    const result = await postPredict("http://svc:8080", body, fetchImpl);
    expect(seenUrl).toBe("http://svc:8080/predict");
    expect(seenInit?.method).toBe("POST");
    expect(JSON.parse(String(seenInit?.body)).symptom).toBe("catsign0");
    expect(result.selected_category).toBe("cat00");
  });

  it("turns a 400 with field details into ApiError.fieldErrors", async () => {
    const fetchImpl = async () =>
      jsonResponse(400, { detail: [{ field: "gender", message: "bad value" }] });
    const error = await postPredict("http://svc", body, fetchImpl).catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(400);
    expect(error.fieldErrors).toEqual({ gender: "bad value" });
  });

  it("handles non-JSON error bodies", async () => {
    const fetchImpl = async () => new Response("boom", { status: 500 });
    const error = await postPredict("http://svc", body, fetchImpl).catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.fieldErrors).toEqual({});
  });
});

describe("read endpoints", () => {
  it("fetches the taxonomy", async () => {
    const payload = { categories: ["c"], diseases: ["d"], membership: { c: ["d"] } };
    const taxonomy = await getTaxonomy("http://svc", async (url) => {
      expect(url).toBe("http://svc/taxonomy");
      return jsonResponse(200, payload);
    });
    expect(taxonomy).toEqual(payload);
  });

  it("fetches health", async () => {
    const health = await getHealth("http://svc", async () =>
      jsonResponse(200, { status: "ok", model_version: "1-abc" }),
    );
    expect(health.status).toBe("ok");
  });

  it("raises ApiError on unhealthy status", async () => {
    const error = await getHealth("http://svc", async () =>
      new Response("", { status: 503 }),
    ).catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(503);
  });
});
