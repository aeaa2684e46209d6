// Fetch-based client for the prediction service.

import type { PredictRequestBody, PredictResponse, TaxonomyResponse } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
    public fieldErrors: Record<string, string> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

interface FieldDetail {
  field?: string;
  message?: string;
}

async function fieldErrorsOf(response: Response): Promise<Record<string, string>> {
  try {
    const body = (await response.json()) as { detail?: FieldDetail[] | string };
    if (Array.isArray(body.detail)) {
      const errors: Record<string, string> = {};
      for (const item of body.detail) {
        if (item.field) errors[item.field] = item.message ?? "invalid value";
      }
      return errors;
    }
  } catch {
    // non-JSON error body; fall through
  }
  return {};
}

export async function postPredict(
  baseUrl: string,
  body: PredictRequestBody,
  fetchImpl: FetchLike = fetch,
): Promise<PredictResponse> {
  const response = await fetchImpl(`${baseUrl}/predict`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!response.ok) {
    const fieldErrors = await fieldErrorsOf(response);
    throw new ApiError(
      response.status,
      `prediction request failed (${response.status})`,
      fieldErrors,
    );
  }
  return (await response.json()) as PredictResponse;
}

export async function getTaxonomy(
  baseUrl: string,
  fetchImpl: FetchLike = fetch,
): Promise<TaxonomyResponse> {
  const response = await fetchImpl(`${baseUrl}/taxonomy`);
  if (!response.ok) {
    throw new ApiError(response.status, `taxonomy request failed (${response.status})`);
  }
  return (await response.json()) as TaxonomyResponse;
}

export async function getHealth(
  baseUrl: string,
  fetchImpl: FetchLike = fetch,
): Promise<{ status: string; model_version: string }> {
  const response = await fetchImpl(`${baseUrl}/health`);
  if (!response.ok) {
    throw new ApiError(response.status, `health request failed (${response.status})`);
  }
  return (await response.json()) as { status: string; model_version: string };
}
