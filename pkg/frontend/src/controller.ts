// DOM-free submit pipeline: validate, gate on the in-flight flag, issue
// exactly one request, and route the outcome back through the state
// machine.  Outcomes are applied against the *live* state so that a late
// response from a superseded request (older sequence number) is discarded.

import { ApiError } from "./api.js";
import {
  FormState,
  beginRequest,
  completeRequest,
  failRequest,
  withFieldErrors,
} from "./state.js";
import type { PredictRequestBody, PredictResponse } from "./types.js";
import { FormValues, toRequestBody, validateForm } from "./validate.js";

export type PostFn = (body: PredictRequestBody) => Promise<PredictResponse>;

export interface StateStore {
  get: () => FormState;
  set: (state: FormState) => void;
}

/**
 * Run one submit attempt.  Invalid numeric input or an already-in-flight
 * request never reaches the network.  Resolves with the state after this
 * attempt settles (which may be unchanged if the attempt was gated or its
 * response arrived stale).
 */
export async function submitForm(
  store: StateStore,
  values: FormValues,
  post: PostFn,
): Promise<FormState> {
  const validation = validateForm(values);
  if (!validation.valid) {
    const next = withFieldErrors(store.get(), validation.errors as Record<string, string>);
    store.set(next);
    return next;
  }
  const begun = beginRequest(store.get());
  if (begun === null) {
    return store.get(); // a request is already in flight; no new call
  }
  store.set(begun.state);
  try {
    const response = await post(toRequestBody(values));
    const next = completeRequest(store.get(), begun.sequence, response);
    store.set(next);
    return next;
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    const fieldErrors = err instanceof ApiError ? err.fieldErrors : {};
    const next = failRequest(store.get(), begun.sequence, message, fieldErrors);
    store.set(next);
    return next;
  }
}
