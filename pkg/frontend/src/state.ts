// Form/request state machine.  One request may be in flight at a time;
// every request carries a sequence number and only the newest sequence may
// update the displayed results, so late responses from superseded requests
// are discarded.

import type { PredictResponse } from "./types.js";

export interface FormState {
  dirty: boolean;
  inFlight: boolean;
  sequence: number;
  displayed: { sequence: number; response: PredictResponse } | null;
  error: string | null;
  fieldErrors: Record<string, string>;
}

export function initialState(): FormState {
  return {
    dirty: false,
    inFlight: false,
    sequence: 0,
    displayed: null,
    error: null,
    fieldErrors: {},
  };
}

export function markDirty(state: FormState): FormState {
  return { ...state, dirty: true };
}

export function withFieldErrors(
  state: FormState,
  fieldErrors: Record<string, string>,
): FormState {
  return { ...state, fieldErrors, error: null };
}

/** Start a request; returns null when one is already in flight. */
export function beginRequest(
  state: FormState,
): { state: FormState; sequence: number } | null {
  if (state.inFlight) return null;
  const sequence = state.sequence + 1;
  return {
    state: { ...state, inFlight: true, sequence, error: null, fieldErrors: {} },
    sequence,
  };
}

/** Apply a response; stale sequences leave the state untouched. */
export function completeRequest(
  state: FormState,
  sequence: number,
  response: PredictResponse,
): FormState {
  if (sequence !== state.sequence) return state;
  return {
    ...state,
    inFlight: false,
    dirty: false,
    displayed: { sequence, response },
    error: null,
    fieldErrors: {},
  };
}

export function failRequest(
  state: FormState,
  sequence: number,
  message: string,
  fieldErrors: Record<string, string> = {},
): FormState {
  if (sequence !== state.sequence) return state;
  return { ...state, inFlight: false, error: message, fieldErrors };
}
