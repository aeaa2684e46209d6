// Client-side validation mirroring the server's request invariants:
// numeric fields must be empty or finite non-negative numbers; all text
// fields are optional, but an empty symptom gets a non-blocking nudge.

import type { PredictRequestBody } from "./types.js";

export const TEXT_FIELDS = [
  "chronic",
  "surgery",
  "therapy",
  "usage",
  "symptom",
  "allergy",
] as const;

export const NUMERIC_FIELDS = ["age", "height", "weight", "duration"] as const;

export type TextField = (typeof TEXT_FIELDS)[number];
export type NumericField = (typeof NUMERIC_FIELDS)[number];

export interface FormValues {
  chronic: string;
  surgery: string;
  therapy: string;
  usage: string;
  symptom: string;
  allergy: string;
  age: string;
  height: string;
  weight: string;
  duration: string;
  gender: "female" | "male";
  pregnancy: "not_pregnant" | "pregnant" | "unknown";
}

export interface ValidationResult {
  valid: boolean;
  errors: Partial<Record<NumericField, string>>;
  warnings: Partial<Record<TextField, string>>;
}

export function emptyForm(): FormValues {
  return {
    chronic: "",
    surgery: "",
    therapy: "",
    usage: "",
    symptom: "",
    allergy: "",
    age: "",
    height: "",
    weight: "",
    duration: "",
    gender: "female",
    pregnancy: "unknown",
  };
}

function parseNumeric(raw: string): number | null | undefined {
  const trimmed = raw.trim();
  if (trimmed === "") return null;
  const value = Number(trimmed);
  if (!Number.isFinite(value) || value < 0) return undefined;
  return value;
}

export function validateForm(values: FormValues): ValidationResult {
  const errors: Partial<Record<NumericField, string>> = {};
  for (const field of NUMERIC_FIELDS) {
    if (parseNumeric(values[field]) === undefined) {
      errors[field] = "must be a non-negative number";
    }
  }
  const warnings: Partial<Record<TextField, string>> = {};
  if (values.symptom.trim() === "") {
    warnings.symptom = "describing symptoms is recommended";
  }
  return { valid: Object.keys(errors).length === 0, errors, warnings };
}

export function toRequestBody(
  values: FormValues,
  topKCategories = 3,
  topKDiseases = 10,
): PredictRequestBody {
  const numeric = (field: NumericField): number | null => {
    const parsed = parseNumeric(values[field]);
    if (parsed === undefined) {
      throw new Error(`invalid ${field}; validate before building the request`);
    }
    return parsed;
  };
  return {
    chronic: values.chronic,
    surgery: values.surgery,
    therapy: values.therapy,
    usage: values.usage,
    symptom: values.symptom,
    allergy: values.allergy,
    age: numeric("age"),
    height: numeric("height"),
    weight: numeric("weight"),
    duration: numeric("duration"),
    gender: values.gender,
    pregnancy: values.pregnancy,
    top_k_categories: topKCategories,
    top_k_diseases: topKDiseases,
  };
}
