import { describe, expect, it } from "vitest";

import { emptyForm, toRequestBody, validateForm } from "../src/validate.js";

describe("validateForm", () => {
  it("accepts a fully empty form but nudges about symptoms", () => {
    const result = validateForm(emptyForm());
    expect(result.valid).toBe(true);
    expect(result.errors).toEqual({});
    expect(result.warnings.symptom).toMatch(/recommended/);
  });

  it("rejects a negative age", () => {
    const values = { ...emptyForm(), age: "-3" };
    const result = validateForm(values);
    expect(result.valid).toBe(false);
    expect(result.errors.age).toMatch(/non-negative/);
  });

  it("rejects non-numeric input", () => {
    const values = { ...emptyForm(), height: "tall" };
    expect(validateForm(values).errors.height).toBeDefined();
  });

  it("rejects infinity", () => {
    const values = { ...emptyForm(), weight: "Infinity" };
    expect(validateForm(values).valid).toBe(false);
  });

  it("accepts decimals and zero", () => {
    const values = { ...emptyForm(), age: "41.5", duration: "0" };
    const result = validateForm(values);
    expect(result.valid).toBe(true);
  });

  it("does not warn when symptoms are present", () => {
    const values = { ...emptyForm(), symptom: "cough" };
    expect(validateForm(values).warnings.symptom).toBeUndefined();
  });
});

describe("toRequestBody", () => {
  it("parses numbers and nulls empty fields", () => {
    const values = { ...emptyForm(), symptom: "fever", age: "40", gender: "male" as const };
    const body = toRequestBody(values);
    expect(body.age).toBe(40);
    expect(body.height).toBeNull();
    expect(body.symptom).toBe("fever");
    expect(body.gender).toBe("male");
    expect(body.top_k_categories).toBe(3);
    expect(body.top_k_diseases).toBe(10);
  });

  it("throws on invalid numerics instead of sending garbage", () => {
    const values = { ...emptyForm(), age: "-3" };
    expect(() => toRequestBody(values)).toThrow(/age/);
  });
});
