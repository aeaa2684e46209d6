// DOM wiring: one form, one results panel, no routing.  All inference stays
// server-side; this file only collects input, calls the service, and renders
// the last completed response.

import { postPredict } from "./api.js";
import { Bar, barWidthPercent, categoryBars, compositeBars, diseaseBars } from "./bars.js";
import { submitForm } from "./controller.js";
import { FormState, initialState, markDirty } from "./state.js";
import type { PredictResponse } from "./types.js";
import {
  FormValues,
  NUMERIC_FIELDS,
  TEXT_FIELDS,
  emptyForm,
  validateForm,
} from "./validate.js";

const TEXT_LABELS: Record<string, string> = {
  chronic: "Chronic diseases",
  surgery: "Surgery history",
  therapy: "Radiotherapy history",
  usage: "Medication usage",
  symptom: "Observed symptoms",
  allergy: "Allergy history",
};

const NUMERIC_LABELS: Record<string, string> = {
  age: "Age (years)",
  height: "Height (cm)",
  weight: "Weight (kg)",
  duration: "Symptom duration (days)",
};

export interface AppOptions {
  baseUrl: string;
}

export function mountApp(root: HTMLElement, options: AppOptions): void {
  let state: FormState = initialState();
  let globalView = false;

  root.innerHTML = "";
  const form = document.createElement("form");
  form.className = "triage-form";
  const results = document.createElement("section");
  results.className = "results";

  const inputs = new Map<string, HTMLTextAreaElement | HTMLInputElement | HTMLSelectElement>();
  const inlineMessages = new Map<string, HTMLElement>();

  const addField = (
    name: string,
    label: string,
    control: HTMLTextAreaElement | HTMLInputElement | HTMLSelectElement,
  ) => {
    const wrapper = document.createElement("label");
    wrapper.className = "field";
    const caption = document.createElement("span");
    caption.textContent = label;
    const message = document.createElement("em");
    message.className = "field-message";
    wrapper.append(caption, control, message);
    form.append(wrapper);
    inputs.set(name, control);
    inlineMessages.set(name, message);
    control.addEventListener("input", () => {
      state = markDirty(state);
      showInlineValidation();
    });
  };

  for (const field of TEXT_FIELDS) {
    const area = document.createElement("textarea");
    area.name = field;
    area.rows = 2;
    addField(field, TEXT_LABELS[field] ?? field, area);
  }
  for (const field of NUMERIC_FIELDS) {
    const input = document.createElement("input");
    input.name = field;
    input.type = "text";
    input.inputMode = "decimal";
    addField(field, NUMERIC_LABELS[field] ?? field, input);
  }
  const gender = document.createElement("select");
  for (const value of ["female", "male"]) {
    gender.append(new Option(value, value));
  }
  addField("gender", "Gender", gender);
  const pregnancy = document.createElement("select");
  for (const value of ["unknown", "not_pregnant", "pregnant"]) {
    pregnancy.append(new Option(value.replace("_", " "), value));
  }
  addField("pregnancy", "Pregnancy", pregnancy);

  const apiField = document.createElement("input");
  apiField.type = "text";
  apiField.value = options.baseUrl;
  addField("api", "Service URL", apiField);

  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "Predict";
  form.append(submit);

  const status = document.createElement("p");
  status.className = "status";
  form.append(status);

  const disclaimer = document.createElement("p");
  disclaimer.className = "disclaimer";
  disclaimer.textContent =
    "Research prototype. Output is not medical advice; consult a clinician.";

  const readValues = (): FormValues => {
    const values = emptyForm();
    for (const field of TEXT_FIELDS) {
      values[field] = (inputs.get(field) as HTMLTextAreaElement).value;
    }
    for (const field of NUMERIC_FIELDS) {
      values[field] = (inputs.get(field) as HTMLInputElement).value;
    }
    values.gender = gender.value as FormValues["gender"];
    values.pregnancy = pregnancy.value as FormValues["pregnancy"];
    return values;
  };

  const showInlineValidation = () => {
    const { errors, warnings } = validateForm(readValues());
    for (const [name, element] of inlineMessages) {
      const error = (errors as Record<string, string>)[name];
      const warning = (warnings as Record<string, string>)[name];
      const fieldError = state.fieldErrors[name];
      element.textContent = error ?? fieldError ?? warning ?? "";
      element.classList.toggle("error", Boolean(error ?? fieldError));
    }
  };

  const barList = (title: string, bars: Bar[]) => {
    const block = document.createElement("div");
    const heading = document.createElement("h3");
    heading.textContent = title;
    block.append(heading);
    for (const bar of bars) {
      const row = document.createElement("div");
      row.className = "bar-row" + (bar.highlighted ? " selected" : "");
      const label = document.createElement("span");
      label.textContent = `${bar.label} ${(bar.value * 100).toFixed(1)}%`;
      const track = document.createElement("div");
      track.className = "bar-track";
      const fill = document.createElement("div");
      fill.className = "bar-fill";
      fill.style.width = `${barWidthPercent(bar.value, bars)}%`;
      track.append(fill);
      row.append(label, track);
      block.append(row);
    }
    return block;
  };

  const renderResults = () => {
    results.innerHTML = "";
    if (state.error) {
      const error = document.createElement("p");
      error.className = "error";
      error.textContent = state.error;
      results.append(error);
    }
    if (!state.displayed) return;
    const response: PredictResponse = state.displayed.response;
    results.append(barList("Categories", categoryBars(response)));
    const toggle = document.createElement("button");
    toggle.type = "button";
    toggle.textContent = globalView ? "Show selected category" : "Show global view";
    toggle.addEventListener("click", () => {
      globalView = !globalView;
      renderResults();
    });
    if (globalView) {
      results.append(barList("All diseases (composite scores)", compositeBars(response)));
    } else {
      results.append(
        barList(`Diseases in ${response.selected_category}`, diseaseBars(response)),
      );
    }
    results.append(toggle);
    const version = document.createElement("p");
    version.className = "version";
    version.textContent = `model ${response.model_version}`;
    results.append(version);
  };

  const render = () => {
    submit.disabled = state.inFlight;
    status.textContent = state.inFlight ? "predicting..." : "";
    showInlineValidation();
    renderResults();
  };

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const store = {
      get: () => state,
      set: (next: FormState) => {
        state = next;
        render();
      },
    };
    void submitForm(store, readValues(), (body) =>
      postPredict(apiField.value.replace(/\/$/, ""), body),
    );
  });

  root.append(form, results, disclaimer);
  render();
}
