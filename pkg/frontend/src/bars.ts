// Render models for the ranked probability bars.  Values are taken verbatim
// from the last response; nothing is renormalized or re-scored client-side.

import type { PredictResponse } from "./types.js";

export interface Bar {
  label: string;
  value: number;
  highlighted: boolean;
}

export function categoryBars(response: PredictResponse): Bar[] {
  return response.categories.map((entry) => ({
    label: entry.category,
    value: entry.probability,
    highlighted: entry.category === response.selected_category,
  }));
}

export function diseaseBars(response: PredictResponse): Bar[] {
  return response.diseases.map((entry) => ({
    label: entry.disease,
    value: entry.probability,
    highlighted: false,
  }));
}

export function compositeBars(response: PredictResponse): Bar[] {
  return response.composite.map((entry) => ({
    label: entry.disease,
    value: entry.score,
    highlighted: false,
  }));
}

/** Bar width relative to the largest bar in the list, in percent. */
export function barWidthPercent(value: number, bars: Bar[]): number {
  const max = bars.reduce((acc, bar) => Math.max(acc, bar.value), 0);
  if (max <= 0) return 0;
  return Math.max(0, Math.min(100, (value / max) * 100));
}
