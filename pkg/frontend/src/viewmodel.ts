// Pure render model: everything the page shows is derived here, with no DOM
// access, so the mapping from API responses to pixels is unit-testable.

import type { PredictResponse } from "./api.js";

export interface ConfidenceBar {
  label: string;
  confidence: number;
  percent: string; // e.g. "62.0%"
}

export interface ResultViewModel {
  bars: ConfidenceBar[];
  topLabel: string | null;
  topConfidence: number;
  overlays: { lime?: string; gradcam?: string }; // data URLs
  toggleEnabled: boolean; // both overlays present
  warnings: string[];
  qualityPassed: boolean;
  droppedLabels: string[]; // labels the service sent but /classes never listed
  modelId: string;
}

const asDataUrl = (b64: string) => `data:image/png;base64,${b64}`;

export function buildResultViewModel(
  resp: PredictResponse,
  knownClasses: string[],
  topN = 3,
): ResultViewModel {
  const known = new Set(knownClasses);
  const dropped: string[] = [];
  const usable = resp.predictions.filter((p) => {
    if (known.has(p.label)) return true;
    dropped.push(p.label);
    return false;
  });

  const bars = usable.slice(0, topN).map((p) => ({
    label: p.label,
    confidence: p.confidence,
    percent: `${(100 * p.confidence).toFixed(1)}%`,
  }));

  const overlays: { lime?: string; gradcam?: string } = {};
  if (resp.explanations?.lime) overlays.lime = asDataUrl(resp.explanations.lime);
  if (resp.explanations?.gradcam) overlays.gradcam = asDataUrl(resp.explanations.gradcam);

  return {
    bars,
    topLabel: bars.length ? bars[0].label : null,
    topConfidence: bars.length ? bars[0].confidence : 0,
    overlays,
    toggleEnabled: Boolean(overlays.lime && overlays.gradcam),
    warnings: resp.warnings ?? [],
    qualityPassed: resp.quality.passed,
    droppedLabels: dropped,
    modelId: resp.model_id,
  };
}
