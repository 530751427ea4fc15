// Advisory triage banding over the classifier output. This is a UI-layer
// heuristic for prioritizing review; it is not a diagnosis and the referral
// decision stays with a clinician.

import type { ResultViewModel } from "./viewmodel.js";

export type TriageDecision = "urgent-referral" | "clinician-review" | "routine-monitoring";

export interface TriageAssessment {
  decision: TriageDecision;
  rationale: string[];
}

// Conditions where a confident top-1 should jump the queue.
const URGENT_LABELS = new Set([
  "Arsenic",
  "Melanoma",
  "Basal Cell Carcinoma",
  "Squamous Cell Carcinoma",
  "Actinic Keratosis",
]);

const CONFIDENCE_FLOOR = 0.5;

export function assessTriage(vm: ResultViewModel): TriageAssessment {
  const rationale: string[] = [];

  if (!vm.topLabel) {
    return { decision: "clinician-review", rationale: ["no usable prediction returned"] };
  }
  if (!vm.qualityPassed) {
    rationale.push("image quality check failed; model output may be unreliable");
  }
  if (vm.topConfidence < CONFIDENCE_FLOOR) {
    rationale.push(`top-1 confidence ${(100 * vm.topConfidence).toFixed(1)}% below the ${100 * CONFIDENCE_FLOOR}% floor`);
  }
  if (rationale.length > 0) {
    return { decision: "clinician-review", rationale };
  }

  if (URGENT_LABELS.has(vm.topLabel)) {
    return {
      decision: "urgent-referral",
      rationale: [`${vm.topLabel} predicted at ${(100 * vm.topConfidence).toFixed(1)}%`],
    };
  }
  return {
    decision: "routine-monitoring",
    rationale: [`${vm.topLabel} predicted at ${(100 * vm.topConfidence).toFixed(1)}%; no urgent-category match`],
  };
}

export function buildTriageSummary(vm: ResultViewModel, assessment: TriageAssessment): string {
  const lines = [
    "lesion triage summary",
    `decision: ${assessment.decision}`,
    `top prediction: ${vm.topLabel ?? "none"} (${vm.bars.length ? vm.bars[0].percent : "n/a"})`,
    "",
    "ranked predictions:",
    ...vm.bars.map((b, i) => `  ${i + 1}. ${b.label} ${b.percent}`),
    "",
    `rationale: ${assessment.rationale.join("; ")}`,
    `image quality passed: ${vm.qualityPassed}`,
  ];
  if (vm.warnings.length) {
    lines.push("warnings:");
    for (const w of vm.warnings) lines.push(`  - ${w}`);
  }
  lines.push(`model: ${vm.modelId}`);
  lines.push("advisory output; not a diagnosis");
  return lines.join("\n");
}
