// DOM controller: wires the page to the API client. All presentation logic
// lives in viewmodel.ts / triage.ts; this file only moves values into
// elements, so it stays thin enough to test with a stubbed API.

import { ApiClient, ApiError, type PredictResponse } from "./api.js";
import { buildResultViewModel, type ResultViewModel } from "./viewmodel.js";
import { assessTriage, buildTriageSummary } from "./triage.js";

export interface BackendApi {
  health(): ReturnType<ApiClient["health"]>;
  classes(): Promise<string[]>;
  predict(file: Blob, opts?: { topK?: number; explain?: "both" }): Promise<PredictResponse>;
}

export class TriageApp {
  private knownClasses: string[] = [];
  private busy = false;
  private vm: ResultViewModel | null = null;

  constructor(
    private readonly api: BackendApi,
    private readonly doc: Document,
  ) {}

  private el<T extends HTMLElement>(id: string): T {
    const node = this.doc.getElementById(id);
    if (!node) throw new Error(`page is missing #${id}`);
    return node as T;
  }

  async init(): Promise<void> {
    const status = this.el<HTMLElement>("status");
    try {
      const [health, classes] = await Promise.all([this.api.health(), this.api.classes()]);
      this.knownClasses = classes;
      status.textContent =
        health.status === "ok"
          ? `model ${health.model_id ?? "?"} ready · ${classes.length} classes`
          : `service ${health.status}`;
    } catch (err) {
      status.textContent = `service unavailable: ${err instanceof Error ? err.message : err}`;
    }

    this.el<HTMLButtonElement>("upload").addEventListener("click", () => {
      const input = this.el<HTMLInputElement>("file");
      const file = input.files?.[0];
      if (file) void this.submit(file);
    });
    for (const id of ["show-lime", "show-gradcam"]) {
      this.el<HTMLInputElement>(id).addEventListener("change", () => this.showOverlay());
    }
  }

  /** Upload one image; ignored while a request is already in flight. */
  async submit(file: Blob): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    const button = this.el<HTMLButtonElement>("upload");
    button.disabled = true;
    try {
      const resp = await this.api.predict(file, { topK: 3, explain: "both" });
      this.vm = buildResultViewModel(resp, this.knownClasses);
      this.render(this.vm);
    } catch (err) {
      const message = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      this.renderWarnings([`request failed — ${message}`]);
    } finally {
      this.busy = false;
      button.disabled = false;
    }
  }

  private render(vm: ResultViewModel): void {
    this.el<HTMLElement>("result").hidden = false;

    const bars = this.el<HTMLElement>("bars");
    bars.textContent = "";
    for (const bar of vm.bars) {
      const row = this.doc.createElement("div");
      row.className = "bar-row";
      const label = this.doc.createElement("span");
      label.className = "bar-label";
      label.textContent = bar.label;
      const track = this.doc.createElement("div");
      track.className = "bar-track";
      const fill = this.doc.createElement("div");
      fill.className = "bar-fill";
      fill.style.width = bar.percent;
      track.appendChild(fill);
      const pct = this.doc.createElement("span");
      pct.className = "bar-pct";
      pct.textContent = bar.percent;
      row.append(label, track, pct);
      bars.appendChild(row);
    }

    const warnings = vm.droppedLabels.length
      ? [...vm.warnings, `ignored unknown labels: ${vm.droppedLabels.join(", ")}`]
      : vm.warnings;
    this.renderWarnings(warnings);

    const lime = this.el<HTMLInputElement>("show-lime");
    const gradcam = this.el<HTMLInputElement>("show-gradcam");
    lime.disabled = gradcam.disabled = !vm.toggleEnabled;
    if (vm.overlays.lime) lime.checked = true;
    else if (vm.overlays.gradcam) gradcam.checked = true;
    this.showOverlay();

    const assessment = assessTriage(vm);
    this.el<HTMLElement>("decision").textContent = assessment.decision;
    const summary = buildTriageSummary(vm, assessment);
    const anchor = this.el<HTMLAnchorElement>("download");
    anchor.href = `data:text/plain;charset=utf-8,${encodeURIComponent(summary)}`;
    anchor.setAttribute("download", "triage-summary.txt");
  }

  private renderWarnings(messages: string[]): void {
    const banner = this.el<HTMLElement>("warnings");
    banner.textContent = "";
    banner.hidden = messages.length === 0;
    for (const message of messages) {
      const item = this.doc.createElement("div");
      item.className = "warning";
      item.textContent = message;
      banner.appendChild(item);
    }
  }

  private showOverlay(): void {
    const img = this.el<HTMLImageElement>("overlay");
    if (!this.vm) {
      img.hidden = true;
      return;
    }
    const wantGradcam = this.el<HTMLInputElement>("show-gradcam").checked;
    const src = wantGradcam
      ? (this.vm.overlays.gradcam ?? this.vm.overlays.lime)
      : (this.vm.overlays.lime ?? this.vm.overlays.gradcam);
    img.hidden = !src;
    if (src) img.src = src;
  }
}

export function boot(baseUrl = ""): TriageApp {
  const app = new TriageApp(new ApiClient(baseUrl), document);
  void app.init();
  return app;
}
