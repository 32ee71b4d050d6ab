// DOM wiring for the advisor client. One in-flight request per action;
// newer clicks abort older requests. All displayed numbers are formatted
// copies of server-response fields held in the session state.

import { ApiClient, ApiError } from "./api.js";
import type { Override } from "./api.js";
import {
  SessionState,
  canPredict,
  clearPendingOverrides,
  gradeOf,
  initialState,
  lowConfidence,
  setPendingOverride,
  withError,
  withPrediction,
  withTarget,
  withTargets,
  withTranscript,
  withWhatIf,
} from "./state.js";
import { TranscriptParseError, parseTranscript } from "./transcript.js";

const api = new ApiClient("");
let state: SessionState = initialState();
let inflight: AbortController | null = null;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function fmt(x: number, digits = 2): string {
  return x.toFixed(digits);
}

function beginRequest(): AbortSignal {
  if (inflight) inflight.abort();
  inflight = new AbortController();
  return inflight.signal;
}

function setState(next: SessionState): void {
  state = next;
  render();
}

// ---------------------------------------------------------------------------
// rendering

function renderTranscript(): void {
  const tbody = $("transcript-body");
  tbody.innerHTML = "";
  for (const row of state.transcript) {
    const tr = document.createElement("tr");
    tr.innerHTML = `<td>${row.course}</td><td>${row.term}</td><td>${fmt(row.grade)}</td>`;
    tbody.appendChild(tr);
  }
  $("student-label").textContent = state.studentId ?? "(none)";
  ($("predict-btn") as HTMLButtonElement).disabled = !canPredict(state);
}

function renderTargets(): void {
  const select = $("target-select") as HTMLSelectElement;
  select.innerHTML = "";
  for (const target of state.targets) {
    const opt = document.createElement("option");
    opt.value = target;
    opt.textContent = target;
    opt.selected = target === state.selectedTarget;
    select.appendChild(opt);
  }
}

function renderPrediction(): void {
  const panel = $("prediction-panel");
  const pred = state.prediction;
  if (!pred) {
    panel.classList.add("hidden");
    return;
  }
  panel.classList.remove("hidden");
  $("pred-mean").textContent = fmt(pred.mean);
  $("pred-letter").textContent = pred.letter;
  $("pred-interval").textContent =
    `[${fmt(pred.interval.lower)}, ${fmt(pred.interval.upper)}] @ ${pred.interval.level}`;
  const badge = $("risk-badge");
  badge.textContent = pred.at_risk ? "AT RISK" : "on track";
  badge.className = "badge " + (pred.at_risk ? "badge-risk" : "badge-ok");
  badge.classList.toggle("badge-lowconf", lowConfidence(pred));
  $("lowconf-note").classList.toggle("hidden", !lowConfidence(pred));
}

function renderInfluence(): void {
  const box = $("influence-bars");
  box.innerHTML = "";
  const report = state.influence;
  if (!report || report.entries.length === 0) {
    $("influence-panel").classList.add("hidden");
    return;
  }
  $("influence-panel").classList.remove("hidden");
  const top = Math.max(...report.entries.map((e) => Math.abs(e.influence)), 1e-9);
  for (const entry of report.entries) {
    const row = document.createElement("div");
    row.className = "bar-row";
    const width = Math.round((Math.abs(entry.influence) / top) * 100);
    row.innerHTML =
      `<span class="bar-label">${entry.prior}</span>` +
      `<span class="bar-track"><span class="bar-fill${entry.influence < 0 ? " bar-neg" : ""}"` +
      ` style="width:${width}%"></span></span>` +
      `<span class="bar-value">${fmt(entry.influence, 3)}</span>` +
      `<span class="bar-grade">grade ${fmt(entry.grade)}</span>`;
    box.appendChild(row);
  }
}

function renderSliders(): void {
  const box = $("sliders");
  box.innerHTML = "";
  if (!state.prediction || !state.influence) {
    $("whatif-panel").classList.add("hidden");
    return;
  }
  $("whatif-panel").classList.remove("hidden");
  for (const entry of state.influence.entries) {
    const course = entry.prior;
    const current = gradeOf(state, course);
    if (current === null) continue;
    const pending = state.pendingOverrides.find((o) => o.course === course);
    const committed = state.committedScenario?.overrides.find(
      (o) => o.course === course,
    );
    const value = pending?.new_grade ?? committed?.new_grade ?? current;
    const row = document.createElement("div");
    row.className = "slider-row" + (pending ? " pending" : committed ? " committed" : "");
    row.innerHTML =
      `<span class="slider-label">${course}</span>` +
      `<input type="range" min="0" max="4" step="0.01" value="${value}" data-course="${course}">` +
      `<span class="slider-value">${fmt(value)}</span>` +
      `<span class="slider-actual">actual ${fmt(current)}</span>`;
    const input = row.querySelector("input") as HTMLInputElement;
    input.addEventListener("input", () => {
      setState(setPendingOverride(state, course, Number(input.value)));
    });
    box.appendChild(row);
  }
  ($("whatif-btn") as HTMLButtonElement).disabled = false;
  const result = $("whatif-result");
  const scenario = state.committedScenario;
  if (scenario) {
    result.classList.remove("hidden");
    $("base-mean").textContent = fmt(scenario.result.base.mean);
    $("base-interval").textContent =
      `[${fmt(scenario.result.base.interval.lower)}, ${fmt(scenario.result.base.interval.upper)}]`;
    $("cf-mean").textContent = fmt(scenario.result.counterfactual.mean);
    $("cf-interval").textContent =
      `[${fmt(scenario.result.counterfactual.interval.lower)}, ${fmt(scenario.result.counterfactual.interval.upper)}]`;
    $("delta").textContent = fmt(scenario.result.delta, 3);
  } else {
    result.classList.add("hidden");
  }
  const history = $("history-list");
  history.innerHTML = "";
  for (const item of state.history) {
    const li = document.createElement("li");
    const parts = item.overrides
      .map((o) => `${o.course}→${fmt(o.new_grade)}`)
      .join(", ");
    li.textContent = `${parts || "(no overrides)"} : delta ${fmt(item.result.delta, 3)}`;
    history.appendChild(li);
  }
}

function renderError(): void {
  const banner = $("error-banner");
  if (state.error) {
    banner.textContent = state.error;
    banner.classList.remove("hidden");
  } else {
    banner.classList.add("hidden");
  }
}

function render(): void {
  renderTranscript();
  renderTargets();
  renderPrediction();
  renderInfluence();
  renderSliders();
  renderError();
}

// ---------------------------------------------------------------------------
// actions

async function loadModels(): Promise<void> {
  try {
    const infos = await api.listModels(beginRequest());
    setState(withTargets(state, infos.map((m) => m.course)));
  } catch (err) {
    if ((err as Error).name !== "AbortError") {
      setState(withError(state, `could not load model list: ${(err as Error).message}`));
    }
  }
}

function loadTranscriptFromText(text: string): void {
  try {
    const parsed = parseTranscript(text);
    setState(withTranscript(state, parsed.studentId, parsed.rows));
  } catch (err) {
    if (err instanceof TranscriptParseError) {
      setState(withError(state, err.message));
    } else {
      throw err;
    }
  }
}

async function runPredict(): Promise<void> {
  if (!canPredict(state) || !state.selectedTarget) return;
  const signal = beginRequest();
  try {
    const prediction = await api.predict(state.transcript, state.selectedTarget, signal);
    const influence = await api.explain(state.transcript, state.selectedTarget, 5, signal);
    setState(withPrediction(state, prediction, influence));
  } catch (err) {
    if ((err as Error).name === "AbortError") return;
    const message = err instanceof ApiError ? err.message : String(err);
    setState(withError(state, message));
  }
}

async function runWhatIf(): Promise<void> {
  if (!state.selectedTarget) return;
  const overrides: Override[] = [...state.pendingOverrides];
  const signal = beginRequest();
  try {
    const result = await api.whatIf(state.transcript, state.selectedTarget, overrides, signal);
    setState(withWhatIf(state, overrides, result));
  } catch (err) {
    if ((err as Error).name === "AbortError") return;
    const message = err instanceof ApiError ? err.message : String(err);
    // rejected overrides revert; the previous committed view stays
    setState(withError(state, message));
  }
}

export function boot(): void {
  $("load-btn").addEventListener("click", () => {
    const text = ($("transcript-input") as HTMLTextAreaElement).value;
    loadTranscriptFromText(text);
  });
  ($("transcript-file") as HTMLInputElement).addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (file) loadTranscriptFromText(await file.text());
  });
  ($("target-select") as HTMLSelectElement).addEventListener("change", (ev) => {
    setState(withTarget(state, (ev.target as HTMLSelectElement).value));
  });
  $("predict-btn").addEventListener("click", () => void runPredict());
  $("whatif-btn").addEventListener("click", () => void runWhatIf());
  $("reset-btn").addEventListener("click", () => setState(clearPendingOverrides(state)));
  void loadModels();
  render();
}

if (typeof document !== "undefined" && document.getElementById("app-root")) {
  boot();
}
