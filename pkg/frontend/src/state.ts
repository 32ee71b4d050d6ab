// Session state and pure transitions. The view layer renders exactly what
// lives here, and everything numeric here was copied from a server response
// (enforced by the no-local-math test). Pending slider overrides are kept
// separate from the committed scenario so the UI can style them apart.

import type {
  InfluenceReport,
  Override,
  PredictionSummary,
  TranscriptRow,
  WhatIfResponse,
} from "./api.js";

// Intervals wider than this (at the 0.95 level) get low-confidence styling.
export const LOW_CONFIDENCE_WIDTH = 1.5;

export interface Scenario {
  overrides: Override[];
  result: WhatIfResponse;
}

export interface SessionState {
  studentId: string | null;
  transcript: TranscriptRow[];
  targets: string[];
  selectedTarget: string | null;
  prediction: PredictionSummary | null;
  influence: InfluenceReport | null;
  pendingOverrides: Override[];
  committedScenario: Scenario | null;
  history: Scenario[];
  error: string | null;
}

export function initialState(): SessionState {
  return {
    studentId: null,
    transcript: [],
    targets: [],
    selectedTarget: null,
    prediction: null,
    influence: null,
    pendingOverrides: [],
    committedScenario: null,
    history: [],
    error: null,
  };
}

export function withTranscript(
  state: SessionState,
  studentId: string | null,
  rows: TranscriptRow[],
): SessionState {
  return {
    ...initialState(),
    targets: state.targets,
    selectedTarget: state.selectedTarget,
    studentId,
    transcript: rows,
  };
}

export function withTargets(state: SessionState, targets: string[]): SessionState {
  const selected =
    state.selectedTarget && targets.includes(state.selectedTarget)
      ? state.selectedTarget
      : targets[0] ?? null;
  return { ...state, targets, selectedTarget: selected };
}

export function withTarget(state: SessionState, target: string): SessionState {
  return {
    ...state,
    selectedTarget: target,
    prediction: null,
    influence: null,
    pendingOverrides: [],
    committedScenario: null,
    history: [],
  };
}

export function withPrediction(
  state: SessionState,
  prediction: PredictionSummary,
  influence: InfluenceReport | null,
): SessionState {
  return { ...state, prediction, influence, error: null };
}

export function lowConfidence(prediction: PredictionSummary): boolean {
  const width = prediction.interval.upper - prediction.interval.lower;
  return width > LOW_CONFIDENCE_WIDTH;
}

export function gradeOf(state: SessionState, course: string): number | null {
  // last-attempt grade shown on sliders; mirrors the backend encoding rule
  let latest: TranscriptRow | null = null;
  for (const row of state.transcript) {
    if (row.course === course && (latest === null || row.term >= latest.term)) {
      latest = row;
    }
  }
  return latest ? latest.grade : null;
}

export function setPendingOverride(
  state: SessionState,
  course: string,
  newGrade: number,
): SessionState {
  const original = gradeOf(state, course);
  const rest = state.pendingOverrides.filter((o) => o.course !== course);
  // sliding back to the student's actual grade clears the override
  const next =
    original !== null && newGrade === original
      ? rest
      : [...rest, { course, new_grade: newGrade }];
  return { ...state, pendingOverrides: next };
}

export function clearPendingOverrides(state: SessionState): SessionState {
  return { ...state, pendingOverrides: [] };
}

export function withWhatIf(
  state: SessionState,
  overrides: Override[],
  result: WhatIfResponse,
): SessionState {
  const scenario: Scenario = { overrides, result };
  return {
    ...state,
    committedScenario: scenario,
    history: [...state.history, scenario],
    pendingOverrides: [],
    error: null,
  };
}

export function withError(state: SessionState, message: string): SessionState {
  // the last completed server response stays on screen; only the error
  // banner and the rejected pending overrides change
  return { ...state, error: message, pendingOverrides: [] };
}

export function canPredict(state: SessionState): boolean {
  return state.transcript.length > 0 && state.selectedTarget !== null;
}
