// Parity against a recorded mock server: every number that reaches the
// session state must be byte-for-byte what the server sent. The client adds
// no arithmetic of its own.

import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";
import type { FetchLike } from "../src/api.js";
import {
  initialState,
  setPendingOverride,
  withPrediction,
  withTranscript,
  withTargets,
  withWhatIf,
} from "../src/state.js";

const RECORDED: Record<string, unknown> = {
  "/models": {
    models: [{ course: "T-000", families: ["MLP"], priors: ["P-001", "P-002"] }],
  },
  "/predict": {
    mean: 2.3456789,
    variance: 0.0987654,
    interval: { level: 0.95, lower: 1.7304, upper: 2.9609 },
    letter: "C+",
    at_risk: false,
    seed: 123456,
  },
  "/whatif": {
    base: {
      mean: 2.3456789,
      variance: 0.0987654,
      interval: { level: 0.95, lower: 1.7304, upper: 2.9609 },
      letter: "C+",
      at_risk: false,
    },
    counterfactual: {
      mean: 2.9999111,
      variance: 0.1234,
      interval: { level: 0.95, lower: 2.3111, upper: 3.6887 },
      letter: "B",
      at_risk: false,
    },
    delta: 0.6542322,
    seed: 123456,
  },
};

const calls: { path: string; body: unknown }[] = [];

const mockFetch: FetchLike = async (input, init) => {
  const path = input.replace(/^https?:\/\/[^/]+/, "");
  const body = init?.body ? JSON.parse(init.body as string) : null;
  calls.push({ path, body });
  const payload = RECORDED[path];
  const target = (body as { target?: string } | null)?.target;
  if (!payload || (target && target !== "T-000")) {
    return new Response(JSON.stringify({ error: "unknown_course", detail: "x" }),
      { status: 404, headers: { "Content-Type": "application/json" } });
  }
  return new Response(JSON.stringify(payload),
    { status: 200, headers: { "Content-Type": "application/json" } });
};

const ROWS = [
  { course: "P-001", term: 0, grade: 3.0 },
  { course: "P-002", term: 1, grade: 2.33 },
];

describe("mock-server parity", () => {
  const api = new ApiClient("", mockFetch);

  it("model list flows into targets untouched", async () => {
    const models = await api.listModels();
    const s = withTargets(initialState(), models.map((m) => m.course));
    expect(s.targets).toEqual(["T-000"]);
  });

  it("prediction fields shown equal the recorded response exactly", async () => {
    let s = withTranscript(withTargets(initialState(), ["T-000"]), "s1", ROWS);
    const prediction = await api.predict(s.transcript, "T-000");
    s = withPrediction(s, prediction, null);
    const recorded = RECORDED["/predict"] as typeof prediction;
    expect(s.prediction!.mean).toBe(recorded.mean);
    expect(s.prediction!.variance).toBe(recorded.variance);
    expect(s.prediction!.interval).toEqual(recorded.interval);
    expect(s.prediction!.letter).toBe(recorded.letter);
  });

  it("what-if slider flow displays the server delta, and reset gives 0", async () => {
    let s = withTranscript(withTargets(initialState(), ["T-000"]), "s1", ROWS);
    s = setPendingOverride(s, "P-001", 4.0);
    const result = await api.whatIf(s.transcript, "T-000", s.pendingOverrides);
    s = withWhatIf(s, s.pendingOverrides, result);
    const recorded = RECORDED["/whatif"] as typeof result;
    expect(s.committedScenario!.result.delta).toBe(recorded.delta);
    expect(s.committedScenario!.result.counterfactual.mean)
      .toBe(recorded.counterfactual.mean);
    // slider moved back to the actual grade: the override list empties, and
    // a reset request would carry no overrides at all
    s = setPendingOverride(s, "P-001", 3.0);
    expect(s.pendingOverrides).toEqual([]);
  });

  it("requests carry the transcript verbatim", async () => {
    calls.length = 0;
    await api.predict(ROWS, "T-000");
    expect(calls[0].body).toEqual({ transcript: ROWS, target: "T-000" });
  });

  it("service errors surface as ApiError with the server detail", async () => {
    await expect(api.predict(ROWS, "T-404")).rejects.toThrowError(ApiError);
  });
});
