// Typed client for the gradecast inference service. Every number shown in
// the UI comes from these responses verbatim; the client never computes
// predictions, intervals or deltas itself.

export interface TranscriptRow {
  course: string;
  term: number;
  grade: number;
}

export interface Interval {
  level: number;
  lower: number;
  upper: number;
}

export interface PredictionSummary {
  mean: number;
  variance: number;
  interval: Interval;
  letter: string;
  at_risk: boolean;
  seed?: number;
}

export interface WhatIfResponse {
  base: PredictionSummary;
  counterfactual: PredictionSummary;
  delta: number;
  seed: number;
}

export interface InfluenceEntry {
  prior: string;
  grade: number;
  counterfactual: number;
  counterfactual_clipped: number;
  influence: number;
}

export interface InfluenceReport {
  student: string;
  target: string;
  base: number;
  base_clipped: number;
  entries: InfluenceEntry[];
}

export interface ModelInfo {
  course: string;
  families: string[];
  priors: string[];
}

export interface Override {
  course: string;
  new_grade: number;
}

export interface ServiceError {
  error: string;
  detail: string;
}

export class ApiError extends Error {
  constructor(public status: number, public body: ServiceError) {
    super(`${body.error}: ${body.detail}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    const payload = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, payload as ServiceError);
    }
    return payload as T;
  }

  async listModels(signal?: AbortSignal): Promise<ModelInfo[]> {
    const resp = await this.fetchImpl(this.baseUrl + "/models", { signal });
    const payload = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, payload as ServiceError);
    }
    return (payload as { models: ModelInfo[] }).models;
  }

  predict(transcript: TranscriptRow[], target: string, signal?: AbortSignal) {
    return this.post<PredictionSummary>("/predict", { transcript, target }, signal);
  }

  explain(transcript: TranscriptRow[], target: string, k: number, signal?: AbortSignal) {
    return this.post<InfluenceReport>("/explain", { transcript, target, k }, signal);
  }

  whatIf(
    transcript: TranscriptRow[],
    target: string,
    overrides: Override[],
    signal?: AbortSignal,
  ) {
    return this.post<WhatIfResponse>("/whatif", { transcript, target, overrides }, signal);
  }
}
