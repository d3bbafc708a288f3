/** Thin fetch client over the bounty service API. */

import {
  LeaderboardRow,
  ModelResponse,
  PredictorDoc,
  SubmissionResponse,
  TestReport,
  TranscriptEntry,
  parseModelResponse,
  parseTestReport,
} from "./docs.js";

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`${status}: ${detail}`);
  }
}

async function getJson(url: string): Promise<unknown> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new ApiError(response.status, await response.text());
  }
  return response.json();
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async model(): Promise<ModelResponse> {
    return parseModelResponse(await getJson(this.url("/v1/model")));
  }

  async schema(): Promise<unknown> {
    return getJson(this.url("/v1/schema"));
  }

  async testReport(): Promise<TestReport> {
    return parseTestReport(await getJson(this.url("/v1/test-report")));
  }

  async transcript(): Promise<TranscriptEntry[]> {
    return (await getJson(this.url("/v1/transcript"))) as TranscriptEntry[];
  }

  async leaderboard(): Promise<LeaderboardRow[]> {
    return (await getJson(this.url("/v1/leaderboard"))) as LeaderboardRow[];
  }

  async submit(
    group: PredictorDoc,
    model: PredictorDoc,
    submitterKey: string,
  ): Promise<SubmissionResponse> {
    const response = await fetch(this.url("/v1/submissions"), {
      method: "POST",
      headers: { "X-Submitter-Key": submitterKey, "Content-Type": "application/json" },
      body: JSON.stringify({ group, model }),
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      // the server's diagnostics are surfaced verbatim
      throw new ApiError(response.status, String(payload["detail"] ?? "submission failed"));
    }
    return payload as unknown as SubmissionResponse;
  }
}
