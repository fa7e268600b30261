// Thin typed client for the labeling service. Every error response is a
// JSON object {"error": message}; this surfaces as ApiError with the HTTP
// status attached so callers can tell state conflicts (409) from bad
// requests (400).

import type { CurveInfo, RoundBatch, StatusInfo, SubmitResult } from './types.js';

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class LabelApi {
  private readonly fetchFn: FetchLike;
  private readonly base: string;

  constructor(fetchFn?: FetchLike, base = '') {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
    this.base = base;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      body = null;
    }
    if (!resp.ok) {
      const message =
        body !== null && typeof body === 'object' && 'error' in body
          ? String((body as { error: unknown }).error)
          : `unexpected http ${resp.status}`;
      throw new ApiError(resp.status, message);
    }
    return body as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  status(): Promise<StatusInfo> {
    return this.request<StatusInfo>('/status');
  }

  curve(): Promise<CurveInfo> {
    return this.request<CurveInfo>('/curve');
  }

  /** The batch already awaiting labels, if any (409 otherwise). */
  openBatch(): Promise<RoundBatch> {
    return this.request<RoundBatch>('/batch');
  }

  /** Ask the engine to train and select the next batch. Blocks server-side. */
  nextRound(): Promise<RoundBatch> {
    return this.post<RoundBatch>('/round/next', {});
  }

  submitLabels(labels: Record<string, number>): Promise<SubmitResult> {
    return this.post<SubmitResult>('/labels', labels);
  }
}
