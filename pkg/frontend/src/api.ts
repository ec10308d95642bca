/** Thin client for the segmentation service. */

import type { ResultBundle } from "./state.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface SessionInfo {
  id: string;
  width: number;
  height: number;
}

export interface SeedsBody {
  objects: { id: number; points: [number, number][] }[];
}

export interface PollOptions {
  intervalMs?: number;
  maxIntervalMs?: number;
  backoff?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = await response.json();
    return body.error ?? JSON.stringify(body);
  } catch {
    return `HTTP ${response.status}`;
  }
}

export class ServiceClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    return this.fetchImpl(`${this.baseUrl}${path}`, init);
  }

  async createSession(image: ArrayBuffer | Uint8Array | Blob): Promise<SessionInfo> {
    const response = await this.request("/sessions", { method: "POST", body: image as BodyInit });
    if (response.status !== 201) throw new ApiError(response.status, await errorMessage(response));
    return response.json();
  }

  imageUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/image`;
  }

  async startSegment(
    sessionId: string,
    seeds: SeedsBody,
    config: Record<string, unknown> = {},
  ): Promise<{ revision: number }> {
    const response = await this.request(`/sessions/${sessionId}/segment`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ seeds, config }),
    });
    if (response.status !== 202) throw new ApiError(response.status, await errorMessage(response));
    return response.json();
  }

  async getResult(
    sessionId: string,
    revision: number,
  ): Promise<{ done: boolean; result?: ResultBundle }> {
    const response = await this.request(`/sessions/${sessionId}/result?rev=${revision}`);
    if (response.status === 409) return { done: false };
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    const body = await response.json();
    return { done: true, result: body as ResultBundle };
  }

  /** Poll a revision until it finishes; 1s interval with gentle backoff. */
  async pollResult(
    sessionId: string,
    revision: number,
    options: PollOptions = {},
  ): Promise<ResultBundle> {
    const sleep = options.sleep ?? defaultSleep;
    const backoff = options.backoff ?? 1.5;
    const maxInterval = options.maxIntervalMs ?? 5000;
    let interval = options.intervalMs ?? 1000;
    for (;;) {
      const outcome = await this.getResult(sessionId, revision);
      if (outcome.done && outcome.result) return outcome.result;
      await sleep(interval);
      interval = Math.min(interval * backoff, maxInterval);
    }
  }

  async autoseed(
    sessionId: string,
    k: number,
  ): Promise<{ seeds: SeedsBody; diagnostics: Record<string, unknown> }> {
    const response = await this.request(`/sessions/${sessionId}/autoseed`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ k }),
    });
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return response.json();
  }
}
