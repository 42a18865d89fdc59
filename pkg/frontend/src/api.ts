import type { AuditPlan, SourceInfo, SubmitResponse, VerdictBody } from "./types.js";

/** Non-2xx response; carries the status so callers can tell 4xx from 5xx. */
export class HttpError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "HttpError";
  }
}

/** Retry-worthy failures: network drops and server-side errors. */
export function isTransient(err: unknown): boolean {
  return err instanceof HttpError ? err.status >= 500 : true;
}

/** Thin typed client over the audit service HTTP API. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly token: string | null = null,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.token) h["X-Auth-Token"] = this.token;
    return h;
  }

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, { headers: this.headers() });
    if (!resp.ok) throw new HttpError(resp.status, `GET ${path}: HTTP ${resp.status}`);
    return (await resp.json()) as T;
  }

  plan(): Promise<AuditPlan> {
    return this.get<AuditPlan>("/api/plan");
  }

  sourceInfo(clipId: string): Promise<SourceInfo> {
    return this.get<SourceInfo>(`/api/clips/${encodeURIComponent(clipId)}/source-info`);
  }

  async postVerdict(body: VerdictBody): Promise<SubmitResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/verdicts`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new HttpError(resp.status, `POST /api/verdicts: HTTP ${resp.status}`);
    return (await resp.json()) as SubmitResponse;
  }

  spectrogramUrl(clipId: string): string {
    return `${this.baseUrl}/api/clips/${encodeURIComponent(clipId)}/spectrogram.png`;
  }

  sourceSpectrogramUrl(clipId: string): string {
    return `${this.baseUrl}/api/clips/${encodeURIComponent(clipId)}/source-spectrogram.png`;
  }

  audioUrl(clipId: string): string {
    return `${this.baseUrl}/api/clips/${encodeURIComponent(clipId)}/audio.wav`;
  }
}
