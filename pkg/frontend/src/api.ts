/** Typed client over the anchoring service JSON endpoints. */

import type {
  ApiErrorBody,
  EditPayload,
  EditResponse,
  MetaQueryResponse,
  PasteSource,
  ReplyResponse,
  SessionView,
  Span,
  ThreadJson,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }

  get code(): ApiErrorBody["code"] {
    return this.body.code;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
    private readonly authToken?: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.authToken) headers["Authorization"] = `Bearer ${this.authToken}`;
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let parsed: ApiErrorBody;
      try {
        parsed = (await response.json()) as ApiErrorBody;
      } catch {
        parsed = { code: "provider_error", message: response.statusText, detail: "" };
      }
      throw new ApiError(response.status, parsed);
    }
    return (await response.json()) as T;
  }

  createSession(text: string, config?: object): Promise<{ session_id: string; version_id: number }> {
    return this.request("POST", "/sessions", { text, config });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  postEdits(sessionId: string, baseVersion: number, edits: EditPayload[]): Promise<EditResponse> {
    return this.request("POST", `/sessions/${sessionId}/edits`, {
      base_version: baseVersion,
      edits,
    });
  }

  metaQuery(sessionId: string, query: string): Promise<MetaQueryResponse> {
    return this.request("POST", `/sessions/${sessionId}/meta-queries`, { query });
  }

  createThread(sessionId: string, span: Span | null, message: string): Promise<ThreadJson> {
    return this.request("POST", `/sessions/${sessionId}/threads`, {
      span: span ?? undefined,
      message,
    });
  }

  replyInThread(threadId: string, message: string): Promise<ReplyResponse> {
    return this.request("POST", `/threads/${threadId}/messages`, { message });
  }

  recordEvent(
    sessionId: string,
    kind: "copy" | "paste" | "snapshot",
    payload: { text?: string; source?: PasteSource },
  ): Promise<{ recorded: boolean; head_version_id: number }> {
    return this.request("POST", `/sessions/${sessionId}/events`, { kind, payload });
  }

  metrics(sessionId: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/sessions/${sessionId}/metrics`);
  }
}
