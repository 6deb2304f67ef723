/**
 * HTTP client for the codecascade service.
 *
 * The transcript stream is read with fetch + ReadableStream rather than
 * EventSource so the same code runs in browsers and in node tests; the
 * server's SSE `id:` field doubles as the resume cursor.
 */

import type {
  Metrics,
  Pending,
  QueryStatus,
  StoreRecord,
  SubmitResponse,
  TranscriptEvent,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export interface TranscriptHandlers {
  onEvent: (event: TranscriptEvent) => void;
  onError?: (error: unknown) => void;
  onClose?: () => void;
}

export interface Subscription {
  abort: () => void;
  done: Promise<void>;
}

export class ConsoleClient {
  constructor(private readonly baseUrl: string) {}

  async submitQuery(
    query: string,
    api: string,
    keyEnv: string,
    id?: string,
  ): Promise<SubmitResponse> {
    const response = await fetch(`${this.baseUrl}/queries`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ query, api, key_env: keyEnv, id }),
    });
    return asJson<SubmitResponse>(response);
  }

  async queryStatus(queryId: string): Promise<QueryStatus> {
    return asJson<QueryStatus>(await fetch(`${this.baseUrl}/queries/${queryId}`));
  }

  async pending(): Promise<Pending> {
    return asJson<Pending>(await fetch(`${this.baseUrl}/pending`));
  }

  async metrics(): Promise<Metrics> {
    return asJson<Metrics>(await fetch(`${this.baseUrl}/metrics`));
  }

  async storeRecords(redact = true): Promise<StoreRecord[]> {
    const body = await asJson<{ records: StoreRecord[] }>(
      await fetch(`${this.baseUrl}/store?redact=${redact}`),
    );
    return body.records;
  }

  async postVerdict(queryId: string, success: boolean): Promise<void> {
    const response = await fetch(`${this.baseUrl}/feedback`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ query_id: queryId, success }),
    });
    await asJson<{ recorded: boolean }>(response);
  }

  /**
   * Stream a query's transcript events. Pass `afterSeq` to resume after a
   * dropped connection; events up to and including that seq are skipped
   * server-side, so no turn is ever delivered twice.
   */
  subscribeTranscript(
    queryId: string,
    handlers: TranscriptHandlers,
    afterSeq = -1,
  ): Subscription {
    const controller = new AbortController();
    const done = (async () => {
      const response = await fetch(
        `${this.baseUrl}/queries/${queryId}/events?after=${afterSeq}`,
        { signal: controller.signal, headers: { accept: "text/event-stream" } },
      );
      if (!response.ok || !response.body) {
        throw new ApiError(response.status, "transcript stream unavailable");
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      let eventType = "";
      let data = "";
      for (;;) {
        const { value, done: finished } = await reader.read();
        if (finished) break;
        buffer += decoder.decode(value, { stream: true });
        let newline;
        while ((newline = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, newline).replace(/\r$/, "");
          buffer = buffer.slice(newline + 1);
          if (line.startsWith("event: ")) {
            eventType = line.slice(7);
          } else if (line.startsWith("data: ")) {
            data = line.slice(6);
          } else if (line === "" && eventType && data) {
            handlers.onEvent({ type: eventType, data: JSON.parse(data) } as TranscriptEvent);
            eventType = "";
            data = "";
          }
        }
      }
    })();
    const settled = done
      .then(() => handlers.onClose?.())
      .catch((error: unknown) => {
        if ((error as { name?: string }).name !== "AbortError") {
          handlers.onError?.(error);
        } else {
          handlers.onClose?.();
        }
      });
    return { abort: () => controller.abort(), done: settled };
  }
}
