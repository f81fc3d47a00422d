/** Typed client for the tuning service.
 *
 * The solve endpoint streams server-sent events; we consume it with a
 * streaming fetch (EventSource cannot POST), so the same client works in the
 * browser and under node for integration tests.
 */

import type {
  CreateSessionResponse,
  DeltaRequest,
  IndexInfo,
  ParetoPoint,
  Recommendation,
  SolveEvent,
  WhatifReport,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    message: string,
    public status: number,
    public body: unknown,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(base + path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const text = await resp.text();
  const body = text ? JSON.parse(text) : null;
  if (!resp.ok) {
    const msg =
      body && typeof body === "object" && "message" in body
        ? String((body as { message: unknown }).message)
        : `${resp.status} on ${path}`;
    throw new ServiceError(msg, resp.status, body);
  }
  return body as T;
}

export class AdvisorClient {
  constructor(public base: string) {}

  createSession(body: {
    catalog: unknown;
    workload: string;
    constraints?: string;
    dba_candidates?: unknown[];
  }): Promise<CreateSessionResponse> {
    return request(this.base, "/sessions", {
      method: "POST",
      body: JSON.stringify({ constraints: "", dba_candidates: [], ...body }),
    });
  }

  /** Start a solve and surface each stream record through `onEvent`. */
  async solve(
    sessionId: string,
    opts: { gap?: number; time_limit?: number | null },
    onEvent: (ev: SolveEvent) => void,
  ): Promise<Recommendation | null> {
    const resp = await fetch(`${this.base}/sessions/${sessionId}/solve`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ gap: 0.05, ...opts }),
    });
    if (!resp.ok || !resp.body) {
      const body = await resp.json().catch(() => null);
      throw new ServiceError(`solve failed (${resp.status})`, resp.status, body);
    }
    let final: Recommendation | null = null;
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      const { events, rest } = parseSseChunk(buffer);
      buffer = rest;
      for (const ev of events) {
        onEvent(ev);
        if (ev.type === "recommendation") final = ev;
        if (ev.type === "error") throw new ServiceError(ev.message, 422, ev);
      }
    }
    return final;
  }

  stop(sessionId: string): Promise<{ stopping: boolean }> {
    return request(this.base, `/sessions/${sessionId}/stop`, { method: "POST" });
  }

  delta(sessionId: string, body: DeltaRequest): Promise<Recommendation> {
    return request(this.base, `/sessions/${sessionId}/delta`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  pareto(sessionId: string, body: { epsilon?: number; max_points?: number }): Promise<ParetoPoint[]> {
    return request(this.base, `/sessions/${sessionId}/pareto`, {
      method: "POST",
      body: JSON.stringify({ epsilon: 0.05, max_points: 16, ...body }),
    });
  }

  whatif(sessionId: string, indexes: string[]): Promise<WhatifReport> {
    return request(this.base, `/sessions/${sessionId}/whatif`, {
      method: "POST",
      body: JSON.stringify({ indexes }),
    });
  }

  candidates(sessionId: string): Promise<IndexInfo[]> {
    return request(this.base, `/sessions/${sessionId}/candidates`, { method: "GET" });
  }

  recommendation(sessionId: string): Promise<Recommendation> {
    return request(this.base, `/sessions/${sessionId}/recommendation`, { method: "GET" });
  }

  deleteSession(sessionId: string): Promise<{ deleted: string }> {
    return request(this.base, `/sessions/${sessionId}`, { method: "DELETE" });
  }
}

/** Split SSE framing (`data: <json>\n\n`) into parsed events plus the
 * unfinished tail of the buffer. */
export function parseSseChunk(buffer: string): { events: SolveEvent[]; rest: string } {
  const events: SolveEvent[] = [];
  const parts = buffer.split("\n\n");
  const rest = parts.pop() ?? "";
  for (const part of parts) {
    for (const line of part.split("\n")) {
      if (line.startsWith("data: ")) {
        events.push(JSON.parse(line.slice("data: ".length)) as SolveEvent);
      }
    }
  }
  return { events, rest };
}
