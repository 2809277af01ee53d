/** Typed client for the review service. All numbers arrive server-computed. */

export interface Candidate {
  type: string;
  probability: number;
}

export interface Excerpt {
  line: number | null;
  text: string;
}

export interface Suggestion {
  symbol_id: string;
  name: string;
  kind: string;
  excerpt: Excerpt;
  candidates: Candidate[];
  confidence: number;
  needs_manual: boolean;
}

export interface SuggestionsPayload {
  file: string;
  suggestions: Suggestion[];
}

export interface FileInfo {
  id: string;
  symbols: number;
  pending: number;
}

export interface AcceptResponse {
  accepted: string;
  type: string;
  checker: string | null;
  reranked: string[];
  map_size: number;
}

export interface RejectResponse {
  rejected: string;
  type: string;
  remaining_candidates: number;
  needs_manual: boolean;
}

export interface NeighborRow {
  type: string;
  distance: number;
  provenance: string;
}

export interface LogEntry {
  seq: number;
  symbol_id: string;
  action: "accept" | "reject";
  type: string;
  timestamp: number;
}

export class ServiceError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new ServiceError(`service unreachable: ${String(err)}`, 0);
  }
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ServiceError(detail, response.status);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  createSession(): Promise<{ session_id: string }> {
    return request(`${this.base}/api/session`, { method: "POST" });
  }

  listFiles(sessionId: string): Promise<{ files: FileInfo[] }> {
    return request(`${this.base}/api/files?session=${encodeURIComponent(sessionId)}`);
  }

  suggestions(file: string, sessionId: string): Promise<SuggestionsPayload> {
    const query = `file=${encodeURIComponent(file)}&session=${encodeURIComponent(sessionId)}`;
    return request(`${this.base}/api/suggestions?${query}`);
  }

  accept(sessionId: string, symbolId: string, type: string): Promise<AcceptResponse> {
    return request(`${this.base}/api/accept`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, symbol_id: symbolId, type }),
    });
  }

  reject(sessionId: string, symbolId: string, type: string): Promise<RejectResponse> {
    return request(`${this.base}/api/reject`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, symbol_id: symbolId, type }),
    });
  }

  neighbors(symbolId: string, k: number, sessionId: string): Promise<{ neighbors: NeighborRow[] }> {
    const query =
      `symbol_id=${encodeURIComponent(symbolId)}&k=${k}` +
      `&session=${encodeURIComponent(sessionId)}`;
    return request(`${this.base}/api/neighbors?${query}`);
  }

  decisionLog(sessionId: string): Promise<{ decisions: LogEntry[] }> {
    return request(`${this.base}/api/session/${encodeURIComponent(sessionId)}/log`);
  }

  exportMapUrl(sessionId: string): string {
    return `${this.base}/api/export-map?session=${encodeURIComponent(sessionId)}`;
  }
}
