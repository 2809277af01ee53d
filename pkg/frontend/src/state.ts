/** Pure view-state transitions. The UI computes nothing type-related:
 * probabilities, rankings, and re-rank sets all arrive from the service
 * and are only reshaped for display here. Every transition is a plain
 * function so a decision log can replay to the same state. */

import type {
  AcceptResponse,
  FileInfo,
  LogEntry,
  RejectResponse,
  Suggestion,
  SuggestionsPayload,
} from "./api.js";

export interface Decision {
  action: "accept" | "reject";
  type: string;
}

export interface CardView {
  suggestion: Suggestion;
  decided: Decision | null;
  reranked: boolean;
}

export interface AppState {
  sessionId: string | null;
  files: FileInfo[];
  currentFile: string | null;
  cards: CardView[];
  decided: Record<string, Decision>;
  rerankedIds: string[];
  error: string | null;
}

export function initialState(): AppState {
  return {
    sessionId: null,
    files: [],
    currentFile: null,
    cards: [],
    decided: {},
    rerankedIds: [],
    error: null,
  };
}

export function withSession(state: AppState, sessionId: string): AppState {
  return { ...state, sessionId };
}

export function withFiles(state: AppState, files: FileInfo[]): AppState {
  return { ...state, files };
}

export function withError(state: AppState, error: string | null): AppState {
  return { ...state, error };
}

/** Shape-check a suggestions payload; malformed data raises instead of
 * leaking NaNs into the view. */
export function validateSuggestions(payload: unknown): SuggestionsPayload {
  const p = payload as SuggestionsPayload;
  if (!p || typeof p.file !== "string" || !Array.isArray(p.suggestions)) {
    throw new Error("malformed suggestions payload");
  }
  for (const s of p.suggestions) {
    if (typeof s.symbol_id !== "string" || !Array.isArray(s.candidates)) {
      throw new Error(`malformed suggestion entry: ${JSON.stringify(s)}`);
    }
    for (const c of s.candidates) {
      if (typeof c.type !== "string" || typeof c.probability !== "number") {
        throw new Error(`malformed candidate in ${s.symbol_id}`);
      }
    }
  }
  return p;
}

/** Install a freshly served suggestion list; the server's confidence
 * order is kept verbatim. Cards for already-decided symbols stay
 * visible but frozen until the next full refresh drops them. */
export function withSuggestions(state: AppState, payload: SuggestionsPayload): AppState {
  const cards: CardView[] = payload.suggestions.map((s) => ({
    suggestion: s,
    decided: state.decided[s.symbol_id] ?? null,
    reranked: state.rerankedIds.includes(s.symbol_id),
  }));
  return { ...state, currentFile: payload.file, cards, error: null };
}

export function applyAccept(
  state: AppState,
  symbolId: string,
  response: AcceptResponse,
): AppState {
  const decided = {
    ...state.decided,
    [symbolId]: { action: "accept" as const, type: response.type },
  };
  const rerankedIds = response.reranked;
  const cards = state.cards.map((card) => ({
    ...card,
    decided: decided[card.suggestion.symbol_id] ?? null,
    reranked: rerankedIds.includes(card.suggestion.symbol_id),
  }));
  return { ...state, decided, rerankedIds, cards };
}

export function applyReject(
  state: AppState,
  symbolId: string,
  type: string,
  response: RejectResponse,
): AppState {
  const cards = state.cards.map((card) => {
    if (card.suggestion.symbol_id !== symbolId) return card;
    const candidates = card.suggestion.candidates.filter((c) => c.type !== type);
    return {
      ...card,
      suggestion: {
        ...card.suggestion,
        candidates,
        needs_manual: response.needs_manual,
      },
    };
  });
  return { ...state, cards };
}

/** Rebuild the decided map from a served decision log; replaying a log
 * against a fresh state must land on the same decisions. */
export function replayDecisions(log: LogEntry[]): Record<string, Decision> {
  const decided: Record<string, Decision> = {};
  for (const entry of [...log].sort((a, b) => a.seq - b.seq)) {
    if (entry.action === "accept") {
      decided[entry.symbol_id] = { action: "accept", type: entry.type };
    }
  }
  return decided;
}

/** Display rules: probabilities as percents with one decimal, distances
 * with four decimals. No rounding happens before these formatters. */
export function formatProbability(p: number): string {
  return `${(p * 100).toFixed(1)}%`;
}

export function formatDistance(d: number): string {
  return d.toFixed(4);
}
