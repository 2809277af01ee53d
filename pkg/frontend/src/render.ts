/** DOM construction for the review panes. Values render verbatim from
 * the service payloads through the two formatters; no renormalization. */

import type { FileInfo, NeighborRow } from "./api.js";
import type { AppState, CardView } from "./state.js";
import { formatDistance, formatProbability } from "./state.js";

export interface Handlers {
  onSelectFile(file: string): void;
  onAccept(symbolId: string, type: string): void;
  onReject(symbolId: string, type: string): void;
  onInspect(symbolId: string): void;
  onManualType(symbolId: string, type: string): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderFileList(
  container: HTMLElement,
  files: FileInfo[],
  current: string | null,
  handlers: Handlers,
): void {
  container.replaceChildren();
  const list = el("ul", "file-list");
  for (const file of files) {
    const item = el("li", file.id === current ? "file selected" : "file");
    const button = el("button", "file-name", file.id);
    button.addEventListener("click", () => handlers.onSelectFile(file.id));
    const pending = el("span", "pending-count", `${file.pending} pending`);
    item.append(button, pending);
    list.append(item);
  }
  container.append(list);
}

function renderCard(card: CardView, handlers: Handlers): HTMLElement {
  const s = card.suggestion;
  const root = el("article", card.decided ? "card decided" : "card");
  root.dataset.symbolId = s.symbol_id;

  const header = el("header", "card-header");
  header.append(
    el("span", "kind", s.kind),
    el("span", "name", s.name),
  );
  if (card.reranked) {
    header.append(el("span", "badge reranked", "re-ranked"));
  }
  if (card.decided) {
    header.append(el("span", "badge decided",
      `${card.decided.action}: ${card.decided.type}`));
  }
  root.append(header);

  if (s.excerpt.text) {
    const line = s.excerpt.line === null ? "" : `line ${s.excerpt.line}: `;
    root.append(el("pre", "excerpt", `${line}${s.excerpt.text}`));
  }

  const list = el("ul", "candidates");
  for (const candidate of s.candidates) {
    const item = el("li", "candidate");
    item.append(
      el("code", "type", candidate.type),
      el("span", "probability", formatProbability(candidate.probability)),
    );
    const accept = el("button", "accept", "accept");
    accept.disabled = card.decided !== null;
    accept.addEventListener("click", () => handlers.onAccept(s.symbol_id, candidate.type));
    const reject = el("button", "reject", "reject");
    reject.disabled = card.decided !== null;
    reject.addEventListener("click", () => handlers.onReject(s.symbol_id, candidate.type));
    item.append(accept, reject);
    list.append(item);
  }
  root.append(list);

  if (!card.decided && (s.needs_manual || s.candidates.length === 0)) {
    const manual = el("div", "needs-manual");
    manual.append(el("span", undefined, "needs manual type: "));
    const input = el("input") as HTMLInputElement;
    input.placeholder = "type expression";
    const submit = el("button", "accept-manual", "bind");
    submit.addEventListener("click", () => {
      if (input.value.trim()) handlers.onManualType(s.symbol_id, input.value.trim());
    });
    manual.append(input, submit);
    root.append(manual);
  }

  const inspect = el("button", "inspect", "neighbours");
  inspect.addEventListener("click", () => handlers.onInspect(s.symbol_id));
  root.append(inspect);
  return root;
}

export function renderSuggestions(
  container: HTMLElement,
  state: AppState,
  handlers: Handlers,
): void {
  container.replaceChildren();
  if (state.currentFile === null) {
    container.append(el("div", "empty-state", "Select a file to review."));
    return;
  }
  if (state.cards.length === 0) {
    container.append(
      el("div", "empty-state", "No suggestions: every symbol is annotated or decided."),
    );
    return;
  }
  for (const card of state.cards) {
    container.append(renderCard(card, handlers));
  }
}

export function renderNeighbors(
  container: HTMLElement,
  symbolId: string | null,
  rows: NeighborRow[] | null,
  notice?: string,
): void {
  container.replaceChildren();
  container.append(el("h2", undefined, "Nearest markers"));
  if (notice) {
    container.append(el("div", "notice", notice));
    return;
  }
  if (symbolId === null || rows === null) {
    container.append(el("div", "notice", "Pick a symbol to inspect."));
    return;
  }
  container.append(el("div", "inspected", symbolId));
  const table = el("table", "neighbors");
  const head = el("tr");
  head.append(el("th", undefined, "type"), el("th", undefined, "distance"),
    el("th", undefined, "source"));
  table.append(head);
  for (const row of rows) {
    const tr = el("tr");
    tr.append(
      el("td", "type", row.type),
      el("td", "distance", formatDistance(row.distance)),
      el("td", "provenance", row.provenance),
    );
    table.append(tr);
  }
  container.append(table);
}

export function renderToast(
  container: HTMLElement,
  message: string | null,
  onRetry: (() => void) | null,
): void {
  container.replaceChildren();
  if (message === null) return;
  const toast = el("div", "toast");
  toast.append(el("span", "message", message));
  if (onRetry) {
    const retry = el("button", "retry", "retry");
    retry.addEventListener("click", onRetry);
    toast.append(retry);
  }
  container.append(toast);
}
