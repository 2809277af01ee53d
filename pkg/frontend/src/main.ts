/** Bootstrap and wiring: session, polling refresh, optimistic-free flow —
 * every decision waits for the service acknowledgment before the view
 * updates. */

import { ApiClient, ServiceError } from "./api.js";
import {
  applyAccept,
  applyReject,
  initialState,
  validateSuggestions,
  withError,
  withFiles,
  withSession,
  withSuggestions,
} from "./state.js";
import type { AppState } from "./state.js";
import { renderFileList, renderNeighbors, renderSuggestions, renderToast } from "./render.js";
import type { Handlers } from "./render.js";

const POLL_INTERVAL_MS = 5000;

export function start(root: Document = document): void {
  const api = new ApiClient("");
  let state: AppState = initialState();
  let lastAction: (() => void) | null = null;

  const filesPane = root.getElementById("files")!;
  const suggestionsPane = root.getElementById("suggestions")!;
  const neighborsPane = root.getElementById("neighbors")!;
  const toastPane = root.getElementById("toast")!;
  const exportLink = root.getElementById("export-map") as HTMLAnchorElement;

  function redraw(): void {
    renderFileList(filesPane, state.files, state.currentFile, handlers);
    renderSuggestions(suggestionsPane, state, handlers);
    renderToast(toastPane, state.error, state.error ? lastAction : null);
  }

  function fail(err: unknown, retry: (() => void) | null): void {
    const message = err instanceof ServiceError
      ? `service error (${err.status}): ${err.message}`
      : `unexpected error: ${String(err)}`;
    lastAction = retry;
    state = withError(state, message);
    redraw();
  }

  async function refreshFiles(): Promise<void> {
    if (!state.sessionId) return;
    try {
      const payload = await api.listFiles(state.sessionId);
      state = withFiles(state, payload.files);
      redraw();
    } catch (err) {
      fail(err, refreshFiles);
    }
  }

  async function openFile(file: string): Promise<void> {
    if (!state.sessionId) return;
    try {
      const payload = validateSuggestions(await api.suggestions(file, state.sessionId));
      state = withSuggestions(state, payload);
      redraw();
    } catch (err) {
      fail(err, () => void openFile(file));
    }
  }

  async function acceptType(symbolId: string, type: string): Promise<void> {
    if (!state.sessionId) return;
    try {
      const response = await api.accept(state.sessionId, symbolId, type);
      state = applyAccept(state, symbolId, response);
      redraw();
      await refreshFiles();
      if (state.currentFile) await openFile(state.currentFile);
    } catch (err) {
      fail(err, () => void acceptType(symbolId, type));
    }
  }

  async function rejectType(symbolId: string, type: string): Promise<void> {
    if (!state.sessionId) return;
    try {
      const response = await api.reject(state.sessionId, symbolId, type);
      state = applyReject(state, symbolId, type, response);
      redraw();
    } catch (err) {
      fail(err, () => void rejectType(symbolId, type));
    }
  }

  async function inspect(symbolId: string): Promise<void> {
    if (!state.sessionId) return;
    try {
      const payload = await api.neighbors(symbolId, 10, state.sessionId);
      renderNeighbors(neighborsPane, symbolId, payload.neighbors);
    } catch (err) {
      if (err instanceof ServiceError && err.status === 404) {
        renderNeighbors(neighborsPane, symbolId, null, "symbol not embedded");
      } else {
        fail(err, () => void inspect(symbolId));
      }
    }
  }

  const handlers: Handlers = {
    onSelectFile: (file) => void openFile(file),
    onAccept: (symbolId, type) => void acceptType(symbolId, type),
    onReject: (symbolId, type) => void rejectType(symbolId, type),
    onInspect: (symbolId) => void inspect(symbolId),
    onManualType: (symbolId, type) => void acceptType(symbolId, type),
  };

  async function boot(): Promise<void> {
    try {
      const session = await api.createSession();
      state = withSession(state, session.session_id);
      exportLink.href = api.exportMapUrl(session.session_id);
      await refreshFiles();
      redraw();
      setInterval(() => {
        void refreshFiles();
        if (state.currentFile) void openFile(state.currentFile);
      }, POLL_INTERVAL_MS);
    } catch (err) {
      fail(err, () => void boot());
    }
  }

  void boot();
}

if (typeof document !== "undefined" && document.getElementById("suggestions")) {
  start();
}
