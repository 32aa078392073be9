/**
 * Console state and its pure transition functions. The render layer reads
 * this object; only these functions write it. Frames apply strictly in
 * sequence order so a stale frame can never overwrite a newer one. The only
 * optimistic updates are local controls (label text, alpha slider, mode
 * selector); annotations and status always come from the server.
 */

import type { Annotation, ErrorCode, FrameMessage, RecoveryMode, Status } from "./protocol.js";

export interface LogEntry {
  at: number; // ms epoch
  kind: "info" | "sent" | "error";
  text: string;
}

export interface ConsoleState {
  connection: "connecting" | "open" | "closed";
  reconnectDelayMs: number;
  seq: number;
  frame: FrameMessage | null;
  status: Status | null;
  annotations: Annotation[];
  pendingLabel: string;
  recoveryMode: RecoveryMode;
  alpha: number;
  toast: { code: ErrorCode; detail: string } | null;
  events: LogEntry[];
}

export const MAX_EVENTS = 200;

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    reconnectDelayMs: 500,
    seq: 0,
    frame: null,
    status: null,
    annotations: [],
    pendingLabel: "target",
    recoveryMode: "AUTOMATIC",
    alpha: 0.5,
    toast: null,
    events: [],
  };
}

export function logEvent(
  state: ConsoleState, kind: LogEntry["kind"], text: string, at = Date.now(),
): void {
  state.events.push({ at, kind, text });
  if (state.events.length > MAX_EVENTS) {
    state.events.splice(0, state.events.length - MAX_EVENTS);
  }
}

/** Apply a frame; returns false (and changes nothing) when it is stale. */
export function applyFrame(state: ConsoleState, frame: FrameMessage): boolean {
  if (frame.seq <= state.seq) {
    return false;
  }
  state.seq = frame.seq;
  state.frame = frame;
  state.status = frame.status;
  state.annotations = frame.annotations;
  return true;
}

/** Server error replies surface as a toast; nothing else may change. */
export function applyError(
  state: ConsoleState, code: ErrorCode, detail: string,
): void {
  state.toast = { code, detail };
  logEvent(state, "error", `${code}: ${detail}`);
}

export function clearToast(state: ConsoleState): void {
  state.toast = null;
}

export function markConnected(state: ConsoleState): void {
  state.connection = "open";
  state.reconnectDelayMs = 500; // a successful connect resets the backoff
  logEvent(state, "info", "connected");
}

/** Returns the delay to wait before the next reconnect attempt. */
export function markDisconnected(state: ConsoleState): number {
  state.connection = "closed";
  const delay = state.reconnectDelayMs;
  state.reconnectDelayMs = Math.min(delay * 2, 10_000);
  logEvent(state, "info", `disconnected; retrying in ${delay} ms`);
  return delay;
}
