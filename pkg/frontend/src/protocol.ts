/**
 * Gateway websocket protocol: message types, builders, and runtime guards.
 * Mirrors docs/gateway_protocol.schema.json exactly; the schema file is the
 * contract, these types are its TypeScript shadow.
 */

export type Status = "ACTIVE" | "LOST" | "SEARCHING";
export type RecoveryMode = "TRACKER_ONLY" | "HUMAN" | "AUTOMATIC";
export type ErrorCode = "BAD_MESSAGE" | "OUT_OF_BOUNDS";

export interface Annotation {
  label: string;
  score: number;
  bbox: [number, number, number, number];
}

export interface FrameMessage {
  type: "frame";
  seq: number;
  width: number;
  height: number;
  png: string;
  annotations: Annotation[];
  status: Status;
  timings: Record<string, number>;
}

export interface ErrorMessage {
  type: "error";
  code: ErrorCode;
  detail: string;
}

export interface ClickMessage {
  type: "click";
  x: number;
  y: number;
  label: string;
}

export interface BoxMessage {
  type: "box";
  x: number;
  y: number;
  w: number;
  h: number;
  label: string;
}

export interface SetModeMessage {
  type: "set_mode";
  mode: RecoveryMode;
}

export interface RedetectMessage {
  type: "redetect";
}

export interface SetAlphaMessage {
  type: "set_alpha";
  alpha: number;
}

export type ClientMessage =
  | ClickMessage
  | BoxMessage
  | SetModeMessage
  | RedetectMessage
  | SetAlphaMessage;

export type ServerMessage = FrameMessage | ErrorMessage;

export function clickMessage(x: number, y: number, label: string): ClickMessage {
  if (!Number.isInteger(x) || !Number.isInteger(y) || x < 0 || y < 0) {
    throw new Error(`click coordinates must be non-negative integers: ${x},${y}`);
  }
  if (!label) throw new Error("click needs a non-empty label");
  return { type: "click", x, y, label };
}

export function boxMessage(
  x: number, y: number, w: number, h: number, label: string,
): BoxMessage {
  if ([x, y, w, h].some((v) => !Number.isInteger(v) || v < 0)) {
    throw new Error(`box fields must be non-negative integers: ${x},${y},${w},${h}`);
  }
  if (w < 1 || h < 1) throw new Error("box must have positive area");
  if (!label) throw new Error("box needs a non-empty label");
  return { type: "box", x, y, w, h, label };
}

export function setModeMessage(mode: RecoveryMode): SetModeMessage {
  return { type: "set_mode", mode };
}

export function redetectMessage(): RedetectMessage {
  return { type: "redetect" };
}

export function setAlphaMessage(alpha: number): SetAlphaMessage {
  if (!(alpha >= 0 && alpha <= 1)) {
    throw new Error(`alpha must be in [0, 1], got ${alpha}`);
  }
  return { type: "set_alpha", alpha };
}

export function isFrameMessage(doc: unknown): doc is FrameMessage {
  const m = doc as FrameMessage;
  return (
    typeof m === "object" && m !== null && m.type === "frame" &&
    Number.isInteger(m.seq) && Number.isInteger(m.width) &&
    Number.isInteger(m.height) && typeof m.png === "string" &&
    Array.isArray(m.annotations) &&
    (m.status === "ACTIVE" || m.status === "LOST" || m.status === "SEARCHING") &&
    typeof m.timings === "object" && m.timings !== null &&
    m.annotations.every(
      (a) =>
        typeof a.label === "string" && typeof a.score === "number" &&
        Array.isArray(a.bbox) && a.bbox.length === 4 &&
        a.bbox.every((v) => typeof v === "number"),
    )
  );
}

export function isErrorMessage(doc: unknown): doc is ErrorMessage {
  const m = doc as ErrorMessage;
  return (
    typeof m === "object" && m !== null && m.type === "error" &&
    (m.code === "BAD_MESSAGE" || m.code === "OUT_OF_BOUNDS") &&
    typeof m.detail === "string"
  );
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (isFrameMessage(doc)) return doc;
  if (isErrorMessage(doc)) return doc;
  return null;
}
