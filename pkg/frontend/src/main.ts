/**
 * Console wiring: socket -> state -> canvas/DOM. One event loop, one socket.
 * A short mouse press sends a click query; dragging sends a box query.
 */

import { canvasToFrame } from "./coords.js";
import { drawFrame, type DragRect } from "./overlay.js";
import {
  boxMessage,
  clickMessage,
  redetectMessage,
  setAlphaMessage,
  setModeMessage,
  type RecoveryMode,
  type ServerMessage,
} from "./protocol.js";
import { ConsoleSocket } from "./socket.js";
import {
  applyError,
  applyFrame,
  clearToast,
  initialState,
  logEvent,
  markConnected,
  markDisconnected,
} from "./state.js";

const state = initialState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const badge = el<HTMLSpanElement>("badge");
const banner = el<HTMLDivElement>("banner");
const toast = el<HTMLDivElement>("toast");
const labelInput = el<HTMLInputElement>("label");
const modeSelect = el<HTMLSelectElement>("mode");
const alphaSlider = el<HTMLInputElement>("alpha");
const alphaValue = el<HTMLSpanElement>("alpha-value");
const redetectButton = el<HTMLButtonElement>("redetect");
const eventsList = el<HTMLUListElement>("events");
const timingsBox = el<HTMLPreElement>("timings");

let drag: DragRect | null = null;
let frameImage: HTMLImageElement | null = null;

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const socket = new ConsoleSocket(wsUrl, {
  onOpen: () => {
    markConnected(state);
    render();
  },
  onClose: () => {
    const delay = markDisconnected(state);
    render();
    return delay;
  },
  onMessage: (message: ServerMessage) => {
    if (message.type === "frame") {
      if (!applyFrame(state, message)) return; // stale: never displayed
      const image = new Image();
      image.onload = () => {
        frameImage = image;
        render();
      };
      image.src = `data:image/png;base64,${message.png}`;
    } else {
      applyError(state, message.code, message.detail);
      render();
      setTimeout(() => {
        clearToast(state);
        render();
      }, 4000);
    }
  },
});

function send(message: Parameters<ConsoleSocket["send"]>[0]): void {
  if (socket.send(message)) {
    logEvent(state, "sent", JSON.stringify(message));
  } else {
    logEvent(state, "error", "not connected; message dropped");
  }
  render();
}

canvas.addEventListener("mousedown", (event) => {
  const rect = canvas.getBoundingClientRect();
  drag = {
    x0: event.clientX - rect.left,
    y0: event.clientY - rect.top,
    x1: event.clientX - rect.left,
    y1: event.clientY - rect.top,
  };
});

canvas.addEventListener("mousemove", (event) => {
  if (!drag) return;
  const rect = canvas.getBoundingClientRect();
  drag.x1 = event.clientX - rect.left;
  drag.y1 = event.clientY - rect.top;
  render();
});

canvas.addEventListener("mouseup", (event) => {
  if (!drag || !state.frame) {
    drag = null;
    return;
  }
  const rect = canvas.getBoundingClientRect();
  const up = { x: event.clientX - rect.left, y: event.clientY - rect.top };
  const frame = { width: state.frame.width, height: state.frame.height };
  const start = canvasToFrame(drag.x0, drag.y0, canvas.width, canvas.height, frame);
  const end = canvasToFrame(up.x, up.y, canvas.width, canvas.height, frame);
  const label = labelInput.value.trim() || state.pendingLabel;
  state.pendingLabel = label;
  const w = Math.abs(end.x - start.x);
  const h = Math.abs(end.y - start.y);
  try {
    if (w < 2 && h < 2) {
      send(clickMessage(end.x, end.y, label));
    } else if (w >= 1 && h >= 1) {
      send(boxMessage(Math.min(start.x, end.x), Math.min(start.y, end.y), w, h, label));
    }
    // zero-area drags are dropped client-side
  } catch (error) {
    logEvent(state, "error", String(error));
  }
  drag = null;
  render();
});

modeSelect.addEventListener("change", () => {
  state.recoveryMode = modeSelect.value as RecoveryMode;
  send(setModeMessage(state.recoveryMode));
});

alphaSlider.addEventListener("input", () => {
  state.alpha = Number(alphaSlider.value); // optimistic: local control only
  alphaValue.textContent = state.alpha.toFixed(2);
});

alphaSlider.addEventListener("change", () => {
  send(setAlphaMessage(state.alpha));
});

redetectButton.addEventListener("click", () => {
  send(redetectMessage());
});

function render(): void {
  if (state.frame) {
    const frame = { width: state.frame.width, height: state.frame.height };
    if (canvas.width !== frame.width * 4) {
      canvas.width = frame.width * 4;
      canvas.height = frame.height * 4;
    }
    drawFrame(ctx, frameImage, frame, state.annotations, drag);
  }
  const status = state.status ?? "SEARCHING";
  badge.textContent = status;
  badge.className = `badge ${status.toLowerCase()}`;
  redetectButton.classList.toggle("attention", status === "LOST");
  banner.style.display = state.connection === "open" ? "none" : "block";
  banner.textContent =
    state.connection === "connecting"
      ? "connecting..."
      : `disconnected - retrying (backoff ${state.reconnectDelayMs} ms)`;
  if (state.toast) {
    toast.style.display = "block";
    toast.textContent = `${state.toast.code}: ${state.toast.detail}`;
  } else {
    toast.style.display = "none";
  }
  if (state.frame) {
    timingsBox.textContent = Object.entries(state.frame.timings)
      .map(([key, value]) => `${key.padEnd(16)} ${value}`)
      .join("\n");
  }
  const items = state.events.slice(-12).reverse();
  eventsList.innerHTML = "";
  for (const entry of items) {
    const li = document.createElement("li");
    li.className = entry.kind;
    li.textContent = `${new Date(entry.at).toLocaleTimeString()} ${entry.text}`;
    eventsList.appendChild(li);
  }
}

labelInput.value = state.pendingLabel;
alphaSlider.value = String(state.alpha);
alphaValue.textContent = state.alpha.toFixed(2);
modeSelect.value = state.recoveryMode;
render();
socket.connect();
