/**
 * One websocket with exponential-backoff reconnect. Callers provide handlers;
 * the socket owns nothing but the connection lifecycle.
 */

import type { ClientMessage, ServerMessage } from "./protocol.js";
import { parseServerMessage } from "./protocol.js";

export interface SocketHandlers {
  onMessage: (message: ServerMessage) => void;
  onOpen: () => void;
  /** Return the backoff delay in ms before the next attempt. */
  onClose: () => number;
}

export class ConsoleSocket {
  private ws: WebSocket | null = null;
  private closed = false;

  constructor(private url: string, private handlers: SocketHandlers) {}

  connect(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => this.handlers.onOpen();
    ws.onmessage = (event) => {
      const message = parseServerMessage(String(event.data));
      if (message) this.handlers.onMessage(message);
    };
    ws.onclose = () => {
      this.ws = null;
      if (this.closed) return;
      const delay = this.handlers.onClose();
      setTimeout(() => this.connect(), delay);
    };
    ws.onerror = () => {
      ws.close();
    };
  }

  send(message: ClientMessage): boolean {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) {
      return false;
    }
    this.ws.send(JSON.stringify(message));
    return true;
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
