// Reconnecting websocket wrapper. On reconnect the server starts a fresh
// session; rendering resumes from whatever snapshots arrive, with no local
// state to diverge.

import { ServerFrame, parseServerFrame } from "./protocol.js";

export interface ConnectionHooks {
  onFrame: (frame: ServerFrame) => void;
  onStatus: (connected: boolean) => void;
}

export class Connection {
  private ws: WebSocket | null = null;
  private url: string;
  private hooks: ConnectionHooks;
  private backoffMs = 250;
  private closed = false;

  constructor(url: string, hooks: ConnectionHooks) {
    this.url = url;
    this.hooks = hooks;
    this.open();
  }

  private open(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.backoffMs = 250;
      this.hooks.onStatus(true);
    };
    ws.onmessage = (ev) => {
      const frame = parseServerFrame(String(ev.data));
      if (frame) this.hooks.onFrame(frame);
    };
    ws.onclose = () => {
      this.hooks.onStatus(false);
      if (!this.closed) {
        setTimeout(() => this.open(), this.backoffMs);
        this.backoffMs = Math.min(this.backoffMs * 2, 2000);
      }
    };
    ws.onerror = () => ws.close();
  }

  send(text: string): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(text);
      return true;
    }
    return false;
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
