// WebSocket client: auto-reconnect with backoff, FIFO ack correlation.
// The server answers each mutation in submission order, so a queue of
// pending resolvers pairs replies with requests.

import type { Mutation, ServerMessage } from "./protocol.js";
import { parseServerMessage } from "./protocol.js";

export interface MutationOutcome {
  ok: boolean;
  frameIndex?: number;
  reason?: string;
}

type Resolver = (outcome: MutationOutcome) => void;

export class ServiceConnection {
  private ws: WebSocket | null = null;
  private pending: Resolver[] = [];
  private retryMs = 500;
  private closed = false;

  constructor(
    private url: string,
    private onMessage: (m: ServerMessage) => void,
    private onState: (state: "connecting" | "connected" | "disconnected") => void,
  ) {}

  connect(): void {
    if (this.closed) return;
    this.onState("connecting");
    this.ws = new WebSocket(this.url);
    this.ws.onopen = () => {
      this.retryMs = 500;
      this.onState("connected");
    };
    this.ws.onmessage = (ev) => {
      const message = parseServerMessage(String(ev.data));
      if (!message) return;
      if (message.type === "ack" || message.type === "error") {
        const resolve = this.pending.shift();
        if (resolve) {
          resolve(message.type === "ack"
            ? { ok: true, frameIndex: message.frame_index }
            : { ok: false, reason: message.reason });
        }
        if (message.type === "error") this.onMessage(message);
        return;
      }
      this.onMessage(message);
    };
    this.ws.onclose = () => {
      this.onState("disconnected");
      while (this.pending.length) {
        this.pending.shift()!({ ok: false, reason: "connection lost" });
      }
      if (!this.closed) {
        setTimeout(() => this.connect(), this.retryMs);
        this.retryMs = Math.min(this.retryMs * 2, 8000);
      }
    };
  }

  send(mutation: Mutation): Promise<MutationOutcome> {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) {
      return Promise.resolve({ ok: false, reason: "not connected" });
    }
    this.ws.send(JSON.stringify(mutation));
    return new Promise((resolve) => this.pending.push(resolve));
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
