import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ServiceConnection } from "../src/connection.js";
import type { ServerMessage } from "../src/protocol.js";

class FakeWebSocket {
  static OPEN = 1;
  static instances: FakeWebSocket[] = [];
  readyState = 0;
  sent: string[] = [];
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;

  constructor(public url: string) {
    FakeWebSocket.instances.push(this);
  }

  open() {
    this.readyState = FakeWebSocket.OPEN;
    this.onopen?.();
  }

  reply(message: unknown) {
    this.onmessage?.({ data: JSON.stringify(message) });
  }

  send(data: string) {
    this.sent.push(data);
  }

  close() {
    this.readyState = 3;
    this.onclose?.();
  }
}

beforeEach(() => {
  FakeWebSocket.instances = [];
  vi.stubGlobal("WebSocket", FakeWebSocket);
  vi.useFakeTimers();
});

afterEach(() => {
  vi.unstubAllGlobals();
  vi.useRealTimers();
});

function connect() {
  const messages: ServerMessage[] = [];
  const states: string[] = [];
  const conn = new ServiceConnection(
    "ws://test/ws", (m) => messages.push(m), (s) => states.push(s));
  conn.connect();
  const ws = FakeWebSocket.instances.at(-1)!;
  return { conn, ws, messages, states };
}

describe("ServiceConnection", () => {
  it("reports connection state transitions", () => {
    const { ws, states } = connect();
    expect(states).toEqual(["connecting"]);
    ws.open();
    expect(states).toEqual(["connecting", "connected"]);
    ws.close();
    expect(states.at(-1)).toBe("disconnected");
  });

  it("correlates acks with sends in FIFO order", async () => {
    const { conn, ws } = connect();
    ws.open();
    const p1 = conn.send({ op: "set_param", object: "pez", value: 1 });
    const p2 = conn.send({ op: "set_param", object: "pez", value: 0 });
    expect(ws.sent.length).toBe(2);
    ws.reply({ type: "ack", op: "set_param", frame_index: 41 });
    ws.reply({ type: "error", op: "set_param", reason: "nope" });
    expect(await p1).toEqual({ ok: true, frameIndex: 41 });
    expect(await p2).toEqual({ ok: false, reason: "nope" });
  });

  it("rejects sends while disconnected", async () => {
    const { conn } = connect();
    const outcome = await conn.send({ op: "set_mode", mode: "pause" });
    expect(outcome.ok).toBe(false);
    expect(outcome.reason).toBe("not connected");
  });

  it("fails pending sends and schedules a retry on close", async () => {
    const { conn, ws } = connect();
    ws.open();
    const pending = conn.send({ op: "set_param", object: "pez", value: 0.5 });
    ws.close();
    expect((await pending).ok).toBe(false);
    vi.advanceTimersByTime(600);
    expect(FakeWebSocket.instances.length).toBe(2);
  });

  it("routes frames and hellos to the message handler", () => {
    const { ws, messages } = connect();
    ws.open();
    ws.reply({ type: "hello", scene: { objects: [], sweep: {}, volume: {} },
               frame_index: 0, mode: "realtime" });
    ws.reply({ type: "frame", frame_index: 1, t_ms: 33, peaks: [],
               observations: [], estimates: {}, poses: {}, events: [],
               spectrum_decim: null });
    ws.reply("garbage");
    expect(messages.map((m) => m.type)).toEqual(["hello", "frame"]);
  });
});
