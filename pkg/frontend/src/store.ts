// Scene view state. Pure reducers over server messages plus local in-flight
// edits; rendering reads from here and physics never happens client-side.

import type {
  EventReport,
  FrameMessage,
  HelloMessage,
  PoseReport,
  SceneSummary,
  ServerMessage,
} from "./protocol.js";

export interface ObjectView {
  name: string;
  role: string;
  pose: PoseReport;
  present: boolean;
  proximity: number;
  amplitude: number;
  pull: number;
  cosines: number[] | null;
}

export type ConnectionState = "connecting" | "connected" | "disconnected";

export interface LoggedEvent extends EventReport {
  frame_index: number;
}

const EVENT_LOG_LIMIT = 400;

export class SceneStore {
  connection: ConnectionState = "connecting";
  scene: SceneSummary | null = null;
  objects = new Map<string, ObjectView>();
  selected: string | null = null;
  mode = false; // flipped by ModeToggle events
  frameIndex = -1;
  lastFrame: FrameMessage | null = null;
  spectrum: { freq_hz: number[]; magnitude: number[] } | null = null;
  eventLog: LoggedEvent[] = [];
  errors: string[] = [];
  // optimistic edits by object name, kept until the next broadcast at or
  // after the acknowledged frame
  private inflight = new Map<string, { pose?: PoseReport; ackFrame: number | null }>();
  private listeners: Array<() => void> = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  setConnection(state: ConnectionState): void {
    this.connection = state;
    this.emit();
  }

  apply(message: ServerMessage): void {
    switch (message.type) {
      case "hello":
        this.applyHello(message);
        break;
      case "frame":
        this.applyFrame(message);
        break;
      case "error":
        this.errors.push(message.reason);
        if (this.errors.length > 20) this.errors.shift();
        break;
      case "ack":
        break; // acks are correlated by the connection layer
    }
    this.emit();
  }

  private applyHello(message: HelloMessage): void {
    this.scene = message.scene;
    this.frameIndex = message.frame_index;
    this.objects.clear();
    for (const obj of message.scene.objects) {
      this.objects.set(obj.name, {
        name: obj.name,
        role: obj.role,
        pose: { position: [0, 0, 0.5], quaternion: [0, 0, 0, 1], pull: 0 },
        present: false,
        proximity: 0,
        amplitude: 0,
        pull: 0,
        cosines: null,
      });
    }
    this.eventLog = [];
    this.mode = false;
  }

  private applyFrame(message: FrameMessage): void {
    if (message.frame_index <= this.frameIndex) return; // stale or duplicate
    this.frameIndex = message.frame_index;
    this.lastFrame = message;
    if (message.spectrum_decim) this.spectrum = message.spectrum_decim;

    const known = new Set(Object.keys(message.poses));
    for (const name of [...this.objects.keys()]) {
      if (!known.has(name)) this.objects.delete(name);
    }
    for (const [name, pose] of Object.entries(message.poses)) {
      let view = this.objects.get(name);
      if (!view) {
        view = {
          name, role: "?", pose, present: false, proximity: 0,
          amplitude: 0, pull: 0, cosines: null,
        };
        this.objects.set(name, view);
      }
      const edit = this.inflight.get(name);
      if (edit && (edit.ackFrame === null || message.frame_index < edit.ackFrame)) {
        // local preview still pending; keep it until the server catches up
        if (edit.pose) view.pose = edit.pose;
      } else {
        this.inflight.delete(name);
        view.pose = pose;
      }
      const est = message.estimates[name];
      if (est) {
        view.present = est.present;
        view.proximity = est.proximity;
        view.amplitude = est.amplitude;
        view.pull = est.pull;
        view.cosines = est.cosines;
      }
    }
    for (const ev of message.events) {
      this.eventLog.push({ ...ev, frame_index: message.frame_index });
      if (ev.kind === "ModeToggle") this.mode = ev.d2 >= 64;
    }
    if (this.eventLog.length > EVENT_LOG_LIMIT) {
      this.eventLog.splice(0, this.eventLog.length - EVENT_LOG_LIMIT);
    }
  }

  /** Local drag/slider preview, shown until the acknowledged frame arrives. */
  previewPose(name: string, pose: PoseReport): void {
    const view = this.objects.get(name);
    if (!view) return;
    view.pose = pose;
    this.inflight.set(name, { pose, ackFrame: null });
    this.emit();
  }

  /** The server acknowledged the mutation effective at `frame`. */
  confirmEdit(name: string, frame: number): void {
    const edit = this.inflight.get(name);
    if (edit) edit.ackFrame = frame;
  }

  /** The server rejected the mutation; revert to broadcast state. */
  revertEdit(name: string, reason: string): void {
    this.inflight.delete(name);
    this.errors.push(reason);
    const view = this.objects.get(name);
    if (view && this.lastFrame) {
      const pose = this.lastFrame.poses[name];
      if (pose) view.pose = pose;
    }
    this.emit();
  }

  select(name: string | null): void {
    this.selected = name;
    this.emit();
  }

  /** Sum of normalized triad amplitudes for the selected object's readout. */
  triadSum(name: string): number | null {
    const view = this.objects.get(name);
    if (!view || !view.cosines) return null;
    return view.amplitude;
  }
}
