// Wire types for the service channel. The console is a thin client: every
// displayed number originates from one of these messages.

export interface TagSummary {
  id: string;
  f0: number;
  q: number;
  alpha: number;
}

export interface ObjectSummary {
  name: string;
  role: string;
  tags: TagSummary[];
  param_channel: number | null;
}

export interface SceneSummary {
  objects: ObjectSummary[];
  sweep: { f_start: number; f_end: number; frame_period: number; bins: number };
  volume: { x: [number, number]; y: [number, number]; z: [number, number] };
}

export interface HelloMessage {
  type: "hello";
  scene: SceneSummary;
  frame_index: number;
  mode: string;
}

export interface PeakReport {
  freq_hz: number;
  amplitude: number;
  width_hz: number;
  merged: boolean;
}

export interface ObservationReport {
  tag: string;
  freq_hz: number;
  amplitude: number;
  present: boolean;
}

export interface EstimateReport {
  present: boolean;
  proximity: number;
  amplitude: number;
  pull: number;
  cosines: number[] | null;
}

export interface PoseReport {
  position: [number, number, number];
  quaternion: [number, number, number, number];
  pull: number;
}

export interface EventReport {
  t_ms: number;
  kind: string;
  ch: number;
  d1: number;
  d2: number;
}

export interface FrameMessage {
  type: "frame";
  frame_index: number;
  t_ms: number;
  peaks: PeakReport[];
  observations: ObservationReport[];
  estimates: Record<string, EstimateReport>;
  poses: Record<string, PoseReport>;
  events: EventReport[];
  spectrum_decim: { freq_hz: number[]; magnitude: number[] } | null;
}

export interface AckMessage {
  type: "ack";
  op: string;
  frame_index: number;
}

export interface ErrorMessage {
  type: "error";
  op?: string;
  reason: string;
}

export type ServerMessage = HelloMessage | FrameMessage | AckMessage | ErrorMessage;

export type Mutation =
  | { op: "set_pose"; object: string; position: number[]; quaternion?: number[] }
  | { op: "set_param"; object: string; value: number }
  | { op: "set_mode"; mode: "realtime" | "fast" | "pause" };

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const t = (data as { type?: unknown }).type;
  if (t === "hello" || t === "frame" || t === "ack" || t === "error") {
    return data as ServerMessage;
  }
  return null;
}
