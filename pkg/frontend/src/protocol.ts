// Wire types matching PROTOCOL.md (version 1).

export const PROTOCOL_VERSION = 1;

export type Gesture = "HO" | "HC" | "WF" | "WE" | "NM";

export const GESTURES: Gesture[] = ["HO", "HC", "WF", "WE", "NM"];

export interface HelloMsg {
  kind: "hello";
  version: number;
  methods?: string[];
  trial_index?: number;
  trials?: number;
  state?: string;
}

export interface SceneMsg {
  kind: "scene";
  method: string;
  duration: number;
  order: string[];
  box_origin: [number, number, number];
  box_yaw: number;
  floor_depth: number;
  floor_width: number;
  wall_height: number;
  wall_thickness: number;
  partition_height: number;
  partition_thickness: number;
  block_radius: number;
  block_height: number;
  target_radius: number;
  slots: Record<string, [number, number]>;
  targets: Record<string, [number, number]>;
}

export interface SnapshotMsg {
  kind: "snapshot";
  t: number;
  q: number[];
  arm: [number, number, number][];
  hand: "open" | "closed";
  blocks: Record<string, [number, number, number]>;
  attached: string | null;
  stage: "pick" | "place";
  selection: string | null;
  locked: boolean;
  marker: [number, number] | null;
  marker_frozen: boolean;
  mode: string;
  guard: boolean;
  plan: string | null;
  cues: string[];
  remaining: number;
  belief: Record<string, number>;
}

export interface TrialEndMsg {
  kind: "trial_end";
  reason: string;
  outcomes: Record<string, string>;
}

export interface AckMsg {
  kind: "ack";
  of: string;
  [key: string]: unknown;
}

export interface RejectMsg {
  kind: "reject";
  of?: string;
  reason: string;
}

export type ServerMsg = HelloMsg | SceneMsg | SnapshotMsg | TrialEndMsg | AckMsg | RejectMsg;

export type ClientMsg =
  | { kind: "hello"; version: number }
  | { kind: "gesture"; gesture: Gesture }
  | { kind: "gaze"; origin: number[]; direction: number[] }
  | { kind: "shoulder"; position: number[]; rotation?: number[] }
  | { kind: "trial"; action: "start" | "stop" | "reset" }
  | { kind: "method"; method: "A" | "B" | "C" | "D" };
