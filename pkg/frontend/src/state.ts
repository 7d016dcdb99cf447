// Server-authoritative view state: the client renders exactly what the
// latest messages say and never simulates ahead.

import type { SceneMsg, ServerMsg, SnapshotMsg, TrialEndMsg } from "./protocol.js";

export const STALE_AFTER_MS = 250;

export interface ViewState {
  connection: "connecting" | "open" | "closed";
  helloVersion: number | null;
  scene: SceneMsg | null;
  snapshot: SnapshotMsg | null;
  lastSnapshotWallMs: number | null;
  trialEnd: TrialEndMsg | null;
  pendingCues: string[];
  lastReject: string | null;
}

export function initialViewState(): ViewState {
  return {
    connection: "connecting",
    helloVersion: null,
    scene: null,
    snapshot: null,
    lastSnapshotWallMs: null,
    trialEnd: null,
    pendingCues: [],
    lastReject: null,
  };
}

export function applyServerMessage(view: ViewState, msg: ServerMsg, nowMs: number): void {
  switch (msg.kind) {
    case "hello":
      view.helloVersion = msg.version;
      break;
    case "scene":
      view.scene = msg;
      view.trialEnd = null;
      break;
    case "snapshot":
      view.snapshot = msg;
      view.lastSnapshotWallMs = nowMs;
      if (msg.cues.length) {
        view.pendingCues.push(...msg.cues);
      }
      break;
    case "trial_end":
      view.trialEnd = msg;
      break;
    case "reject":
      view.lastReject = msg.reason;
      break;
    default:
      break;
  }
}

export function markConnection(view: ViewState, state: ViewState["connection"]): void {
  view.connection = state;
  if (state !== "open") {
    view.lastSnapshotWallMs = null;
  }
}

export function isStale(view: ViewState, nowMs: number): boolean {
  if (view.connection !== "open" || view.lastSnapshotWallMs === null) {
    return view.connection !== "connecting";
  }
  return nowMs - view.lastSnapshotWallMs > STALE_AFTER_MS;
}

export function drainCues(view: ViewState): string[] {
  const cues = view.pendingCues;
  view.pendingCues = [];
  return cues;
}
