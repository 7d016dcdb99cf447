// Pure scene construction: ViewState -> ordered draw operations. main.ts
// rasterizes the ops onto a canvas; tests assert on them directly.

import { Camera, Projected, Vec3, project } from "./camera.js";
import type { SceneMsg, SnapshotMsg } from "./protocol.js";
import { ViewState, isStale } from "./state.js";

export const COLORS = {
  background: "#10141a",
  floor: "#2b2f36",
  floorEdge: "#4a505a",
  partition: "#6b7280",
  wall: "#3c424c",
  red: "#e05252",
  blue: "#5276e0",
  selectionUnlocked: "#f5d442",
  selectionLocked: "#3ddc84",
  marker: "#1a1a1a",
  markerFrozen: "#3ddc84",
  arm: "#c8ccd4",
  armGuard: "#e05252",
  hand: "#ffffff",
  target: "#8a91a0",
  text: "#e8eaf0",
  warn: "#f5a623",
  flash: "#f5d442",
};

export type DrawOp =
  | { op: "poly"; points: [number, number][]; close: boolean; stroke?: string; fill?: string; width?: number; depth: number }
  | { op: "circle"; x: number; y: number; r: number; stroke?: string; fill?: string; width?: number; depth: number; dash?: boolean }
  | { op: "text"; x: number; y: number; text: string; color: string; size: number; depth: number }
  | { op: "overlay"; color: string; alpha: number; depth: number };

export interface SceneBuild {
  ops: DrawOp[];
  hud: string[];
}

function projectAll(cam: Camera, pts: Vec3[], w: number, h: number): Projected[] | null {
  const out: Projected[] = [];
  for (const p of pts) {
    const s = project(cam, p, w, h);
    if (!s) return null;
    out.push(s);
  }
  return out;
}

function polyOp(
  cam: Camera, pts: Vec3[], w: number, h: number,
  style: { close?: boolean; stroke?: string; fill?: string; width?: number },
): DrawOp | null {
  const proj = projectAll(cam, pts, w, h);
  if (!proj) return null;
  const depth = proj.reduce((acc, p) => acc + p.depth, 0) / proj.length;
  return {
    op: "poly",
    points: proj.map((p) => [p.x, p.y]),
    close: style.close ?? true,
    stroke: style.stroke,
    fill: style.fill,
    width: style.width,
    depth,
  };
}

function circleOp(
  cam: Camera, center: Vec3, radius: number, w: number, h: number,
  style: { stroke?: string; fill?: string; width?: number; dash?: boolean },
): DrawOp | null {
  const c = project(cam, center, w, h);
  if (!c) return null;
  const edge = project(cam, [center[0] + radius, center[1], center[2]], w, h);
  const r = edge ? Math.max(2, Math.hypot(edge.x - c.x, edge.y - c.y)) : 3;
  return { op: "circle", x: c.x, y: c.y, r, depth: c.depth, ...style };
}

function formatTimer(seconds: number): string {
  const s = Math.max(0, Math.ceil(seconds));
  const mm = Math.floor(s / 60).toString().padStart(1, "0");
  const ss = (s % 60).toString().padStart(2, "0");
  return `${mm}:${ss}`;
}

function blockColor(id: string): string {
  return id.startsWith("R") ? COLORS.red : COLORS.blue;
}

function boxOutline(scene: SceneMsg, cam: Camera, w: number, h: number, ops: DrawOp[]): void {
  const hd = scene.floor_depth / 2;
  const hw = scene.floor_width / 2;
  const floor = polyOp(cam, [
    [-hd, -hw, 0], [hd, -hw, 0], [hd, hw, 0], [-hd, hw, 0],
  ], w, h, { fill: COLORS.floor, stroke: COLORS.floorEdge, width: 1.5 });
  if (floor) ops.push(floor);
  const wh = scene.wall_height;
  for (const [a, b] of [
    [[-hd, -hw], [hd, -hw]],
    [[hd, -hw], [hd, hw]],
    [[hd, hw], [-hd, hw]],
    [[-hd, hw], [-hd, -hw]],
  ] as [[number, number], [number, number]][]) {
    const wall = polyOp(cam, [
      [a[0], a[1], 0], [b[0], b[1], 0], [b[0], b[1], wh], [a[0], a[1], wh],
    ], w, h, { stroke: COLORS.wall, width: 1 });
    if (wall) ops.push(wall);
  }
  const ph = scene.partition_height;
  const partition = polyOp(cam, [
    [-hd, 0, 0], [hd, 0, 0], [hd, 0, ph], [-hd, 0, ph],
  ], w, h, { fill: COLORS.partition, stroke: COLORS.floorEdge, width: 1 });
  if (partition) ops.push(partition);
  for (const [bid, xy] of Object.entries(scene.targets)) {
    const circle = circleOp(cam, [xy[0], xy[1], 0.001], scene.target_radius, w, h, {
      stroke: COLORS.target, width: 1, dash: true,
    });
    if (circle) ops.push(circle);
    const label = project(cam, [xy[0], xy[1], 0.002], w, h);
    if (label) {
      ops.push({ op: "text", x: label.x, y: label.y, text: bid, color: COLORS.target, size: 10, depth: label.depth });
    }
  }
}

function blocks(scene: SceneMsg, snap: SnapshotMsg, cam: Camera, w: number, h: number, ops: DrawOp[]): void {
  for (const [bid, pos] of Object.entries(snap.blocks)) {
    const fill = blockColor(bid);
    const body = circleOp(cam, pos as Vec3, scene.block_radius, w, h, { fill, width: 1 });
    if (!body) continue;
    ops.push(body);
    if (snap.selection === bid) {
      const ring = circleOp(cam, pos as Vec3, scene.block_radius * 1.45, w, h, {
        stroke: snap.locked ? COLORS.selectionLocked : COLORS.selectionUnlocked,
        width: 3,
      });
      if (ring) ops.push(ring);
    }
    const label = project(cam, [pos[0], pos[1], pos[2] + scene.block_height], w, h);
    if (label) {
      ops.push({ op: "text", x: label.x, y: label.y, text: bid[1], color: COLORS.text, size: 11, depth: label.depth });
    }
  }
}

function arm(snap: SnapshotMsg, cam: Camera, w: number, h: number, ops: DrawOp[]): void {
  const stroke = snap.guard ? COLORS.armGuard : COLORS.arm;
  const line = polyOp(cam, snap.arm as Vec3[], w, h, { close: false, stroke, width: 5 });
  if (line) {
    line.depth -= 0.001; // keep the arm in front of coincident geometry
    ops.push(line);
  }
  const tip = snap.arm[snap.arm.length - 1];
  const hand = circleOp(cam, tip as Vec3, 0.02, w, h, {
    fill: snap.hand === "closed" ? COLORS.hand : undefined,
    stroke: COLORS.hand,
    width: 2,
  });
  if (hand) ops.push(hand);
}

export function buildScene(
  view: ViewState, cam: Camera, width: number, height: number, nowMs: number,
  flashUntilMs = 0,
): SceneBuild {
  const ops: DrawOp[] = [];
  const hud: string[] = [];
  const scene = view.scene;
  const snap = view.snapshot;
  if (scene && snap) {
    boxOutline(scene, cam, width, height, ops);
    blocks(scene, snap, cam, width, height, ops);
    arm(snap, cam, width, height, ops);
    if (snap.stage === "place" && snap.marker) {
      const marker = circleOp(cam, [snap.marker[0], snap.marker[1], 0.002], 0.015, width, height, {
        fill: snap.marker_frozen ? COLORS.markerFrozen : COLORS.marker,
        stroke: COLORS.text,
        width: 1,
      });
      if (marker) ops.push(marker);
    }
    hud.push(`mode: ${snap.mode}`);
    hud.push(`timer: ${formatTimer(snap.remaining)}`);
    if (snap.plan) hud.push(`plan: ${snap.plan}`);
    if (snap.guard) hud.push("guard: condition limit");
    if (snap.remaining <= 0) hud.push("TRIAL OVER");
  } else {
    hud.push(view.connection === "open" ? "waiting for trial" : "connecting...");
  }
  if (view.trialEnd) {
    const successes = Object.values(view.trialEnd.outcomes).filter((o) => o === "success").length;
    hud.push(`trial ended (${view.trialEnd.reason}): ${successes}/4 on target`);
  }
  ops.sort((a, b) => b.depth - a.depth);
  if (flashUntilMs > nowMs) {
    ops.push({ op: "overlay", color: COLORS.flash, alpha: 0.25, depth: -1 });
  }
  if (isStale(view, nowMs)) {
    ops.push({ op: "overlay", color: "#000000", alpha: 0.5, depth: -2 });
    hud.push("connection stale");
  }
  let y = 22;
  for (const line of hud) {
    ops.push({ op: "text", x: 12, y, text: line, color: line.includes("stale") ? COLORS.warn : COLORS.text, size: 14, depth: -3 });
    y += 20;
  }
  return { ops, hud };
}
