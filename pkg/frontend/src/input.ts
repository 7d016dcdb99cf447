// Keyboard gestures at the classifier cadence and cursor-projected gaze.

import { Camera, Ray, boxToWorldDirection, boxToWorldPoint, unproject } from "./camera.js";
import type { Gesture, SceneMsg } from "./protocol.js";

export const GESTURE_PERIOD_MS = 50;

// Four adjacent keys; releasing everything yields NM.
export const DEFAULT_BINDINGS: Record<string, Gesture> = {
  KeyA: "HO",
  KeyS: "HC",
  KeyD: "WF",
  KeyF: "WE",
};

export class GestureScheduler {
  /** Emits the currently held gesture on a steady clock, never faster than
   * the classifier cadence regardless of key-repeat events. */

  private held: string[] = [];
  private nextDueMs: number | null = null;

  constructor(
    private bindings: Record<string, Gesture> = DEFAULT_BINDINGS,
    private periodMs: number = GESTURE_PERIOD_MS,
  ) {}

  keyDown(code: string): void {
    if (!(code in this.bindings)) return;
    if (this.held.includes(code)) return; // ignore auto-repeat
    this.held.push(code);
  }

  keyUp(code: string): void {
    this.held = this.held.filter((c) => c !== code);
  }

  current(): Gesture {
    if (this.held.length === 0) return "NM";
    return this.bindings[this.held[this.held.length - 1]];
  }

  /** Returns the gestures due at `nowMs` (normally 0 or 1; more after a
   * stall). The first call anchors the clock. */
  due(nowMs: number): Gesture[] {
    if (this.nextDueMs === null) {
      this.nextDueMs = nowMs + this.periodMs;
      return [];
    }
    const out: Gesture[] = [];
    while (nowMs >= this.nextDueMs) {
      out.push(this.current());
      this.nextDueMs += this.periodMs;
    }
    return out;
  }
}

/** Cursor position -> world-frame gaze ray through the camera. */
export function gazeFromCursor(
  cam: Camera,
  scene: SceneMsg,
  cursorX: number,
  cursorY: number,
  width: number,
  height: number,
): Ray {
  const ray = unproject(cam, cursorX, cursorY, width, height);
  return {
    origin: boxToWorldPoint(scene.box_origin, scene.box_yaw, ray.origin),
    direction: boxToWorldDirection(scene.box_yaw, ray.direction),
  };
}
