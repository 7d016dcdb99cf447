import assert from "node:assert/strict";
import { test } from "node:test";

import { ORBIT_PRESET, cameraEye } from "../src/camera.js";
import { DEFAULT_BINDINGS, GestureScheduler, gazeFromCursor } from "../src/input.js";
import { sampleScene } from "./helpers.js";

test("holding a key emits at the 50 ms cadence: 200 ms -> 4 messages", () => {
  const sched = new GestureScheduler();
  sched.due(0); // anchor the clock
  sched.keyDown("KeyD"); // WF
  const emitted: string[] = [];
  for (let now = 10; now <= 210; now += 10) {
    emitted.push(...sched.due(now));
  }
  assert.deepEqual(emitted, ["WF", "WF", "WF", "WF"]);
});

test("no key held yields NM at the same cadence", () => {
  const sched = new GestureScheduler();
  sched.due(0);
  const emitted = [...sched.due(50), ...sched.due(100), ...sched.due(150)];
  assert.deepEqual(emitted, ["NM", "NM", "NM"]);
});

test("release falls back to NM and key-repeat is ignored", () => {
  const sched = new GestureScheduler();
  sched.due(0);
  sched.keyDown("KeyF");
  sched.keyDown("KeyF"); // auto-repeat
  assert.equal(sched.current(), "WE");
  assert.deepEqual(sched.due(50), ["WE"]);
  sched.keyUp("KeyF");
  assert.deepEqual(sched.due(100), ["NM"]);
});

test("latest pressed key wins while several are held", () => {
  const sched = new GestureScheduler();
  sched.keyDown("KeyA");
  sched.keyDown("KeyS");
  assert.equal(sched.current(), "HC");
  sched.keyUp("KeyS");
  assert.equal(sched.current(), "HO");
});

test("emission rate never exceeds the cadence under dense polling", () => {
  const sched = new GestureScheduler();
  sched.due(0);
  sched.keyDown("KeyD");
  let count = 0;
  for (let now = 1; now <= 1000; now += 1) {
    count += sched.due(now).length;
  }
  assert.equal(count, 20); // exactly 1000 ms / 50 ms
});

test("unbound keys are ignored", () => {
  const sched = new GestureScheduler();
  sched.keyDown("KeyQ");
  assert.equal(sched.current(), "NM");
  assert.ok(!("KeyQ" in DEFAULT_BINDINGS));
});

test("cursor at screen center maps to the camera forward ray in world frame", () => {
  const scene = sampleScene(); // box_yaw = 0: world = box_origin + p
  const cam = { ...ORBIT_PRESET };
  const eye = cameraEye(cam);
  const ray = gazeFromCursor(cam, scene, 480, 320, 960, 640);
  for (let i = 0; i < 3; i++) {
    assert.ok(Math.abs(ray.origin[i] - (scene.box_origin[i] + eye[i])) < 1e-12);
  }
  const toTarget = [
    cam.target[0] - eye[0], cam.target[1] - eye[1], cam.target[2] - eye[2],
  ];
  const n = Math.hypot(...toTarget);
  for (let i = 0; i < 3; i++) {
    assert.ok(Math.abs(ray.direction[i] - toTarget[i] / n) < 1e-12);
  }
});
