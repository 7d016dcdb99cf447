// Orbit camera over the box frame with perspective projection and the
// inverse mapping used to turn the cursor into a gaze ray.

export type Vec3 = [number, number, number];

export interface Camera {
  yaw: number;      // radians about +z, 0 looks along -x toward the target
  pitch: number;    // radians above the horizon
  distance: number; // meters from the target
  target: Vec3;
  fovY: number;     // vertical field of view, radians
}

export const ORBIT_PRESET: Camera = {
  yaw: Math.PI * 0.75,
  pitch: 0.55,
  distance: 1.1,
  target: [0, 0, 0.05],
  fovY: Math.PI / 4,
};

// Roughly the seated operator's eye: behind the shoulder, looking down at
// the box center.
export const FIRST_PERSON_PRESET: Camera = {
  yaw: Math.PI,
  pitch: 0.75,
  distance: 0.9,
  target: [0, 0, 0.0],
  fovY: Math.PI / 3,
};

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  return n > 0 ? [v[0] / n, v[1] / n, v[2] / n] : [0, 0, 0];
}

export function cameraEye(cam: Camera): Vec3 {
  const horizontal = Math.cos(cam.pitch) * cam.distance;
  return [
    cam.target[0] + horizontal * Math.cos(cam.yaw),
    cam.target[1] + horizontal * Math.sin(cam.yaw),
    cam.target[2] + Math.sin(cam.pitch) * cam.distance,
  ];
}

interface Basis {
  eye: Vec3;
  forward: Vec3;
  right: Vec3;
  up: Vec3;
}

function basis(cam: Camera): Basis {
  const eye = cameraEye(cam);
  const forward = normalize(sub(cam.target, eye));
  const right = normalize(cross(forward, [0, 0, 1]));
  const up = cross(right, forward);
  return { eye, forward, right, up };
}

export interface Projected {
  x: number;
  y: number;
  depth: number;
}

export function project(
  cam: Camera, p: Vec3, width: number, height: number,
): Projected | null {
  const b = basis(cam);
  const rel = sub(p, b.eye);
  const depth = dot(rel, b.forward);
  if (depth <= 1e-6) {
    return null; // behind the camera
  }
  const f = (height / 2) / Math.tan(cam.fovY / 2);
  return {
    x: width / 2 + (f * dot(rel, b.right)) / depth,
    y: height / 2 - (f * dot(rel, b.up)) / depth,
    depth,
  };
}

export interface Ray {
  origin: Vec3;
  direction: Vec3;
}

export function unproject(
  cam: Camera, sx: number, sy: number, width: number, height: number,
): Ray {
  const b = basis(cam);
  const f = (height / 2) / Math.tan(cam.fovY / 2);
  const xc = (sx - width / 2) / f;
  const yc = (height / 2 - sy) / f;
  const direction = normalize([
    b.forward[0] + xc * b.right[0] + yc * b.up[0],
    b.forward[1] + xc * b.right[1] + yc * b.up[1],
    b.forward[2] + xc * b.right[2] + yc * b.up[2],
  ]);
  return { origin: b.eye, direction };
}

// Box frame -> world frame using the scene's origin and yaw.
export function boxToWorldPoint(
  origin: [number, number, number], yaw: number, p: Vec3,
): Vec3 {
  const c = Math.cos(yaw);
  const s = Math.sin(yaw);
  return [
    origin[0] + c * p[0] - s * p[1],
    origin[1] + s * p[0] + c * p[1],
    origin[2] + p[2],
  ];
}

export function boxToWorldDirection(yaw: number, d: Vec3): Vec3 {
  const c = Math.cos(yaw);
  const s = Math.sin(yaw);
  return [c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]];
}
