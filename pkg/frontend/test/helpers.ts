import type { SceneMsg, SnapshotMsg } from "../src/protocol.js";

export function sampleScene(): SceneMsg {
  return {
    kind: "scene",
    method: "D",
    duration: 300,
    order: ["R1", "B1", "R2", "B2"],
    box_origin: [0.6, 0, 0.98],
    box_yaw: 0,
    floor_depth: 0.35,
    floor_width: 0.55,
    wall_height: 0.08,
    wall_thickness: 0.01,
    partition_height: 0.12,
    partition_thickness: 0.012,
    block_radius: 0.025,
    block_height: 0.05,
    target_radius: 0.05,
    slots: { R1: [-0.13, -0.08], B1: [-0.13, -0.17], R2: [-0.07, -0.08], B2: [-0.07, -0.17] },
    targets: { R1: [-0.13, 0.08], B1: [-0.13, 0.17], R2: [-0.07, 0.08], B2: [-0.07, 0.17] },
  };
}

export function sampleSnapshot(overrides: Partial<SnapshotMsg> = {}): SnapshotMsg {
  return {
    kind: "snapshot",
    t: 1.0,
    q: [0.5, -0.1, 0, 1.1, 0, 0, 0],
    arm: [[-0.6, 0, 0.42], [-0.35, -0.02, 0.25], [-0.15, -0.05, 0.15], [-0.1, -0.06, 0.08]],
    hand: "open",
    blocks: {
      R1: [-0.13, -0.08, 0.025],
      B1: [-0.13, -0.17, 0.025],
      R2: [-0.07, -0.08, 0.025],
      B2: [-0.07, -0.17, 0.025],
    },
    attached: null,
    stage: "pick",
    selection: "R1",
    locked: false,
    marker: null,
    marker_frozen: false,
    mode: "pick: unlocked",
    guard: false,
    plan: null,
    cues: [],
    remaining: 299.0,
    belief: { R1: 0.7, B1: 0.1, R2: 0.15, B2: 0.05 },
    ...overrides,
  };
}
