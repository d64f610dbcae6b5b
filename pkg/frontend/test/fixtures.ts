import { StateMsg } from "../src/protocol.js";

export function stateMsg(overrides: Partial<StateMsg> = {}): StateMsg {
  return {
    type: "state",
    v: "1",
    t: 1.0,
    q: [0.4, -0.2],
    ee: [1.8, 0.2],
    u_nom: [0.0, 0.0],
    u: [0.0, 0.0],
    h: 0.5,
    dhdt: 0.0,
    status: "inactive",
    filter_on: true,
    paused: false,
    obstacles: [
      { id: "ball", pos: [1.5, 1.0], points: [[0, 0]] },
    ],
    bubbles: [{ center: [0.4, -0.2], radius: 0.3 }],
    plan: { waypoints: [[0.4, -0.2], [0.9, 0.1]] },
    events: [],
    ...overrides,
  };
}
