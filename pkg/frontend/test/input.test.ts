import { describe, expect, it } from "vitest";

import { JOG_STEP, RateLimiter, jogForKey, jogKeyHelp, pickObstacle } from "../src/input.js";
import { stateMsg } from "./fixtures.js";

describe("jogForKey", () => {
  it("maps Q/A onto joint 0", () => {
    expect(jogForKey("KeyQ", 2)).toEqual({ joint: 0, delta: JOG_STEP });
    expect(jogForKey("KeyA", 2)).toEqual({ joint: 0, delta: -JOG_STEP });
  });

  it("maps W/S onto joint 1", () => {
    expect(jogForKey("KeyW", 2)).toEqual({ joint: 1, delta: JOG_STEP });
    expect(jogForKey("KeyS", 2)).toEqual({ joint: 1, delta: -JOG_STEP });
  });

  it("ignores keys beyond the joint count", () => {
    expect(jogForKey("KeyE", 2)).toBeNull();
    expect(jogForKey("KeyE", 3)).toEqual({ joint: 2, delta: JOG_STEP });
  });

  it("ignores unrelated keys", () => {
    expect(jogForKey("KeyZ", 2)).toBeNull();
    expect(jogForKey("Space", 2)).toBeNull();
  });

  it("describes only the live joints", () => {
    expect(jogKeyHelp(2)).toBe("Q/A joint 0  W/S joint 1");
  });
});

describe("pickObstacle", () => {
  const obstacles = stateMsg({
    obstacles: [
      { id: "near", pos: [1.0, 1.0], points: [[0, 0]] },
      { id: "far", pos: [1.3, 1.0], points: [[0, 0]] },
    ],
  }).obstacles;

  it("returns the nearest obstacle inside the radius", () => {
    expect(pickObstacle(obstacles, [1.05, 1.0])).toBe("near");
    expect(pickObstacle(obstacles, [1.25, 1.0])).toBe("far");
  });

  it("returns null when everything is out of reach", () => {
    expect(pickObstacle(obstacles, [-2.0, -2.0])).toBeNull();
    expect(pickObstacle([], [1.0, 1.0])).toBeNull();
  });
});

describe("RateLimiter", () => {
  it("passes the first event and throttles the burst", () => {
    const limiter = new RateLimiter(20);
    expect(limiter.allow(1000)).toBe(true);
    expect(limiter.allow(1005)).toBe(false);
    expect(limiter.allow(1019)).toBe(false);
    expect(limiter.allow(1020)).toBe(true);
    expect(limiter.allow(1041)).toBe(true);
  });
});
