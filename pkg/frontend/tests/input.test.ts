import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import {
  InputController,
  SEND_PERIOD_MS,
  clampJoystick,
  commandFromJoystick,
} from "../src/input.js";

function lastCommand(frames: string[]): { v: number; w: number; t: number } {
  return JSON.parse(frames.at(-1)!);
}

describe("joystick mapping", () => {
  it("centered stick is exactly the zero command", () => {
    const { v, w } = commandFromJoystick({ x: 0, y: 0 }, 1.0, 1.0);
    expect(Object.is(v, 0)).toBe(true);
    expect(Object.is(w, 0)).toBe(true);
  });

  it("full forward maps to v_max", () => {
    expect(commandFromJoystick({ x: 0, y: 1 }, 1.0, 1.0)).toEqual({ v: 1.0, w: 0 });
  });

  it("forward-right corner maps to (v_max, -w_max)", () => {
    const { v, w } = commandFromJoystick({ x: 1, y: 1 }, 1.0, 1.0);
    expect(v).toBe(1.0);
    expect(w).toBe(-1.0);
  });

  it("vector is clamped to the unit box", () => {
    expect(clampJoystick({ x: 4, y: -9 })).toEqual({ x: 1, y: -1 });
  });
});

describe("keyboard bang-bang drive", () => {
  let frames: string[];
  let ctl: InputController;

  beforeEach(() => {
    vi.useFakeTimers();
    frames = [];
    ctl = new InputController((f) => frames.push(f));
    ctl.setLimits(1.0, 1.0);
  });

  afterEach(() => {
    ctl.stop();
    vi.useRealTimers();
  });

  it("key press sends immediately (well under the 50 ms budget)", () => {
    ctl.handleKey("ArrowUp", true);
    expect(frames.length).toBe(1);          // synchronous emit: latency ~0 ms
    expect(lastCommand(frames).v).toBe(1.0);
  });

  it("any change reaches the wire within one send period", () => {
    ctl.start();
    ctl.handleKey("KeyW", true);
    const before = frames.length;
    vi.advanceTimersByTime(SEND_PERIOD_MS);
    expect(SEND_PERIOD_MS).toBeLessThanOrEqual(50);
    expect(frames.length).toBeGreaterThan(before);
  });

  it("keep-alive repeats the held command at 20 Hz or faster", () => {
    ctl.start();
    ctl.handleKey("ArrowUp", true);
    const before = frames.length;
    vi.advanceTimersByTime(1000);
    const rate = frames.length - before;
    expect(rate).toBeGreaterThanOrEqual(20);
    expect(lastCommand(frames).v).toBe(1.0);
  });

  it("opposite keys cancel and release recenters", () => {
    ctl.handleKey("ArrowLeft", true);
    ctl.handleKey("ArrowRight", true);
    expect(lastCommand(frames).w).toBe(0);
    ctl.handleKey("ArrowRight", false);
    expect(lastCommand(frames).w).toBe(1.0);   // left turn remains
    ctl.handleKey("ArrowLeft", false);
    const last = lastCommand(frames);
    expect(last.v).toBe(0);
    expect(last.w).toBe(0);
  });

  it("pointer joystick overrides keys and falls back on release", () => {
    ctl.handleKey("ArrowUp", true);
    ctl.setPointerJoystick({ x: 0, y: 0.5 });
    expect(lastCommand(frames).v).toBe(0.5);
    ctl.setPointerJoystick(null);              // still holding ArrowUp
    expect(lastCommand(frames).v).toBe(1.0);
    ctl.handleKey("ArrowUp", false);
    expect(lastCommand(frames).v).toBe(0);
  });

  it("unknown keys are ignored", () => {
    expect(ctl.handleKey("KeyQ", true)).toBe(false);
    expect(frames.length).toBe(0);
  });
});
