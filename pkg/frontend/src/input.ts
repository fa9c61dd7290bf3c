// Joystick / keyboard to unicycle commands.
//
// The joystick vector lives in the unit box: y forward, x right.  Keyboard
// arrows and WASD act as a bang-bang joystick.  A change sends immediately;
// a 50 ms keep-alive repeats the current command while the session runs, so
// the wire rate is at least 20 Hz whether or not anything moves.

import { encodeCommand } from "./protocol.js";

export interface JoystickState {
  x: number; // [-1, 1], positive = right
  y: number; // [-1, 1], positive = forward
}

export function clampJoystick(j: JoystickState): JoystickState {
  return {
    x: Math.max(-1, Math.min(1, j.x)),
    y: Math.max(-1, Math.min(1, j.y)),
  };
}

export function commandFromJoystick(
  j: JoystickState, vMax: number, wMax: number,
): { v: number; w: number } {
  const c = clampJoystick(j);
  // "+ 0" folds negative zero so idle sticks encode exactly {v: 0, w: 0}
  return { v: c.y * vMax + 0, w: -c.x * wMax + 0 };
}

const KEY_AXES: Record<string, [keyof JoystickState, number]> = {
  ArrowUp: ["y", 1], KeyW: ["y", 1],
  ArrowDown: ["y", -1], KeyS: ["y", -1],
  ArrowLeft: ["x", -1], KeyA: ["x", -1],
  ArrowRight: ["x", 1], KeyD: ["x", 1],
};

export const SEND_PERIOD_MS = 50;

export class InputController {
  private held = new Set<string>();
  private stick: JoystickState = { x: 0, y: 0 };
  private usingPointer = false;
  private timer: ReturnType<typeof setInterval> | null = null;
  private vMax = 1.0;
  private wMax = 1.0;
  private simTime = 0;

  constructor(private send: (frame: string) => void) {}

  setLimits(vMax: number, wMax: number): void {
    this.vMax = vMax;
    this.wMax = wMax;
  }

  setSimTime(t: number): void {
    this.simTime = t;
  }

  get joystick(): JoystickState {
    if (this.usingPointer) return this.stick;
    const j: JoystickState = { x: 0, y: 0 };
    for (const code of this.held) {
      const axis = KEY_AXES[code];
      if (axis) j[axis[0]] += axis[1];
    }
    return clampJoystick(j);
  }

  handleKey(code: string, down: boolean): boolean {
    if (!(code in KEY_AXES)) return false;
    const before = this.joystick;
    if (down) this.held.add(code);
    else this.held.delete(code);
    this.usingPointer = false;
    const after = this.joystick;
    if (after.x !== before.x || after.y !== before.y) this.emit();
    return true;
  }

  setPointerJoystick(j: JoystickState | null): void {
    if (j === null) {
      this.usingPointer = false;
      this.stick = { x: 0, y: 0 };
    } else {
      this.usingPointer = true;
      this.stick = clampJoystick(j);
    }
    this.emit();
  }

  start(): void {
    if (this.timer === null) {
      this.timer = setInterval(() => this.emit(), SEND_PERIOD_MS);
    }
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  emit(): void {
    const { v, w } = commandFromJoystick(this.joystick, this.vMax, this.wMax);
    this.send(encodeCommand(v, w, this.simTime));
  }

  attach(target: Pick<Document, "addEventListener">): void {
    target.addEventListener("keydown", (e) => {
      const ev = e as KeyboardEvent;
      if (!ev.repeat && this.handleKey(ev.code, true)) ev.preventDefault();
    });
    target.addEventListener("keyup", (e) => {
      const ev = e as KeyboardEvent;
      if (this.handleKey(ev.code, false)) ev.preventDefault();
    });
  }
}
