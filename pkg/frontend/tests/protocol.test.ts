// Conformance against a golden transcript recorded from a real server session.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  encodeCommand,
  isEndMsg,
  isMetricsMsg,
  isStateMsg,
  parseServerMessage,
} from "../src/protocol.js";

const fixture = join(dirname(fileURLToPath(import.meta.url)), "fixtures", "transcript.jsonl");

function transcriptLines(): string[] {
  return readFileSync(fixture, "utf-8").trim().split("\n");
}

describe("golden transcript", () => {
  it("every recorded message parses as a known type", () => {
    const lines = transcriptLines();
    expect(lines.length).toBeGreaterThan(10);
    let states = 0;
    let ends = 0;
    for (const line of lines) {
      const msg = parseServerMessage(line);
      expect(msg, `unparseable: ${line.slice(0, 120)}`).not.toBeNull();
      if (msg!.type === "state") states++;
      if (msg!.type === "end") ends++;
    }
    expect(states).toBeGreaterThan(5);
    expect(ends).toBe(1);
  });

  it("state messages carry world geometry the renderer needs", () => {
    for (const line of transcriptLines()) {
      const msg = parseServerMessage(line);
      if (msg?.type !== "state") continue;
      expect(msg.arena[0]).toBeGreaterThan(0);
      expect(msg.robot.footprint).toBeGreaterThan(0);
      expect(msg.robot.virtual_boundary).toBeGreaterThan(msg.robot.footprint);
      for (const row of msg.agents) {
        expect(row[5]).toBeGreaterThan(0);      // radius
        expect([0, 1, 2]).toContain(row[6]);    // kind code
      }
    }
  });

  it("the end message references a persisted session log", () => {
    const last = parseServerMessage(transcriptLines().at(-1)!);
    expect(last?.type).toBe("end");
    if (last?.type === "end") {
      expect(last.log.endsWith(".jsonl")).toBe(true);
      expect(last.report).not.toBeNull();
    }
  });
});

describe("message guards", () => {
  it("reject malformed frames instead of throwing", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage("{}")).toBeNull();
    expect(parseServerMessage('{"type":"state","t":"soon"}')).toBeNull();
    expect(parseServerMessage('{"type":"metrics","t":1}')).toBeNull();
  });

  it("guards discriminate between types", () => {
    const metrics = { type: "metrics", t: 1, density_2_5: 0.1, min_clearance: null, fluency: 1, agreement: 1 };
    expect(isMetricsMsg(metrics)).toBe(true);
    expect(isStateMsg(metrics)).toBe(false);
    expect(isEndMsg(metrics)).toBe(false);
  });
});

describe("command encoding", () => {
  it("matches the wire schema exactly", () => {
    const frame = JSON.parse(encodeCommand(0.5, -0.25, 12.34));
    expect(frame).toEqual({ type: "cmd", v: 0.5, w: -0.25, t: 12.34 });
  });
});
