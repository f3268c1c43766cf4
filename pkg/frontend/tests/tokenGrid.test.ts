import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import {
  decodeTokenGrid,
  encodeTokenGrid,
  getToken,
  gridsEqual,
  HOLD,
  TokenGrid,
} from "../src/tokenGrid.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

function makeGrid(steps: number, tracks: number): TokenGrid {
  const values = new Uint16Array(steps * tracks);
  values.fill(HOLD);
  values[0] = 39;
  if (tracks === 3) values[2] = 500;
  return { steps, tracks, stepsPerBar: 16, values };
}

describe("token grid codec", () => {
  it("encode/decode round-trips", () => {
    for (const grid of [makeGrid(64, 1), makeGrid(256, 3)]) {
      const back = decodeTokenGrid(encodeTokenGrid(grid));
      expect(gridsEqual(back, grid)).toBe(true);
    }
  });

  it("rejects a bad magic", () => {
    const bytes = encodeTokenGrid(makeGrid(16, 1));
    bytes[0] = 88;
    expect(() => decodeTokenGrid(bytes)).toThrow(/magic/);
  });

  it("rejects truncated data", () => {
    const bytes = encodeTokenGrid(makeGrid(16, 1));
    expect(() => decodeTokenGrid(bytes.slice(0, 20))).toThrow(/size/);
  });

  it("decodes the service-produced fixture byte-for-byte", () => {
    const bytes = new Uint8Array(readFileSync(join(FIXTURES, "initial.tok")));
    const grid = decodeTokenGrid(bytes);
    expect(grid.steps).toBeGreaterThan(0);
    expect(grid.stepsPerBar).toBe(16);
    // re-encoding reproduces the exact file
    expect(Buffer.from(encodeTokenGrid(grid))).toEqual(Buffer.from(bytes));
    expect(getToken(grid, 0, 0)).toBe(grid.values[0]);
  });
});
