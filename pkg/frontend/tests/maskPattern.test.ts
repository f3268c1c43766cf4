import { describe, expect, it } from "vitest";

import { editMask, invertEdit, MaskEditor, MaskPattern } from "../src/maskPattern.js";

describe("MaskPattern JSON round trip", () => {
  it("round-trips presets through the wire schema", () => {
    for (const pattern of [
      MaskPattern.all(64, 3),
      new MaskPattern(64, 3),
      MaskPattern.central512(1024, 3),
    ]) {
      const back = MaskPattern.fromJson(JSON.parse(JSON.stringify(pattern.toJson())));
      expect(back.equals(pattern)).toBe(true);
    }
  });

  it("round-trips scattered cells", () => {
    const pattern = new MaskPattern(32, 2);
    for (const [step, track] of [[0, 0], [1, 0], [5, 1], [31, 0], [31, 1]] as const) {
      pattern.set(step, track, true);
    }
    expect(MaskPattern.fromJson(pattern.toJson()).equals(pattern)).toBe(true);
  });

  it("rejects runs that exceed the grid", () => {
    expect(() =>
      MaskPattern.fromJson({ steps: 16, tracks: 1, runs: [[[10, 10]]] }),
    ).toThrow(/exceeds/);
  });

  it("rejects malformed payloads", () => {
    expect(() =>
      MaskPattern.fromJson({ steps: 16, tracks: 2, runs: [[]] } as never),
    ).toThrow(/malformed/);
  });
});

describe("mask editing", () => {
  const selection = { stepStart: 4, stepEnd: 8, trackStart: 0, trackEnd: 1 };

  it("selecting the middle bars equals the central-512 preset", () => {
    const editor = new MaskEditor(1024, 3);
    editor.edit({ stepStart: 256, stepEnd: 768, trackStart: 0, trackEnd: 3 }, "add");
    expect(editor.pattern.equals(MaskPattern.central512(1024, 3))).toBe(true);
  });

  it("remove on an empty pattern is a no-op", () => {
    const pattern = new MaskPattern(16, 1);
    const edit = editMask(pattern, selection, "remove");
    expect(edit.flipped).toHaveLength(0);
    expect(pattern.count()).toBe(0);
  });

  it("overlapping selections union", () => {
    const pattern = new MaskPattern(16, 1);
    editMask(pattern, { stepStart: 0, stepEnd: 6, trackStart: 0, trackEnd: 1 }, "add");
    editMask(pattern, { stepStart: 4, stepEnd: 10, trackStart: 0, trackEnd: 1 }, "add");
    expect(pattern.count()).toBe(10);
  });

  it("apply then invert restores the previous grid exactly", () => {
    const pattern = new MaskPattern(16, 2);
    editMask(pattern, { stepStart: 2, stepEnd: 9, trackStart: 0, trackEnd: 2 }, "add");
    const snapshot = pattern.clone();
    const edit = editMask(pattern, { stepStart: 5, stepEnd: 12, trackStart: 1, trackEnd: 2 }, "add");
    invertEdit(pattern, edit);
    expect(pattern.equals(snapshot)).toBe(true);
  });

  it("undo/redo are consistent through mixed edits", () => {
    const editor = new MaskEditor(32, 2);
    editor.edit({ stepStart: 0, stepEnd: 16, trackStart: 0, trackEnd: 2 }, "add");
    const afterFirst = editor.pattern.clone();
    editor.edit({ stepStart: 8, stepEnd: 24, trackStart: 0, trackEnd: 1 }, "remove");
    const afterSecond = editor.pattern.clone();

    expect(editor.undo()).toBe(true);
    expect(editor.pattern.equals(afterFirst)).toBe(true);
    expect(editor.redo()).toBe(true);
    expect(editor.pattern.equals(afterSecond)).toBe(true);
    expect(editor.undo()).toBe(true);
    expect(editor.undo()).toBe(true);
    expect(editor.pattern.count()).toBe(0);
    expect(editor.undo()).toBe(false);
  });
});
