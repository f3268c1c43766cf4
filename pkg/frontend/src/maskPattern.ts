/**
 * Mask patterns: which grid cells a job may regenerate.
 *
 * The wire format is run-length encoded per track: runs[track] is a list of
 * [start, length] spans of masked steps.  Edits are rectangle selections
 * with add/remove modes and union semantics; an undo stack stores inverse
 * edits so apply/invert round-trips exactly.
 */

export interface MaskPatternJson {
  steps: number;
  tracks: number;
  runs: [number, number][][];
}

export interface Selection {
  stepStart: number;
  stepEnd: number; // exclusive
  trackStart: number;
  trackEnd: number; // exclusive
}

export class MaskPattern {
  readonly steps: number;
  readonly tracks: number;
  readonly cells: Uint8Array; // step-major boolean grid

  constructor(steps: number, tracks: number, cells?: Uint8Array) {
    this.steps = steps;
    this.tracks = tracks;
    this.cells = cells ?? new Uint8Array(steps * tracks);
    if (this.cells.length !== steps * tracks) {
      throw new Error("mask cell buffer does not match shape");
    }
  }

  get(step: number, track: number): boolean {
    return this.cells[step * this.tracks + track] !== 0;
  }

  set(step: number, track: number, value: boolean): void {
    this.cells[step * this.tracks + track] = value ? 1 : 0;
  }

  count(): number {
    let n = 0;
    for (const c of this.cells) n += c;
    return n;
  }

  clone(): MaskPattern {
    return new MaskPattern(this.steps, this.tracks, new Uint8Array(this.cells));
  }

  equals(other: MaskPattern): boolean {
    return (
      this.steps === other.steps &&
      this.tracks === other.tracks &&
      this.cells.every((v, i) => v === other.cells[i])
    );
  }

  static all(steps: number, tracks: number): MaskPattern {
    const pattern = new MaskPattern(steps, tracks);
    pattern.cells.fill(1);
    return pattern;
  }

  static central512(steps: number, tracks: number): MaskPattern {
    const pattern = new MaskPattern(steps, tracks);
    const lo = Math.floor(steps / 4);
    const hi = Math.floor((3 * steps) / 4);
    for (let step = lo; step < hi; step++) {
      for (let track = 0; track < tracks; track++) pattern.set(step, track, true);
    }
    return pattern;
  }

  toJson(): MaskPatternJson {
    const runs: [number, number][][] = [];
    for (let track = 0; track < this.tracks; track++) {
      const spans: [number, number][] = [];
      let start = -1;
      for (let step = 0; step <= this.steps; step++) {
        const on = step < this.steps && this.get(step, track);
        if (on && start < 0) start = step;
        if (!on && start >= 0) {
          spans.push([start, step - start]);
          start = -1;
        }
      }
      runs.push(spans);
    }
    return { steps: this.steps, tracks: this.tracks, runs };
  }

  static fromJson(payload: MaskPatternJson): MaskPattern {
    if (
      typeof payload.steps !== "number" ||
      typeof payload.tracks !== "number" ||
      !Array.isArray(payload.runs) ||
      payload.runs.length !== payload.tracks
    ) {
      throw new Error("malformed mask pattern payload");
    }
    const pattern = new MaskPattern(payload.steps, payload.tracks);
    payload.runs.forEach((spans, track) => {
      for (const [start, length] of spans) {
        if (start < 0 || length < 0 || start + length > payload.steps) {
          throw new Error(`run [${start}, ${length}] exceeds ${payload.steps} steps`);
        }
        for (let step = start; step < start + length; step++) {
          pattern.set(step, track, true);
        }
      }
    });
    return pattern;
  }
}

export type EditMode = "add" | "remove";

export interface MaskEdit {
  selection: Selection;
  mode: EditMode;
  /** cells the edit actually flipped, for exact inversion */
  flipped: [number, number][];
}

/** Apply a rectangle edit in place; returns the inverse-enabling record. */
export function editMask(pattern: MaskPattern, selection: Selection, mode: EditMode): MaskEdit {
  const flipped: [number, number][] = [];
  const target = mode === "add";
  const stepEnd = Math.min(selection.stepEnd, pattern.steps);
  const trackEnd = Math.min(selection.trackEnd, pattern.tracks);
  for (let step = Math.max(0, selection.stepStart); step < stepEnd; step++) {
    for (let track = Math.max(0, selection.trackStart); track < trackEnd; track++) {
      if (pattern.get(step, track) !== target) {
        pattern.set(step, track, target);
        flipped.push([step, track]);
      }
    }
  }
  return { selection, mode, flipped };
}

export function invertEdit(pattern: MaskPattern, edit: MaskEdit): void {
  const restored = edit.mode !== "add";
  for (const [step, track] of edit.flipped) {
    pattern.set(step, track, restored);
  }
}

/** Undo/redo stack over a mutable pattern. */
export class MaskEditor {
  readonly pattern: MaskPattern;
  private undoStack: MaskEdit[] = [];
  private redoStack: MaskEdit[] = [];

  constructor(steps: number, tracks: number) {
    this.pattern = new MaskPattern(steps, tracks);
  }

  edit(selection: Selection, mode: EditMode): void {
    const record = editMask(this.pattern, selection, mode);
    this.undoStack.push(record);
    this.redoStack = [];
  }

  undo(): boolean {
    const record = this.undoStack.pop();
    if (!record) return false;
    invertEdit(this.pattern, record);
    this.redoStack.push(record);
    return true;
  }

  redo(): boolean {
    const record = this.redoStack.pop();
    if (!record) return false;
    for (const [step, track] of record.flipped) {
      this.pattern.set(step, track, record.mode === "add");
    }
    this.undoStack.push(record);
    return true;
  }
}
