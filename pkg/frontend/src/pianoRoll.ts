/**
 * Piano-roll geometry and canvas rendering.
 *
 * Geometry (token decoding into note spans, cell rectangles, selections) is
 * pure and unit-testable; draw() just rasterizes it.  Melodic tracks render
 * pitch rows; the drum track renders its 9 class bits as rows below.
 */

import { MaskPattern } from "./maskPattern.js";
import { HOLD, NOTE_OFF, PITCH_LO, TokenGrid, getToken, isMasked } from "./tokenGrid.js";

export interface NoteSpan {
  track: number;
  pitch: number;        // MIDI pitch for melodic tracks, bit index for drums
  startStep: number;
  endStep: number;      // exclusive
}

export const TRACK_COLORS = ["#d62728", "#1f77b4", "#2f2f2f"];
export const PITCH_ROWS = 88; // MIDI 21..108
export const DRUM_ROWS = 9;

/** Decode melodic-track tokens into sounding note spans. */
export function melodicSpans(grid: TokenGrid, track: number): NoteSpan[] {
  const spans: NoteSpan[] = [];
  let step = 0;
  while (step < grid.steps) {
    const token = getToken(grid, step, track);
    if (token < NOTE_OFF) {
      let end = step + 1;
      while (end < grid.steps && getToken(grid, end, track) === HOLD) end++;
      spans.push({ track, pitch: token + PITCH_LO, startStep: step, endStep: end });
      step = end;
    } else {
      step++;
    }
  }
  return spans;
}

/** Decode drum-track tokens into one-step spans per set bit. */
export function drumSpans(grid: TokenGrid, track: number): NoteSpan[] {
  const spans: NoteSpan[] = [];
  for (let step = 0; step < grid.steps; step++) {
    const token = getToken(grid, step, track);
    if (token >= 512) continue; // mask
    for (let bit = 0; bit < DRUM_ROWS; bit++) {
      if (token & (1 << bit)) {
        spans.push({ track, pitch: bit, startStep: step, endStep: step + 1 });
      }
    }
  }
  return spans;
}

export function allSpans(grid: TokenGrid): NoteSpan[] {
  const spans: NoteSpan[] = [];
  for (let track = 0; track < Math.min(grid.tracks, 2); track++) {
    spans.push(...melodicSpans(grid, track));
  }
  if (grid.tracks === 3) spans.push(...drumSpans(grid, 2));
  return spans;
}

export interface Viewport {
  width: number;
  height: number;
  stepOffset: number;
  stepsVisible: number;
}

export function stepToX(viewport: Viewport, step: number): number {
  return ((step - viewport.stepOffset) / viewport.stepsVisible) * viewport.width;
}

export function xToStep(viewport: Viewport, x: number): number {
  return Math.floor(viewport.stepOffset + (x / viewport.width) * viewport.stepsVisible);
}

export function pitchToY(viewport: Viewport, pitch: number): number {
  const row = pitch - PITCH_LO;
  return viewport.height - ((row + 1) / PITCH_ROWS) * viewport.height;
}

export interface RollRenderOptions {
  grid: TokenGrid;
  mask: MaskPattern | null;
  viewport: Viewport;
  trackVisible: boolean[];
}

export function drawRoll(ctx: CanvasRenderingContext2D, options: RollRenderOptions): void {
  const { grid, mask, viewport, trackVisible } = options;
  ctx.clearRect(0, 0, viewport.width, viewport.height);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, viewport.width, viewport.height);

  const stepWidth = viewport.width / viewport.stepsVisible;
  ctx.strokeStyle = "#e0e0e0";
  for (let bar = 0; bar * grid.stepsPerBar <= grid.steps; bar++) {
    const x = stepToX(viewport, bar * grid.stepsPerBar);
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, viewport.height);
    ctx.stroke();
  }

  if (mask !== null) {
    ctx.fillStyle = "rgba(255, 180, 0, 0.25)";
    for (let step = 0; step < grid.steps; step++) {
      for (let track = 0; track < grid.tracks; track++) {
        if (!trackVisible[track] || !mask.get(step, track)) continue;
        ctx.fillRect(stepToX(viewport, step), 0, stepWidth, viewport.height);
      }
    }
  }

  const rowHeight = viewport.height / PITCH_ROWS;
  for (const span of allSpans(grid)) {
    if (!trackVisible[span.track]) continue;
    ctx.fillStyle = TRACK_COLORS[span.track] ?? "#333";
    const y = span.track === 2
      ? viewport.height - (span.pitch + 1) * (viewport.height / DRUM_ROWS) * 0.25
      : pitchToY(viewport, span.pitch);
    ctx.fillRect(
      stepToX(viewport, span.startStep),
      y,
      Math.max(1, stepWidth * (span.endStep - span.startStep) - 1),
      Math.max(2, rowHeight),
    );
  }

  ctx.fillStyle = "rgba(120, 120, 120, 0.55)";
  for (let step = 0; step < grid.steps; step++) {
    for (let track = 0; track < grid.tracks; track++) {
      if (trackVisible[track] && isMasked(grid, step, track)) {
        ctx.fillRect(stepToX(viewport, step), 0, Math.max(1, stepWidth - 1), 4);
      }
    }
  }
}
