/**
 * Client-side audition: schedule the grid onto simple oscillators.
 *
 * Building the schedule is pure (and refuses masked cells); playback maps
 * it onto WebAudio at a chosen tempo.  Constant tempo, velocity-free.
 */

import { Selection } from "./maskPattern.js";
import { allSpans, NoteSpan } from "./pianoRoll.js";
import { TokenGrid, isMasked } from "./tokenGrid.js";

export interface ScheduledNote {
  track: number;
  frequencyHz: number;
  startBeat: number;
  durationBeats: number;
}

const DRUM_FREQUENCIES = [60, 200, 800, 1200, 120, 160, 220, 2000, 1600];

export function midiToFrequency(pitch: number): number {
  return 440 * Math.pow(2, (pitch - 69) / 12);
}

export class MaskedSelectionError extends Error {}

/** Pure schedule builder; raises if the selection touches masked cells. */
export function buildSchedule(grid: TokenGrid, selection?: Selection): ScheduledNote[] {
  const stepStart = selection?.stepStart ?? 0;
  const stepEnd = selection?.stepEnd ?? grid.steps;
  const trackStart = selection?.trackStart ?? 0;
  const trackEnd = selection?.trackEnd ?? grid.tracks;
  for (let step = stepStart; step < stepEnd; step++) {
    for (let track = trackStart; track < trackEnd; track++) {
      if (isMasked(grid, step, track)) {
        throw new MaskedSelectionError(
          `cell (step ${step}, track ${track}) is masked; infill before audition`,
        );
      }
    }
  }
  const stepsPerBeat = grid.stepsPerBar / 4;
  const inSelection = (span: NoteSpan) =>
    span.startStep >= stepStart && span.startStep < stepEnd &&
    span.track >= trackStart && span.track < trackEnd;
  return allSpans(grid).filter(inSelection).map((span) => ({
    track: span.track,
    frequencyHz: span.track === 2
      ? DRUM_FREQUENCIES[span.pitch]
      : midiToFrequency(span.pitch),
    startBeat: (span.startStep - stepStart) / stepsPerBeat,
    durationBeats: (span.endStep - span.startStep) / stepsPerBeat,
  }));
}

export interface OscillatorContext {
  currentTime: number;
  destination: AudioNode;
  createOscillator(): OscillatorNode;
  createGain(): GainNode;
}

export function play(schedule: ScheduledNote[], ctx: OscillatorContext, bpm = 120): void {
  const secondsPerBeat = 60 / bpm;
  const t0 = ctx.currentTime + 0.05;
  for (const note of schedule) {
    const osc = ctx.createOscillator();
    const gain = ctx.createGain();
    osc.type = note.track === 2 ? "square" : "triangle";
    osc.frequency.value = note.frequencyHz;
    const start = t0 + note.startBeat * secondsPerBeat;
    const stop = start + Math.max(0.05, note.durationBeats * secondsPerBeat * 0.95);
    gain.gain.setValueAtTime(0.12, start);
    gain.gain.exponentialRampToValueAtTime(0.001, stop);
    osc.connect(gain).connect(ctx.destination);
    osc.start(start);
    osc.stop(stop + 0.02);
  }
}
