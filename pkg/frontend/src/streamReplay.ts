/**
 * Client-side application of the job step stream.
 *
 * Deltas applied in order to the initial masked grid reconstruct the final
 * piece exactly; snapshots let late joiners resynchronize.  The replay never
 * invents tokens: every written value arrives from the service.
 */

import { MaskPattern } from "./maskPattern.js";
import { TokenGrid, cloneGrid, decodeBase64Grid, maskIds, setToken } from "./tokenGrid.js";

export interface StepMessage {
  type: "step";
  index: number;
  countdown: number;
  remaining_masks: number;
  deltas: [number, number, number][];
}

export interface SnapshotMessage {
  type: "snapshot";
  index: number;
  data_b64: string;
}

export interface DoneMessage {
  type: "done";
  piece_id: string;
}

export interface FailedMessage {
  type: "failed";
  error: string;
}

export type JobMessage = StepMessage | SnapshotMessage | DoneMessage | FailedMessage;

export interface ReplayState {
  grid: TokenGrid;
  initialMasks: number;
  remainingMasks: number;
  done: boolean;
  failed: string | null;
  resultPieceId: string | null;
  lastIndex: number;
}

export function maskedInit(piece: TokenGrid, pattern: MaskPattern): TokenGrid {
  if (pattern.steps !== piece.steps || pattern.tracks !== piece.tracks) {
    throw new Error("pattern shape does not match piece");
  }
  const grid = cloneGrid(piece);
  const masks = maskIds(piece.tracks);
  for (let step = 0; step < piece.steps; step++) {
    for (let track = 0; track < piece.tracks; track++) {
      if (pattern.get(step, track)) setToken(grid, step, track, masks[track]);
    }
  }
  return grid;
}

export function startReplay(initial: TokenGrid, initialMasks: number): ReplayState {
  return {
    grid: cloneGrid(initial),
    initialMasks,
    remainingMasks: initialMasks,
    done: false,
    failed: null,
    resultPieceId: null,
    lastIndex: 0,
  };
}

export function applyMessage(state: ReplayState, message: JobMessage): ReplayState {
  switch (message.type) {
    case "step": {
      for (const [step, track, token] of message.deltas) {
        setToken(state.grid, step, track, token);
      }
      state.remainingMasks = message.remaining_masks;
      state.lastIndex = message.index;
      return state;
    }
    case "snapshot": {
      state.grid = decodeBase64Grid(message.data_b64);
      state.lastIndex = message.index;
      return state;
    }
    case "done": {
      state.done = true;
      state.resultPieceId = message.piece_id;
      return state;
    }
    case "failed": {
      state.failed = message.error;
      return state;
    }
  }
}

/** Progress in [0, 1]: committed masks over the initial mask count. */
export function progress(state: ReplayState): number {
  if (state.initialMasks === 0) return 1;
  return 1 - state.remainingMasks / state.initialMasks;
}

/** Parse one SSE body chunk stream into JSON messages. */
export async function* parseSseStream(
  reader: ReadableStreamDefaultReader<Uint8Array>,
): AsyncGenerator<JobMessage> {
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { value, done } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    let boundary;
    while ((boundary = buffer.indexOf("\n\n")) >= 0) {
      const eventBlock = buffer.slice(0, boundary);
      buffer = buffer.slice(boundary + 2);
      for (const line of eventBlock.split("\n")) {
        if (line.startsWith("data: ")) {
          yield JSON.parse(line.slice(6)) as JobMessage;
        }
      }
    }
  }
}
