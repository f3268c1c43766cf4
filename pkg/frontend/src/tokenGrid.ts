/**
 * Binary token-grid format shared with the service.
 *
 * Layout: 16-byte header (magic "NFTK", u16 version, u16 tracks, u32 steps,
 * u16 steps-per-bar, 2 pad bytes; little-endian) followed by steps x tracks
 * uint16 token values, step-major.
 */

export const TOKEN_FILE_MAGIC = "NFTK";
export const TOKEN_FILE_VERSION = 1;
const HEADER_SIZE = 16;

export const MELODY_VOCAB = 90;
export const DRUM_VOCAB = 512;
export const NOTE_OFF = 88;
export const HOLD = 89;
export const PITCH_LO = 21;

export interface TokenGrid {
  steps: number;
  tracks: number;
  stepsPerBar: number;
  /** step-major, track-minor; length = steps * tracks */
  values: Uint16Array;
}

export function vocabSizes(tracks: number): number[] {
  return tracks === 3 ? [MELODY_VOCAB, MELODY_VOCAB, DRUM_VOCAB] : [MELODY_VOCAB];
}

export function maskIds(tracks: number): number[] {
  return vocabSizes(tracks);
}

export function getToken(grid: TokenGrid, step: number, track: number): number {
  return grid.values[step * grid.tracks + track];
}

export function setToken(grid: TokenGrid, step: number, track: number, token: number): void {
  grid.values[step * grid.tracks + track] = token;
}

export function isMasked(grid: TokenGrid, step: number, track: number): boolean {
  return getToken(grid, step, track) === maskIds(grid.tracks)[track];
}

export function cloneGrid(grid: TokenGrid): TokenGrid {
  return { ...grid, values: new Uint16Array(grid.values) };
}

export function gridsEqual(a: TokenGrid, b: TokenGrid): boolean {
  if (a.steps !== b.steps || a.tracks !== b.tracks || a.stepsPerBar !== b.stepsPerBar) {
    return false;
  }
  return a.values.every((v, i) => v === b.values[i]);
}

export function decodeTokenGrid(data: ArrayBuffer | Uint8Array): TokenGrid {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  if (bytes.length < HEADER_SIZE) {
    throw new Error(`token data truncated: ${bytes.length} bytes`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const magic = String.fromCharCode(bytes[0], bytes[1], bytes[2], bytes[3]);
  if (magic !== TOKEN_FILE_MAGIC) {
    throw new Error(`bad token magic ${JSON.stringify(magic)}`);
  }
  const version = view.getUint16(4, true);
  if (version !== TOKEN_FILE_VERSION) {
    throw new Error(`unsupported token format version ${version}`);
  }
  const tracks = view.getUint16(6, true);
  const steps = view.getUint32(8, true);
  const stepsPerBar = view.getUint16(12, true);
  const expected = HEADER_SIZE + 2 * steps * tracks;
  if (bytes.length !== expected) {
    throw new Error(`token data size ${bytes.length} != expected ${expected}`);
  }
  const values = new Uint16Array(steps * tracks);
  for (let i = 0; i < values.length; i++) {
    values[i] = view.getUint16(HEADER_SIZE + 2 * i, true);
  }
  return { steps, tracks, stepsPerBar, values };
}

export function encodeTokenGrid(grid: TokenGrid): Uint8Array {
  const out = new Uint8Array(HEADER_SIZE + 2 * grid.values.length);
  const view = new DataView(out.buffer);
  out[0] = 78; // N
  out[1] = 70; // F
  out[2] = 84; // T
  out[3] = 75; // K
  view.setUint16(4, TOKEN_FILE_VERSION, true);
  view.setUint16(6, grid.tracks, true);
  view.setUint32(8, grid.steps, true);
  view.setUint16(12, grid.stepsPerBar, true);
  for (let i = 0; i < grid.values.length; i++) {
    view.setUint16(HEADER_SIZE + 2 * i, grid.values[i], true);
  }
  return out;
}

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const raw = atob(b64);
    const out = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

export function bytesToBase64(bytes: Uint8Array): string {
  if (typeof btoa === "function") {
    let raw = "";
    for (const b of bytes) raw += String.fromCharCode(b);
    return btoa(raw);
  }
  return Buffer.from(bytes).toString("base64");
}

export function decodeBase64Grid(b64: string): TokenGrid {
  return decodeTokenGrid(base64ToBytes(b64));
}

export function encodeGridBase64(grid: TokenGrid): string {
  return bytesToBase64(encodeTokenGrid(grid));
}
