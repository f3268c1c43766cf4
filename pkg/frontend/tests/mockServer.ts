/**
 * In-memory mock of the service API, exposed as a fetch-compatible handler.
 *
 * Implements the same JSON schemas as the real service: piece upload and
 * download, mask-validated job start, step streaming as SSE, cancel.  The
 * mock "sampler" fills masked cells deterministically so replay tests have
 * known answers.
 */

import { MaskPattern, MaskPatternJson } from "../src/maskPattern.js";
import { JobMessage } from "../src/streamReplay.js";
import {
  TokenGrid,
  cloneGrid,
  decodeBase64Grid,
  encodeGridBase64,
  maskIds,
  setToken,
} from "../src/tokenGrid.js";

interface MockJob {
  id: string;
  status: "done" | "failed";
  messages: JobMessage[];
  resultId: string | null;
}

export class MockServer {
  pieces = new Map<string, TokenGrid>();
  jobs = new Map<string, MockJob>();
  private counter = 0;
  readonly model = { name: "mock", steps: 64, tracks: 1, vocab_sizes: [90], timesteps: 1024 };

  /** fetch-compatible entry point. */
  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(init.body as string) : null;
    try {
      return this.route(path, init?.method ?? "GET", body);
    } catch (error) {
      return json({ detail: String(error) }, 400);
    }
  };

  private route(path: string, method: string, body: unknown): Response {
    if (path === "/models") return json({ models: [this.model] });
    if (path === "/pieces" && method === "POST") {
      const payload = body as { name: string; data_b64: string };
      const grid = decodeBase64Grid(payload.data_b64);
      const id = `piece-${++this.counter}`;
      this.pieces.set(id, grid);
      return json({ piece_id: id, steps: grid.steps, tracks: grid.tracks });
    }
    let match = path.match(/^\/pieces\/([^/]+)$/);
    if (match) {
      const grid = this.pieces.get(match[1]);
      if (!grid) return json({ detail: "unknown piece" }, 404);
      return json({
        piece_id: match[1],
        name: match[1],
        steps: grid.steps,
        tracks: grid.tracks,
        data_b64: encodeGridBase64(grid),
      });
    }
    if (path === "/jobs" && method === "POST") return this.startJob(body as Record<string, unknown>);
    match = path.match(/^\/jobs\/([^/]+)\/stream$/);
    if (match) return this.stream(match[1]);
    match = path.match(/^\/jobs\/([^/]+)\/cancel$/);
    if (match) return this.describe(match[1]);
    match = path.match(/^\/jobs\/([^/]+)$/);
    if (match) return this.describe(match[1]);
    return json({ detail: `no route ${method} ${path}` }, 404);
  }

  private describe(jobId: string): Response {
    const job = this.jobs.get(jobId);
    if (!job) return json({ detail: "unknown job" }, 404);
    return json({
      job_id: job.id,
      kind: "infill",
      status: job.status,
      error: null,
      result_piece_id: job.resultId,
      trace_length: job.messages.length,
    });
  }

  private startJob(payload: Record<string, unknown>): Response {
    const pieceId = payload.piece_id as string;
    const base = this.pieces.get(pieceId);
    if (!base) return json({ detail: "unknown piece" }, 404);
    let pattern: MaskPattern;
    try {
      pattern = MaskPattern.fromJson(payload.mask as MaskPatternJson);
    } catch (error) {
      return json({ detail: `malformed mask pattern: ${String(error)}` }, 400);
    }
    if (pattern.steps !== base.steps || pattern.tracks !== base.tracks) {
      return json({ detail: "mask shape does not match piece shape" }, 400);
    }
    const steps = (payload.steps as number) ?? 8;
    const job = this.runMockSampler(base, pattern, steps);
    this.jobs.set(job.id, job);
    return json({ job_id: job.id });
  }

  /**
   * Deterministic mock reverse diffusion: at countdown i, commit the first
   * ceil(remaining / i) still-masked cells in row-major order with token
   * (step % 88); snapshot every 32 steps like the real service.
   */
  private runMockSampler(base: TokenGrid, pattern: MaskPattern, steps: number): MockJob {
    const id = `job-${++this.counter}`;
    const grid = cloneGrid(base);
    const masks = maskIds(grid.tracks);
    const masked: [number, number][] = [];
    for (let step = 0; step < grid.steps; step++) {
      for (let track = 0; track < grid.tracks; track++) {
        if (pattern.get(step, track)) {
          setToken(grid, step, track, masks[track]);
          masked.push([step, track]);
        }
      }
    }
    const messages: JobMessage[] = [];
    let index = 0;
    for (let countdown = steps; countdown >= 1; countdown--) {
      index += 1;
      const commitCount = countdown === 1 ? masked.length : Math.ceil(masked.length / countdown);
      const committed = masked.splice(0, commitCount);
      const deltas: [number, number, number][] = committed.map(([step, track]) => {
        const token = step % 88;
        setToken(grid, step, track, token);
        return [step, track, token];
      });
      messages.push({
        type: "step",
        index,
        countdown,
        remaining_masks: masked.length,
        deltas,
      });
      if (index % 32 === 0) {
        messages.push({ type: "snapshot", index, data_b64: encodeGridBase64(grid) });
      }
    }
    const resultId = `piece-${++this.counter}`;
    this.pieces.set(resultId, grid);
    messages.push({ type: "done", piece_id: resultId });
    return { id, status: "done", messages, resultId };
  }

  private stream(jobId: string): Response {
    const job = this.jobs.get(jobId);
    if (!job) return json({ detail: "unknown job" }, 404);
    const payload = job.messages.map((m) => `data: ${JSON.stringify(m)}\n\n`).join("");
    return new Response(payload, {
      status: 200,
      headers: { "content-type": "text/event-stream" },
    });
  }
}

function json(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}
