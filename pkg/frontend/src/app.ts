/**
 * Studio wiring: load a piece, paint masks, run infilling live, audition.
 *
 * One rendering loop; stream messages apply in arrival order and rendering
 * coalesces to animation frames, so the grid on screen always equals the
 * replayed stream state.  Edits lock while a job streams into the view.
 */

import { ApiClient } from "./apiClient.js";
import { buildSchedule, MaskedSelectionError, play } from "./audition.js";
import { MaskEditor, Selection } from "./maskPattern.js";
import { drawRoll, Viewport, xToStep } from "./pianoRoll.js";
import { applyMessage, maskedInit, progress, ReplayState, startReplay } from "./streamReplay.js";
import { cloneGrid, TokenGrid } from "./tokenGrid.js";

interface StudioElements {
  canvas: HTMLCanvasElement;
  modelSelect: HTMLSelectElement;
  pieceSelect: HTMLSelectElement;
  stepsInput: HTMLInputElement;
  densityToggle: HTMLInputElement;
  densitySlider: HTMLInputElement;
  scaleInput: HTMLInputElement;
  modeAdd: HTMLInputElement;
  runButton: HTMLButtonElement;
  cancelButton: HTMLButtonElement;
  undoButton: HTMLButtonElement;
  redoButton: HTMLButtonElement;
  auditionButton: HTMLButtonElement;
  progressBar: HTMLProgressElement;
  statusLine: HTMLElement;
}

export class Studio {
  private piece: TokenGrid | null = null;
  private editor: MaskEditor | null = null;
  private replay: ReplayState | null = null;
  private activeJob: string | null = null;
  private dragStart: { x: number; y: number } | null = null;
  private pendingFrame = false;

  constructor(
    private readonly api: ApiClient,
    private readonly el: StudioElements,
  ) {}

  async init(): Promise<void> {
    const { models } = await this.api.listModels();
    this.el.modelSelect.replaceChildren(
      ...models.map((m) => new Option(`${m.name} (${m.steps} steps)`, m.name)),
    );
    this.el.runButton.addEventListener("click", () => void this.runInfill());
    this.el.cancelButton.addEventListener("click", () => void this.cancel());
    this.el.undoButton.addEventListener("click", () => this.withEditor((e) => e.undo()));
    this.el.redoButton.addEventListener("click", () => this.withEditor((e) => e.redo()));
    this.el.auditionButton.addEventListener("click", () => this.audition());
    this.el.canvas.addEventListener("mousedown", (e) => (this.dragStart = { x: e.offsetX, y: e.offsetY }));
    this.el.canvas.addEventListener("mouseup", (e) => this.finishDrag(e.offsetX));
    this.status("ready");
  }

  private status(text: string): void {
    this.el.statusLine.textContent = text;
  }

  private viewport(): Viewport {
    const grid = this.currentGrid();
    return {
      width: this.el.canvas.width,
      height: this.el.canvas.height,
      stepOffset: 0,
      stepsVisible: grid ? grid.steps : 256,
    };
  }

  private currentGrid(): TokenGrid | null {
    return this.replay ? this.replay.grid : this.piece;
  }

  loadPiece(grid: TokenGrid): void {
    this.piece = cloneGrid(grid);
    this.editor = new MaskEditor(grid.steps, grid.tracks);
    this.replay = null;
    this.requestRender();
  }

  private withEditor(fn: (editor: MaskEditor) => void): void {
    if (!this.editor || this.activeJob) return; // edits disabled while streaming
    fn(this.editor);
    this.requestRender();
  }

  private finishDrag(xEnd: number): void {
    if (!this.dragStart || !this.piece || this.activeJob) return;
    const viewport = this.viewport();
    const stepA = xToStep(viewport, this.dragStart.x);
    const stepB = xToStep(viewport, xEnd);
    const selection: Selection = {
      stepStart: Math.max(0, Math.min(stepA, stepB)),
      stepEnd: Math.min(this.piece.steps, Math.max(stepA, stepB) + 1),
      trackStart: 0,
      trackEnd: this.piece.tracks,
    };
    this.dragStart = null;
    this.withEditor((editor) =>
      editor.edit(selection, this.el.modeAdd.checked ? "add" : "remove"),
    );
  }

  async runInfill(): Promise<void> {
    if (!this.piece || !this.editor || this.activeJob) return;
    const pattern = this.editor.pattern;
    const pieceId = await this.api.uploadPiece(this.piece, "studio-piece");
    const steps = Number(this.el.stepsInput.value) || 64;
    const bars = this.piece.steps / this.piece.stepsPerBar;
    const jobId = await this.api.startJob({
      kind: this.el.densityToggle.checked ? "guide" : "infill",
      model: this.el.modelSelect.value,
      piece_id: pieceId,
      mask: pattern.toJson(),
      steps,
      ...(this.el.densityToggle.checked
        ? {
            density_targets: Array(bars).fill(Number(this.el.densitySlider.value)),
            scale: Number(this.el.scaleInput.value) || 12,
          }
        : {}),
    });
    this.activeJob = jobId;
    this.replay = startReplay(maskedInit(this.piece, pattern), pattern.count());
    this.status(`job ${jobId} running`);
    try {
      for await (const message of this.api.streamJob(jobId)) {
        if (!this.replay) break;
        applyMessage(this.replay, message);
        this.el.progressBar.value = progress(this.replay);
        this.requestRender();
        if (message.type === "done") {
          const final = await this.api.downloadPiece(message.piece_id);
          this.loadPiece(final);
          this.status(`job ${jobId} done`);
        } else if (message.type === "failed") {
          this.status(`job ${jobId} failed: ${message.error} (partial result kept)`);
        }
      }
    } finally {
      this.activeJob = null;
    }
  }

  async cancel(): Promise<void> {
    if (!this.activeJob) return;
    await this.api.cancelJob(this.activeJob);
    // keep the partial replay grid on screen; its masks can be repainted
    if (this.replay) {
      this.piece = cloneGrid(this.replay.grid);
      this.editor = new MaskEditor(this.piece.steps, this.piece.tracks);
    }
  }

  private audition(): void {
    const grid = this.currentGrid();
    if (!grid) return;
    try {
      const schedule = buildSchedule(grid);
      const ctx = new AudioContext();
      play(schedule, ctx);
      this.status(`auditioning ${schedule.length} notes`);
    } catch (error) {
      if (error instanceof MaskedSelectionError) {
        this.status(`cannot audition: ${error.message}`);
      } else {
        throw error;
      }
    }
  }

  private requestRender(): void {
    if (this.pendingFrame) return;
    this.pendingFrame = true;
    requestAnimationFrame(() => {
      this.pendingFrame = false;
      const grid = this.currentGrid();
      if (!grid) return;
      const ctx = this.el.canvas.getContext("2d");
      if (!ctx) return;
      drawRoll(ctx, {
        grid,
        mask: this.activeJob ? null : this.editor?.pattern ?? null,
        viewport: this.viewport(),
        trackVisible: [true, true, true],
      });
    });
  }
}

export async function mountStudio(baseUrl: string, root: Document = document): Promise<Studio> {
  const byId = <T extends HTMLElement>(id: string) => root.getElementById(id) as T;
  const studio = new Studio(new ApiClient(baseUrl), {
    canvas: byId("roll"),
    modelSelect: byId("model"),
    pieceSelect: byId("piece"),
    stepsInput: byId("steps"),
    densityToggle: byId("density-on"),
    densitySlider: byId("density"),
    scaleInput: byId("scale"),
    modeAdd: byId("mode-add"),
    runButton: byId("run"),
    cancelButton: byId("cancel"),
    undoButton: byId("undo"),
    redoButton: byId("redo"),
    auditionButton: byId("audition"),
    progressBar: byId("progress"),
    statusLine: byId("status"),
  });
  await studio.init();
  return studio;
}
