"""HTTP service: piece store, sampling jobs, and live step streams.

Jobs run on background threads and append step messages to an in-memory
trace; `GET /jobs/{id}/stream` replays the trace from the start as
Server-Sent Events and then follows live until the job ends, so a prompt
client receives every reverse-diffusion step exactly once.  Uploaded
pieces are immutable; every job writes a new piece.  Job transitions are
appended to a line-delimited JSON log.
"""

from __future__ import annotations

import base64
import itertools
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response, StreamingResponse

from . import metrics as metrics_mod
from .diffusion import DiffusionSchedule
from .errors import NotefillError, SamplingCancelledError
from .guidance import DensityGuidance, load_density_classifier
from .model import load_checkpoint
from .sampling import MaskPattern, masked_init, sample
from .tokens import TokenSequence, export_midi

SNAPSHOT_EVERY = 32


@dataclass
class ModelEntry:
    name: str
    path: str
    model: object
    timesteps: int

    def describe(self) -> dict:
        config = self.model.config
        return {
            "name": self.name,
            "steps": config.steps,
            "tracks": config.tracks,
            "vocab_sizes": list(config.vocab_sizes),
            "timesteps": self.timesteps,
        }


class ModelRegistry:
    def __init__(self):
        self.models: dict[str, ModelEntry] = {}
        self.classifiers: dict[str, object] = {}

    def register(self, name: str, checkpoint_path, timesteps: int = 1024) -> None:
        checkpoint = load_checkpoint(checkpoint_path)
        checkpoint.model.eval()
        self.models[name] = ModelEntry(name, str(checkpoint_path), checkpoint.model, timesteps)

    def register_classifier(self, name: str, path) -> None:
        self.classifiers[name] = load_density_classifier(path)

    def get(self, name: str) -> ModelEntry:
        if name not in self.models:
            raise HTTPException(404, f"unknown model {name!r}")
        return self.models[name]


@dataclass
class Job:
    id: str
    kind: str
    params: dict
    status: str = "pending"           # pending -> running -> done | failed
    error: str | None = None
    result_piece_id: str | None = None
    trace: list[dict] = field(default_factory=list)
    cond: threading.Condition = field(default_factory=threading.Condition)
    cancel_event: threading.Event = field(default_factory=threading.Event)

    def describe(self) -> dict:
        return {
            "job_id": self.id,
            "kind": self.kind,
            "params": self.params,
            "status": self.status,
            "error": self.error,
            "result_piece_id": self.result_piece_id,
            "trace_length": len(self.trace),
        }


class PieceStore:
    """Immutable piece storage backed by .tok files."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.names: dict[str, str] = {}

    def put(self, seq: TokenSequence, name: str) -> str:
        piece_id = uuid.uuid4().hex[:12]
        seq.save(self.root / f"{piece_id}.tok")
        self.names[piece_id] = name
        return piece_id

    def get(self, piece_id: str) -> TokenSequence:
        path = self.root / f"{piece_id}.tok"
        if not path.exists():
            raise HTTPException(404, f"unknown piece {piece_id!r}")
        return TokenSequence.load(path)


def _mask_from_request(payload, seq: TokenSequence) -> MaskPattern:
    if payload in (None, "all"):
        return MaskPattern.all(seq.steps, seq.tracks)
    if payload == "central512":
        if seq.steps != 1024:
            raise HTTPException(400, "central512 preset needs a 1024-step piece")
        return MaskPattern.central(seq.steps, seq.tracks)
    if isinstance(payload, dict):
        try:
            pattern = MaskPattern.from_json(payload)
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(400, f"malformed mask pattern: {exc}") from exc
        if pattern.grid.shape != seq.values.shape:
            raise HTTPException(400, "mask shape does not match piece shape")
        return pattern
    raise HTTPException(400, f"unsupported mask spec {payload!r}")


def create_app(registry: ModelRegistry, store_dir) -> FastAPI:
    app = FastAPI(title="notefill service")
    store_dir = Path(store_dir)
    pieces = PieceStore(store_dir / "pieces")
    jobs: dict[str, Job] = {}
    job_counter = itertools.count(1)
    job_log = store_dir / "jobs.jsonl"
    log_lock = threading.Lock()

    def log_transition(job: Job) -> None:
        with log_lock:
            with open(job_log, "a") as fh:
                fh.write(json.dumps({"time": time.time(), **job.describe()}) + "\n")

    @app.get("/models")
    def list_models():
        return {"models": [entry.describe() for entry in registry.models.values()]}

    @app.post("/pieces")
    def upload_piece(payload: dict):
        name = payload.get("name", "piece")
        try:
            if "data_b64" in payload:
                seq = TokenSequence.from_bytes(base64.b64decode(payload["data_b64"]))
            elif "midi_b64" in payload:
                from .tokens import extract_auto

                seq, _ = extract_auto(
                    base64.b64decode(payload["midi_b64"]), payload.get("mode", "melody")
                )
            else:
                raise HTTPException(400, "need data_b64 or midi_b64")
        except NotefillError as exc:
            raise HTTPException(400, str(exc)) from exc
        piece_id = pieces.put(seq, name)
        return {"piece_id": piece_id, "steps": seq.steps, "tracks": seq.tracks}

    @app.get("/pieces/{piece_id}")
    def download_piece(piece_id: str):
        seq = pieces.get(piece_id)
        return {
            "piece_id": piece_id,
            "name": pieces.names.get(piece_id, ""),
            "steps": seq.steps,
            "tracks": seq.tracks,
            "data_b64": base64.b64encode(seq.to_bytes()).decode(),
        }

    @app.get("/pieces/{piece_id}/midi")
    def download_midi(piece_id: str, bpm: float = 120.0):
        seq = pieces.get(piece_id)
        try:
            data = export_midi(seq, tempo_bpm=bpm)
        except NotefillError as exc:
            raise HTTPException(409, str(exc)) from exc
        return Response(content=data, media_type="audio/midi")

    def run_job(job: Job, entry: ModelEntry, init: TokenSequence,
                pattern: MaskPattern, steps: int, seed: int, guidance) -> None:
        job.status = "running"
        log_transition(job)
        rng = np.random.default_rng(seed)

        def on_step(update) -> bool:
            message = {
                "type": "step",
                "index": update.index,
                "countdown": update.countdown,
                "remaining_masks": update.remaining_masks,
                "deltas": [list(d) for d in update.committed],
            }
            with job.cond:
                job.trace.append(message)
                if update.index % SNAPSHOT_EVERY == 0:
                    snapshot = TokenSequence(update.values, init.steps_per_bar)
                    job.trace.append({
                        "type": "snapshot",
                        "index": update.index,
                        "data_b64": base64.b64encode(snapshot.to_bytes()).decode(),
                    })
                job.cond.notify_all()
            return not job.cancel_event.is_set()

        try:
            schedule = DiffusionSchedule(entry.timesteps)
            result = sample(entry.model, schedule, init, pattern, steps, rng,
                            on_step=on_step, guidance=guidance)
            piece_id = pieces.put(result, f"{job.kind}-{job.id}")
            with job.cond:
                job.result_piece_id = piece_id
                job.status = "done"
                job.trace.append({"type": "done", "piece_id": piece_id})
                job.cond.notify_all()
        except SamplingCancelledError:
            with job.cond:
                job.status = "failed"
                job.error = "cancelled"
                job.trace.append({"type": "failed", "error": "cancelled"})
                job.cond.notify_all()
        except Exception as exc:  # surface worker errors to clients
            with job.cond:
                job.status = "failed"
                job.error = str(exc)
                job.trace.append({"type": "failed", "error": str(exc)})
                job.cond.notify_all()
        log_transition(job)

    @app.post("/jobs")
    def start_job(payload: dict):
        kind = payload.get("kind")
        if kind not in ("sample", "infill", "accompany", "guide"):
            raise HTTPException(400, f"unknown job kind {kind!r}")
        entry = registry.get(payload.get("model", ""))
        config = entry.model.config
        steps = int(payload.get("steps", 64))
        seed = int(payload.get("seed", 0))
        if not 1 <= steps <= entry.timesteps:
            raise HTTPException(400, f"steps must be in 1..{entry.timesteps}")

        if kind == "sample" or (kind == "guide" and payload.get("piece_id") is None):
            base = TokenSequence(np.zeros((config.steps, config.tracks), dtype=np.uint16))
            pattern = MaskPattern.all(config.steps, config.tracks)
        else:
            piece_id = payload.get("piece_id")
            if piece_id is None:
                raise HTTPException(400, f"{kind} needs piece_id")
            base = pieces.get(piece_id)
            if (base.steps, base.tracks) != (config.steps, config.tracks):
                raise HTTPException(409, "piece shape does not match model")
            if kind == "accompany":
                tracks = payload.get("tracks")
                if not tracks:
                    raise HTTPException(400, "accompany needs a non-empty track list")
                if config.tracks != 3:
                    raise HTTPException(409, "model is not a trio model")
                pattern = MaskPattern.track_subset(base.steps, base.tracks, tracks)
            else:
                pattern = _mask_from_request(payload.get("mask"), base)

        guidance = None
        if kind == "guide" or payload.get("density_targets") is not None:
            classifier = registry.classifiers.get(payload.get("model", ""))
            if classifier is None:
                raise HTTPException(409, "no density classifier registered for this model")
            targets = payload.get("density_targets")
            if targets is None:
                raise HTTPException(400, "guide needs density_targets")
            bars = config.steps // 16
            if np.isscalar(targets):
                targets = [targets] * bars
            if len(targets) != bars:
                raise HTTPException(400, f"need {bars} per-measure targets")
            try:
                guidance = DensityGuidance(
                    classifier, targets, float(payload.get("scale", 0.1))
                )
            except NotefillError as exc:
                raise HTTPException(409, str(exc)) from exc

        job = Job(id=f"job-{next(job_counter):06d}", kind=kind, params={
            k: v for k, v in payload.items() if k != "mask"
        })
        jobs[job.id] = job
        log_transition(job)
        init = masked_init(base, pattern)
        thread = threading.Thread(
            target=run_job, args=(job, entry, init, pattern, steps, seed, guidance),
            daemon=True,
        )
        thread.start()
        return {"job_id": job.id}

    def get_job(job_id: str) -> Job:
        if job_id not in jobs:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return jobs[job_id]

    @app.get("/jobs")
    def list_jobs():
        return {"jobs": [job.describe() for job in jobs.values()]}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        return get_job(job_id).describe()

    @app.post("/jobs/{job_id}/cancel")
    def cancel_job(job_id: str):
        job = get_job(job_id)
        job.cancel_event.set()
        with job.cond:
            while job.status in ("pending", "running"):
                job.cond.wait(0.05)
        return job.describe()

    @app.get("/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = get_job(job_id)
        if job.status != "done":
            raise HTTPException(409, f"job is {job.status}")
        return {"piece_id": job.result_piece_id}

    @app.get("/jobs/{job_id}/stream")
    def job_stream(job_id: str):
        job = get_job(job_id)

        def event_source():
            cursor = 0
            while True:
                with job.cond:
                    while cursor >= len(job.trace) and job.status in ("pending", "running"):
                        job.cond.wait(0.1)
                    pending = job.trace[cursor:]
                    cursor = len(job.trace)
                    finished = job.status not in ("pending", "running")
                for message in pending:
                    yield f"data: {json.dumps(message)}\n\n"
                if finished and cursor >= len(job.trace):
                    return

        return StreamingResponse(event_source(), media_type="text/event-stream")

    @app.post("/evaluate")
    def evaluate_sets(payload: dict):
        try:
            set_a = [pieces.get(pid) for pid in payload["set"]]
            ground = [pieces.get(pid) for pid in payload["ground_truth"]]
            report = metrics_mod.evaluate(set_a, ground)
        except KeyError as exc:
            raise HTTPException(400, f"missing field {exc}") from exc
        except NotefillError as exc:
            raise HTTPException(409, str(exc)) from exc
        return report.to_json()

    app.state.registry = registry
    app.state.pieces = pieces
    app.state.jobs = jobs
    return app


def serve(registry: ModelRegistry, store_dir, port: int = 8000, host: str = "127.0.0.1"):
    import uvicorn

    app = create_app(registry, store_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
