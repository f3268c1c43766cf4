#!/usr/bin/env python3
"""Capture a real service run as frontend test fixtures.

Starts the HTTP service in-process with a tiny checkpoint, uploads a demo
piece, runs an infill job, and records:

  frontend/tests/fixtures/initial.tok  - the uploaded piece
  frontend/tests/fixtures/mask.json    - the mask pattern sent
  frontend/tests/fixtures/trace.json   - every streamed message, in order
  frontend/tests/fixtures/final.tok    - the resulting piece bytes

The frontend replay tests assert that applying trace.json to the masked
initial piece reproduces final.tok byte for byte.
"""

import base64
import json
import sys
import time
from pathlib import Path

import torch
from fastapi.testclient import TestClient

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from notefill import demo_corpus  # noqa: E402
from notefill.model import Denoiser, DenoiserConfig, save_checkpoint  # noqa: E402
from notefill.sampling import MaskPattern  # noqa: E402
from notefill.service import ModelRegistry, create_app  # noqa: E402

FIXTURES = REPO / "frontend" / "tests" / "fixtures"
STEPS = 64  # 4-bar pieces keep the fixtures small
JOB_STEPS = 40  # crosses the 32-step snapshot interval


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    work = FIXTURES / "_work"
    work.mkdir(exist_ok=True)

    torch.manual_seed(0)
    config = DenoiserConfig(steps=STEPS, vocab_sizes=(90,), token_embed_dim=16,
                            summary_dim=32, n_layers=1, n_heads=2)
    ckpt = work / "tiny.pt"
    save_checkpoint(ckpt, Denoiser(config))
    registry = ModelRegistry()
    registry.register("fixture", ckpt, timesteps=1024)

    piece = demo_corpus.demo_sequences(1, bars=4, mode="melody", seed=31)[0]
    pattern = MaskPattern.none(piece.steps, piece.tracks)
    pattern.grid[12:44, 0] = True
    mask_json = pattern.to_json()

    with TestClient(create_app(registry, work / "store")) as client:
        piece_id = client.post("/pieces", json={
            "name": "fixture",
            "data_b64": base64.b64encode(piece.to_bytes()).decode(),
        }).json()["piece_id"]
        job_id = client.post("/jobs", json={
            "kind": "infill", "model": "fixture", "piece_id": piece_id,
            "steps": JOB_STEPS, "seed": 9, "mask": mask_json,
        }).json()["job_id"]

        deadline = time.monotonic() + 60
        while time.monotonic() < deadline:
            status = client.get(f"/jobs/{job_id}").json()
            if status["status"] in ("done", "failed"):
                break
            time.sleep(0.05)
        assert status["status"] == "done", status

        messages = []
        with client.stream("GET", f"/jobs/{job_id}/stream") as response:
            for line in response.iter_lines():
                if line.startswith("data: "):
                    messages.append(json.loads(line[len("data: "):]))

        final_b64 = client.get(f"/pieces/{status['result_piece_id']}").json()["data_b64"]

    (FIXTURES / "initial.tok").write_bytes(piece.to_bytes())
    (FIXTURES / "final.tok").write_bytes(base64.b64decode(final_b64))
    (FIXTURES / "mask.json").write_text(json.dumps(mask_json, indent=2) + "\n")
    (FIXTURES / "trace.json").write_text(json.dumps(messages, indent=1) + "\n")

    steps = sum(1 for m in messages if m["type"] == "step")
    snapshots = sum(1 for m in messages if m["type"] == "snapshot")
    print(f"captured {steps} step messages, {snapshots} snapshots, "
          f"{pattern.count()} masked cells -> {FIXTURES}")

    import shutil

    shutil.rmtree(work)


if __name__ == "__main__":
    main()
