#!/usr/bin/env python3
"""Drive the HTTP service in-process: upload, infill job, live step stream.

The same API the browser studio consumes; here the stream messages are
applied client-side and checked against the downloaded result.
"""

import base64
import json
import tempfile
import time
from pathlib import Path

import numpy as np
import torch
from fastapi.testclient import TestClient

from notefill import demo_corpus
from notefill.model import Denoiser, DenoiserConfig, save_checkpoint
from notefill.service import ModelRegistry, create_app
from notefill.tokens import TokenSequence

work = Path(tempfile.mkdtemp(prefix="notefill-demo-"))
torch.manual_seed(0)
config = DenoiserConfig(steps=64, vocab_sizes=(90,), token_embed_dim=16,
                        summary_dim=32, n_layers=1, n_heads=2)
ckpt = work / "tiny.pt"
save_checkpoint(ckpt, Denoiser(config))

registry = ModelRegistry()
registry.register("tiny", ckpt)
piece = demo_corpus.demo_sequences(1, bars=4, mode="melody", seed=31)[0]

with TestClient(create_app(registry, work / "store")) as client:
    print("models:", [m["name"] for m in client.get("/models").json()["models"]])

    piece_id = client.post("/pieces", json={
        "name": "demo", "data_b64": base64.b64encode(piece.to_bytes()).decode(),
    }).json()["piece_id"]
    print(f"uploaded piece {piece_id} ({piece.steps} steps)")

    job_id = client.post("/jobs", json={
        "kind": "infill", "model": "tiny", "piece_id": piece_id, "steps": 12,
        "seed": 7, "mask": {"steps": 64, "tracks": 1, "runs": [[[16, 32]]]},
    }).json()["job_id"]

    while client.get(f"/jobs/{job_id}").json()["status"] in ("pending", "running"):
        time.sleep(0.02)

    grid = piece.values.copy()
    grid[16:48, 0] = 90
    steps_seen = 0
    with client.stream("GET", f"/jobs/{job_id}/stream") as stream:
        for line in stream.iter_lines():
            if not line.startswith("data: "):
                continue
            message = json.loads(line[6:])
            if message["type"] == "step":
                steps_seen += 1
                for step, track, token in message["deltas"]:
                    grid[step, track] = token
                print(f"  step {message['index']:2d}: countdown {message['countdown']:2d}, "
                      f"{len(message['deltas'])} commits, {message['remaining_masks']} masks left")
            elif message["type"] == "done":
                result_id = message["piece_id"]

    final_b64 = client.get(f"/pieces/{result_id}").json()["data_b64"]
    final = TokenSequence.from_bytes(base64.b64decode(final_b64))
    print(f"\nstream carried {steps_seen} step messages for a 12-step job")
    print(f"client-side replay equals the service result: "
          f"{bool(np.array_equal(grid, final.values))}")
