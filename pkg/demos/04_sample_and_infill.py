#!/usr/bin/env python3
"""Sampling and infilling with adjustable step counts.

Runs the reverse process with a perfect "oracle" denoiser (always predicts
one known piece) to make the mechanics visible without training: any step
count, any seed, context always preserved bit-exactly.
"""

import numpy as np

from notefill import demo_corpus
from notefill.diffusion import DiffusionSchedule
from notefill.sampling import MaskPattern, accompany, infill, unconditional


def one_hot_oracle(target):
    def fn(values):
        out = []
        for track, vocab in enumerate(target.vocab_sizes):
            probs = np.zeros((target.steps, vocab))
            probs[np.arange(target.steps), target.values[:, track]] = 1.0
            out.append(probs)
        return out
    return fn


schedule = DiffusionSchedule(1024)
trio = demo_corpus.demo_sequences(1, bars=16, mode="trio", seed=4)[0]
oracle = one_hot_oracle(trio)

print("unconditional sampling from all-mask, oracle denoiser:")
for steps in (1, 4, 64):
    out = unconditional(oracle, schedule, steps, np.random.default_rng(0),
                        seq_steps=trio.steps, tracks=3)
    print(f"  steps={steps:3d}: recovered the oracle's piece exactly: {out == trio}")

print("\ninfilling a masked window (observer sees every reverse step):")
pattern = MaskPattern.none(trio.steps, 3)
pattern.grid[64:192, :] = True
log = []
out = infill(trio, pattern, oracle, schedule, np.random.default_rng(1), steps=8,
             on_step=lambda u: log.append((u.index, u.remaining_masks)))
print(f"  8 reverse steps -> remaining masks: {[r for _, r in log]}")
print(f"  context outside the window untouched: "
      f"{bool((out.values[:64] == trio.values[:64]).all())}")

print("\naccompaniment: regenerate bass + drums, keep the melody:")
out = accompany(trio, [1, 2], oracle, schedule, np.random.default_rng(2), steps=16)
print(f"  melody track bit-identical: {bool((out.values[:, 0] == trio.values[:, 0]).all())}")
