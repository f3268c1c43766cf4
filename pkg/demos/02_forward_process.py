#!/usr/bin/env python3
"""The absorbing forward process and its closed forms.

Masks a demo melody at increasing timesteps, checks the empirical mask
fraction against t/T, and prints the cumulative transition matrix next to
its step-by-step composition.
"""

import numpy as np

from notefill import demo_corpus
from notefill.diffusion import (
    DiffusionSchedule,
    cumulative_matrix,
    posterior,
    q_sample,
    step_matrix,
)

schedule = DiffusionSchedule(1024)
seq = demo_corpus.demo_sequences(1, bars=16, mode="melody", seed=3)[0]
rng = np.random.default_rng(0)

print("mask fraction vs t/T over one 256-step melody:")
for t in (128, 256, 512, 768, 1024):
    batch = q_sample(seq.values, t, schedule, rng, seq.mask_ids)
    print(f"  t={t:4d}: expected {t / 1024:.3f}, got {batch.mask.mean():.3f}")

small = DiffusionSchedule(4)
print("\ncumulative matrix at t=2, K=3 (absorbing flavor):")
closed = cumulative_matrix(small, 2, 3).matrix
print(np.array_str(closed, precision=3))
composed = step_matrix(small, 1, 3).matrix @ step_matrix(small, 2, 3).matrix
print(f"matches step-by-step composition: {np.abs(closed - composed).max():.2e}")

print("\nposterior q(x_1 | x_2 = mask, x_0 = 1), T=4:")
print(" ", np.round(posterior(x_t=3, x0=1, t=2, schedule=small, categories=3), 4))
print("  (mass splits between staying masked and already being revealed)")
