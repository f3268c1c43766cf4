#!/usr/bin/env python3
"""Classifier-guided sampling toward per-measure note densities.

Trains the density classifier on real measures, then steers generation of
an untrained-vs-trained comparison.  For a meaningful steering demo this
reuses the cached overfit checkpoint from the test suite when present
(run `pytest tests/test_acceptance.py -k overfit` once to create it);
otherwise it falls back to a briefly trained model and weaker adherence.
"""

from pathlib import Path

import numpy as np
import torch

from notefill import demo_corpus
from notefill.diffusion import DiffusionSchedule
from notefill.guidance import DensityGuidance, measure_onset_counts, train_density_classifier
from notefill.model import DenoiserConfig, load_checkpoint
from notefill.sampling import guided_sample
from notefill.training import corpus_array, init_train_state, train

torch.set_num_threads(1)
schedule = DiffusionSchedule(1024)
sequences = demo_corpus.demo_sequences(100, bars=16, mode="melody", seed=11)

classifier = train_density_classifier([s.values[:, 0] for s in sequences], seed=0)
print(f"density classifier held-out accuracy (+/-1): {classifier.validation_accuracy:.2f}")

cached = Path(__file__).resolve().parent.parent / ".testcache" / "overfit_desk.pt"
if cached.exists():
    model = load_checkpoint(cached).model
    print("using the cached overfit desk model")
else:
    print("no cached model; training briefly (weaker adherence) ...")
    config = DenoiserConfig.desk_melody()
    state = init_train_state(config, seed=0)
    train(corpus_array(sequences), config, schedule, steps=1500, state=state)
    model = state.model
model.eval()

print("\nguiding 8 samples toward different densities (16 measures each):")
for target in (3, 6, 9, 12):
    guidance = DensityGuidance(classifier, [float(target)] * 16, scale=12.0)
    seq = guided_sample(model, schedule, guidance, steps=128,
                        rng=np.random.default_rng(target))
    counts = measure_onset_counts(seq.values[:, 0])
    hit = (counts == target).mean()
    near = (np.abs(counts - target) <= 1).mean()
    print(f"  target {target:2d}: measures {counts.tolist()}  "
          f"exact {hit:.0%}, within +/-1 {near:.0%}")
