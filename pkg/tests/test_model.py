"""Denoiser architecture, checkpointing, and end-to-end gradients."""

import numpy as np
import pytest
import torch

from conftest import tiny_config
from notefill.diffusion import DiffusionSchedule, corrupt_batch, training_loss
from notefill.errors import CheckpointError
from notefill.model import Denoiser, DenoiserConfig, load_checkpoint, save_checkpoint


def test_desk_melody_logit_shapes():
    config = DenoiserConfig.desk_melody()
    model = Denoiser(config)
    x = torch.full((2, 256, 1), 90, dtype=torch.long)  # all-mask input
    logits = model(x)
    assert len(logits) == 1
    assert logits[0].shape == (2, 256, 90)


def test_desk_trio_logit_shapes():
    config = DenoiserConfig.desk_trio()
    model = Denoiser(config)
    x = torch.zeros((1, 256, 3), dtype=torch.long)
    logits = model(x)
    assert [tuple(l.shape) for l in logits] == [(1, 256, 90), (1, 256, 90), (1, 256, 512)]


def test_paper_config_shapes_without_instantiation():
    config = DenoiserConfig.paper_melody()
    assert config.steps == 1024
    assert config.summary_len == 256
    trio = DenoiserConfig.paper_trio()
    assert trio.vocab_sizes == (90, 90, 512)


def test_forward_is_deterministic():
    model = Denoiser(tiny_config())
    model.eval()
    x = torch.randint(0, 7, (1, 16, 1))
    a = model(x)[0].detach().numpy()
    b = model(x)[0].detach().numpy()
    assert np.array_equal(a, b)


def test_softmax_rows_are_distributions():
    model = Denoiser(DenoiserConfig.desk_melody())
    probs = model.predict_probs(np.full((256, 1), 90, dtype=np.int64))
    assert abs(probs[0].sum(axis=1) - 1.0).max() < 1e-5
    assert probs[0].shape == (256, 90)


def test_shape_mismatch_raises():
    model = Denoiser(tiny_config())
    with pytest.raises(ValueError, match="incompatible"):
        model(torch.zeros((1, 32, 1), dtype=torch.long))


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        DenoiserConfig(steps=15)
    with pytest.raises(ValueError, match="heads"):
        DenoiserConfig(summary_dim=130, n_heads=4)


class TestCheckpoint:
    def test_save_load_forward_bit_exact(self, tmp_path):
        model = Denoiser(tiny_config())
        path = tmp_path / "model.pt"
        save_checkpoint(path, model, train_step=7)
        loaded = load_checkpoint(path)
        assert loaded.train_step == 7
        x = torch.randint(0, 7, (1, 16, 1))
        model.eval()
        loaded.model.eval()
        before = model(x)[0].detach().numpy()
        after = loaded.model(x)[0].detach().numpy()
        assert np.array_equal(before, after)

    def test_truncated_file_is_structured_error(self, tmp_path):
        model = Denoiser(tiny_config())
        path = tmp_path / "model.pt"
        save_checkpoint(path, model)
        path.write_bytes(path.read_bytes()[:100])
        with pytest.raises(CheckpointError, match="unreadable"):
            load_checkpoint(path)

    def test_config_mismatch_is_structured_error(self, tmp_path):
        model = Denoiser(DenoiserConfig.desk_melody())
        path = tmp_path / "melody.pt"
        save_checkpoint(path, model)
        with pytest.raises(CheckpointError, match="does not match"):
            load_checkpoint(path, expected_config=DenoiserConfig.desk_trio())

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.pt"
        torch.save({"weights": 1}, path)
        with pytest.raises(CheckpointError, match="not a checkpoint"):
            load_checkpoint(path)


def test_end_to_end_gradients_match_finite_differences(rng):
    """Spot-check >= 100 random parameter coordinates on a < 10k-param net."""
    config = tiny_config()
    torch.manual_seed(0)
    model = Denoiser(config).double()
    assert model.parameter_count() < 10_000

    schedule = DiffusionSchedule(8)
    x0 = rng.integers(0, 6, (2, 16, 1))
    batch = corrupt_batch(x0, np.array([3, 5]), schedule, rng, (6,))
    xt = torch.from_numpy(batch.xt)
    x0_t = torch.from_numpy(batch.x0)
    mask_t = torch.from_numpy(batch.mask)
    t_t = torch.from_numpy(batch.t)

    def loss_value() -> float:
        return float(training_loss(model(xt), x0_t, mask_t, t_t, schedule))

    model.zero_grad()
    loss = training_loss(model(xt), x0_t, mask_t, t_t, schedule)
    loss.backward()

    params = [p for p in model.parameters() if p.grad is not None]
    sizes = np.array([p.numel() for p in params])
    total = int(sizes.sum())
    eps = 1e-6
    worst = 0.0
    checked = 0
    with torch.no_grad():
        for flat_index in rng.choice(total, size=120, replace=False):
            pi = int(np.searchsorted(np.cumsum(sizes), flat_index, side="right"))
            offset = int(flat_index - (np.cumsum(sizes)[pi] - sizes[pi]))
            param = params[pi]
            view = param.view(-1)
            original = float(view[offset])
            view[offset] = original + eps
            hi = loss_value()
            view[offset] = original - eps
            lo = loss_value()
            view[offset] = original
            numeric = (hi - lo) / (2 * eps)
            analytic = float(param.grad.view(-1)[offset])
            if abs(numeric) < 1e-10 and abs(analytic) < 1e-10:
                continue
            checked += 1
            worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic)))
    assert checked >= 100
    assert worst < 1e-3
