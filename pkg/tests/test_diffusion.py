"""Forward process, posterior, ELBO terms, and the training loss.

The oracles here are deliberately independent of the implementation:
transition matrices are composed step by step, posteriors are enumerated
over all forward paths, and gradients are checked against central finite
differences.
"""

import itertools
import math
import warnings

import numpy as np
import pytest
import torch

from notefill.diffusion import (
    ABSORBING,
    UNIFORM,
    DiffusionSchedule,
    ElboTerms,
    corrupt_batch,
    cumulative_matrix,
    elbo_terms,
    loss_weight,
    posterior,
    q_sample,
    step_matrix,
    training_loss,
)
from notefill.errors import PosteriorDomainError, ScheduleError


def compose_stepwise(schedule, t, categories, flavor):
    """Oracle: explicit product of per-step kernels."""
    product = np.eye(categories + 1 if flavor == ABSORBING else categories)
    for i in range(1, t + 1):
        product = product @ step_matrix(schedule, i, categories, flavor).matrix
    return product


def enumerate_joint_prev_current(schedule, t, categories, flavor, x0):
    """Oracle: P(x_{t-1}=k, x_t=j | x0) by summing over all forward paths."""
    size = categories + 1 if flavor == ABSORBING else categories
    mats = [step_matrix(schedule, i, categories, flavor).matrix for i in range(1, t + 1)]
    joint = np.zeros((size, size))
    for path in itertools.product(range(size), repeat=t):
        prob = 1.0
        prev = x0
        for i, state in enumerate(path):
            prob *= mats[i][prev, state]
            prev = state
        joint[path[-2] if t >= 2 else x0, path[-1]] += prob
    return joint


class TestSchedule:
    def test_boundaries(self):
        sch = DiffusionSchedule(8)
        assert sch.mask_prob(0) == 0.0
        assert sch.mask_prob(8) == 1.0

    def test_monotone(self):
        sch = DiffusionSchedule(64)
        probs = [sch.mask_prob(t) for t in range(65)]
        assert all(b >= a for a, b in zip(probs, probs[1:]))

    def test_out_of_range(self):
        sch = DiffusionSchedule(8)
        with pytest.raises(ScheduleError):
            sch.mask_prob(9)
        with pytest.raises(ScheduleError):
            sch.step_mask_prob(0)


class TestForwardProcess:
    def test_full_mask_at_final_step(self, rng):
        sch = DiffusionSchedule(16)
        x0 = np.zeros((64, 1), dtype=np.int64)
        batch = q_sample(x0, 16, sch, rng, (90,))
        assert batch.mask.all()
        assert (batch.xt == 90).all()

    @pytest.mark.parametrize("t", [256, 512, 768])
    def test_empirical_mask_fraction(self, t):
        sch = DiffusionSchedule(1024)
        rng = np.random.default_rng(123)
        x0 = np.zeros((100_000, 1), dtype=np.int64)
        batch = q_sample(x0, t, sch, rng, (90,))
        assert abs(batch.mask.mean() - t / 1024) < 0.005

    def test_mask_fraction_within_3_sigma_each_t(self):
        sch = DiffusionSchedule(16)
        rng = np.random.default_rng(7)
        n = 100_000
        x0 = np.zeros((n, 1), dtype=np.int64)
        for t in range(1, 17):
            p = t / 16
            frac = q_sample(x0, t, sch, rng, (90,)).mask.mean()
            sigma = math.sqrt(p * (1 - p) / n) if 0 < p < 1 else 0.0
            assert abs(frac - p) <= max(3 * sigma, 1e-12)

    @pytest.mark.parametrize("flavor", [ABSORBING, UNIFORM])
    @pytest.mark.parametrize("categories", [2, 3, 5])
    def test_closed_form_matches_stepwise_composition(self, flavor, categories):
        sch = DiffusionSchedule(8)
        for t in range(1, 9):
            closed = cumulative_matrix(sch, t, categories, flavor).matrix
            composed = compose_stepwise(sch, t, categories, flavor)
            assert np.abs(closed - composed).max() < 1e-10

    @pytest.mark.parametrize("flavor", [ABSORBING, UNIFORM])
    def test_rows_stochastic(self, flavor):
        sch = DiffusionSchedule(8)
        for t in range(1, 9):
            for matrix in (step_matrix(sch, t, 5, flavor).matrix,
                           cumulative_matrix(sch, t, 5, flavor).matrix):
                assert np.abs(matrix.sum(axis=1) - 1.0).max() < 1e-12
                assert (matrix >= 0).all()

    def test_absorbing_mask_row_fixed(self):
        sch = DiffusionSchedule(8)
        q = step_matrix(sch, 3, 5, ABSORBING).matrix
        assert q[5, 5] == 1.0
        assert q[5, :5].sum() == 0.0

    def test_single_step_marginal_law_small_scale(self):
        # Empirical q_sample distribution vs the closed-form cumulative row.
        sch = DiffusionSchedule(8)
        rng = np.random.default_rng(5)
        t = 3
        n = 200_000
        x0 = np.full((n, 1), 2, dtype=np.int64)
        xt = q_sample(x0, t, sch, rng, (5,)).xt[:, 0]
        row = cumulative_matrix(sch, t, 5, ABSORBING).matrix[2]
        for state in range(6):
            expected = row[state]
            sigma = math.sqrt(max(expected * (1 - expected), 1e-12) / n)
            assert abs((xt == state).mean() - expected) <= 4 * sigma

    def test_corrupt_batch_track_subsets(self):
        sch = DiffusionSchedule(4)
        rng = np.random.default_rng(0)
        x0 = np.zeros((8, 32, 3), dtype=np.int64)
        subsets = np.zeros((8, 3), dtype=bool)
        subsets[:, 1] = True
        batch = corrupt_batch(x0, np.full(8, 4), sch, rng, (90, 90, 512), subsets)
        assert batch.mask[:, :, 1].all()
        assert not batch.mask[:, :, 0].any()
        assert not batch.mask[:, :, 2].any()

    def test_xt_agrees_with_x0_outside_mask(self, rng):
        sch = DiffusionSchedule(8)
        x0 = rng.integers(0, 90, (64, 1))
        batch = q_sample(x0, 4, sch, rng, (90,))
        assert (batch.xt[~batch.mask] == batch.x0[~batch.mask]).all()
        assert (batch.xt[batch.mask] == 90).all()


class TestPosterior:
    @pytest.mark.parametrize("flavor", [ABSORBING, UNIFORM])
    def test_matches_brute_force_enumeration(self, flavor):
        categories = 4
        sch = DiffusionSchedule(4)
        size = categories + 1 if flavor == ABSORBING else categories
        sequence = [0, 2, 3]  # length-3 token sequence
        for t in range(2, 5):
            for x0 in sequence:
                joint = enumerate_joint_prev_current(sch, t, categories, flavor, x0)
                for x_t in range(size):
                    denom = joint[:, x_t].sum()
                    if denom <= 0:
                        with pytest.raises(PosteriorDomainError):
                            posterior(x_t, x0, t, sch, categories, flavor)
                        continue
                    expected = joint[:, x_t] / denom
                    got = posterior(x_t, x0, t, sch, categories, flavor)
                    assert np.abs(got - expected).max() < 1e-9

    def test_unmasked_survivor_is_point_mass(self):
        sch = DiffusionSchedule(8)
        dist = posterior(x_t=1, x0=1, t=4, schedule=sch, categories=4)
        expected = np.zeros(5)
        expected[1] = 1.0
        assert np.abs(dist - expected).max() < 1e-12

    def test_identity_change_is_domain_error(self):
        sch = DiffusionSchedule(8)
        with pytest.raises(PosteriorDomainError):
            posterior(x_t=2, x0=1, t=3, schedule=sch, categories=4)

    @pytest.mark.parametrize("flavor", [ABSORBING, UNIFORM])
    def test_rows_are_distributions(self, flavor):
        categories = 4
        sch = DiffusionSchedule(6)
        size = categories + 1 if flavor == ABSORBING else categories
        for t in range(2, 7):
            for x0 in range(categories):
                for x_t in range(size):
                    try:
                        dist = posterior(x_t, x0, t, sch, categories, flavor)
                    except PosteriorDomainError:
                        continue
                    assert (dist >= 0).all()
                    assert abs(dist.sum() - 1.0) < 1e-9


class TestElbo:
    def test_posterior_oracle_gives_zero_kl(self, rng):
        categories = 4
        sch = DiffusionSchedule(6)
        x0 = np.array([1, 3, 0])

        def oracle(xt):
            probs = np.zeros((len(xt), categories))
            probs[np.arange(len(xt)), x0] = 1.0
            return probs

        for t in range(2, 7):
            terms = elbo_terms(x0, oracle, sch, rng, categories, t=t)
            assert terms.l_T == pytest.approx(0.0, abs=1e-12)
            assert terms.l_tminus1 == pytest.approx(0.0, abs=1e-9)

    def test_reconstruction_term_at_t1(self, rng):
        categories = 4
        sch = DiffusionSchedule(6)
        x0 = np.array([1, 3, 0])
        probs = np.full((3, categories), 0.25)

        terms = elbo_terms(x0, lambda xt: probs, sch, rng, categories, t=1,
                           x_t=np.array([4, 3, 4]))  # two masked, one survivor
        assert terms.l_tminus1 == 0.0
        assert terms.l_0 == pytest.approx(2 * math.log(4.0), abs=1e-12)

    @pytest.mark.parametrize("flavor", [ABSORBING, UNIFORM])
    def test_matches_direct_summation_oracle(self, flavor, rng):
        categories = 4
        sch = DiffusionSchedule(4)
        size = categories + 1 if flavor == ABSORBING else categories
        x0 = np.array([1, 3, 0])
        probs = rng.random((3, categories))
        probs /= probs.sum(axis=1, keepdims=True)
        t = 3
        x_t = np.array([size - 1, 3, size - 1])

        terms = elbo_terms(x0, lambda xt: probs, sch, rng, categories, flavor,
                           t=t, x_t=x_t)

        # Direct summation using path enumeration only.
        expected = 0.0
        for i in range(3):
            joint = enumerate_joint_prev_current(sch, t, categories, flavor, int(x0[i]))
            q_post = joint[:, x_t[i]] / joint[:, x_t[i]].sum()
            p_theta = np.zeros(size)
            for k in range(categories):
                joint_k = enumerate_joint_prev_current(sch, t, categories, flavor, k)
                p_theta += probs[i, k] * joint_k[:, x_t[i]]
            p_theta /= p_theta.sum()
            for state in range(size):
                if q_post[state] > 0:
                    expected += q_post[state] * math.log(q_post[state] / p_theta[state])
        assert terms.l_tminus1 == pytest.approx(expected, abs=1e-7)


class TestTrainingLoss:
    def _make_batch(self, rng, batch=2, steps=16, vocab=6):
        sch = DiffusionSchedule(8)
        x0 = torch.from_numpy(rng.integers(0, vocab, (batch, steps, 1)))
        mask = torch.from_numpy(rng.random((batch, steps, 1)) < 0.5)
        t = torch.from_numpy(rng.integers(1, 8, (batch,)))
        return sch, x0, mask, t

    def test_one_hot_logits_drive_loss_to_zero(self, rng):
        sch, x0, mask, t = self._make_batch(rng)
        logits = torch.nn.functional.one_hot(x0[..., 0], 6).double() * 1e4
        loss = training_loss([logits], x0, mask, t, sch)
        assert float(loss) == pytest.approx(0.0, abs=1e-12)

    def test_weight_vanishes_at_t_minus_1_and_t(self, rng):
        sch = DiffusionSchedule(8)
        x0 = torch.zeros((2, 16, 1), dtype=torch.long)
        mask = torch.ones((2, 16, 1), dtype=torch.bool)
        logits = torch.from_numpy(rng.normal(size=(2, 16, 6)))
        for t_value in (7, 8):  # T-1 and T
            loss = training_loss([logits], x0, mask, torch.full((2,), t_value), sch)
            assert float(loss) == 0.0
        assert np.all(loss_weight(np.array([7, 8]), sch) == 0.0)

    def test_uniform_logits_closed_form(self):
        sch = DiffusionSchedule(1024)
        x0 = torch.zeros((1, 16, 1), dtype=torch.long)
        mask = torch.zeros((1, 16, 1), dtype=torch.bool)
        mask[0, 5, 0] = True
        logits = torch.zeros((1, 16, 90), dtype=torch.float64)
        loss = training_loss([logits], x0, mask, torch.tensor([1]), sch)
        assert float(loss) == pytest.approx((1022 / 1024) * math.log(90.0), rel=1e-12)

    def test_unmasked_positions_contribute_nothing(self, rng):
        sch, x0, mask, t = self._make_batch(rng)
        logits = torch.from_numpy(rng.normal(size=(2, 16, 6)))
        base = float(training_loss([logits], x0, mask, t, sch))
        perturbed = logits.clone()
        perturbed[~mask[..., 0]] += torch.from_numpy(
            rng.normal(size=(int((~mask).sum()), 6))
        )
        assert float(training_loss([perturbed], x0, mask, t, sch)) == pytest.approx(
            base, rel=1e-12
        )

    def test_gradient_matches_central_finite_differences(self, rng):
        sch, x0, mask, t = self._make_batch(rng, batch=2, steps=16)
        logits = torch.from_numpy(rng.normal(size=(2, 16, 6))).requires_grad_(True)
        loss = training_loss([logits], x0, mask, t, sch)
        loss.backward()
        grad = logits.grad.numpy()

        eps = 1e-6
        flat = logits.detach().numpy().copy()
        coords = [np.unravel_index(i, flat.shape)
                  for i in rng.choice(flat.size, size=110, replace=False)]
        worst = 0.0
        for idx in coords:
            values = []
            for sign in (+1, -1):
                bumped = flat.copy()
                bumped[idx] += sign * eps
                values.append(float(training_loss(
                    [torch.from_numpy(bumped)], x0, mask, t, sch)))
            numeric = (values[0] - values[1]) / (2 * eps)
            denom = max(abs(numeric), abs(grad[idx]), 1e-8)
            worst = max(worst, abs(numeric - grad[idx]) / denom)
        assert worst < 1e-4

    def test_no_masked_positions_warns_and_returns_zero(self, rng):
        sch, x0, _, t = self._make_batch(rng)
        mask = torch.zeros_like(x0, dtype=torch.bool)
        logits = torch.from_numpy(rng.normal(size=(2, 16, 6)))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            loss = training_loss([logits], x0, mask, t, sch)
        assert float(loss) == 0.0
        assert any("no masked positions" in str(w.message) for w in caught)

    def test_uniform_weighting_flag(self, rng):
        sch = DiffusionSchedule(8)
        x0 = torch.zeros((1, 4, 1), dtype=torch.long)
        mask = torch.ones((1, 4, 1), dtype=torch.bool)
        logits = torch.from_numpy(rng.normal(size=(1, 4, 6)))
        heavy = training_loss([logits], x0, mask, torch.tensor([8]), sch, weighting="uniform")
        assert float(heavy) > 0.0


def test_elbo_terms_type():
    terms = ElboTerms(t=3, l_T=0.0, l_tminus1=1.0, l_0=0.0)
    assert terms.total == 1.0
