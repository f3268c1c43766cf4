"""Absorbing-state forward diffusion over categorical token grids.

The forward process masks each token independently so that after t of T
steps a token is absorbed with probability t/T.  Per-step kernels use the
mask probability beta_t = 1/(T-t+1), whose composition telescopes to the
t/T cumulative law exactly.  A uniform-transition flavor is provided as a
test oracle companion; nothing outside the test suite uses it.

Probability computations run in float64.  The trainable loss consumes
float32 network logits and upcasts internally.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch

from .errors import PosteriorDomainError, ScheduleError

ABSORBING = "absorbing"
UNIFORM = "uniform"


@dataclass(frozen=True)
class DiffusionSchedule:
    """Linear absorbing schedule: mask probability t/T after t steps."""

    timesteps: int = 1024

    def __post_init__(self):
        if self.timesteps < 1:
            raise ScheduleError(f"timesteps must be >= 1, got {self.timesteps}")

    def check_t(self, t: int, lo: int = 1) -> int:
        t = int(t)
        if not lo <= t <= self.timesteps:
            raise ScheduleError(f"t={t} outside [{lo}, {self.timesteps}]")
        return t

    def mask_prob(self, t: int) -> float:
        """Cumulative probability that a token is masked at step t."""
        if not 0 <= t <= self.timesteps:
            raise ScheduleError(f"t={t} outside [0, {self.timesteps}]")
        return t / self.timesteps

    def step_mask_prob(self, t: int) -> float:
        """Per-step mask probability beta_t with prod(1-beta) = 1 - t/T."""
        self.check_t(t)
        return 1.0 / (self.timesteps - t + 1)


@dataclass(frozen=True)
class TransitionMatrix:
    """One categorical transition kernel q(x_t = j | x_{t-1} = i)."""

    matrix: np.ndarray          # (size, size) float64, rows sum to 1
    flavor: str
    categories: int             # number of real (non-mask) categories K
    mask_id: int | None         # == categories for absorbing, None for uniform

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def step_matrix(schedule: DiffusionSchedule, t: int, categories: int,
                flavor: str = ABSORBING) -> TransitionMatrix:
    """The per-step kernel Q_t."""
    schedule.check_t(t)
    beta = schedule.step_mask_prob(t)
    if flavor == ABSORBING:
        size = categories + 1
        m = np.zeros((size, size), dtype=np.float64)
        np.fill_diagonal(m, 1.0 - beta)
        m[:, categories] = beta
        m[categories, categories] = 1.0
        return TransitionMatrix(m, flavor, categories, categories)
    if flavor == UNIFORM:
        m = np.full((categories, categories), beta / categories, dtype=np.float64)
        np.fill_diagonal(m, 1.0 - beta + beta / categories)
        return TransitionMatrix(m, flavor, categories, None)
    raise ValueError(f"unknown flavor {flavor!r}")


def cumulative_matrix(schedule: DiffusionSchedule, t: int, categories: int,
                      flavor: str = ABSORBING) -> TransitionMatrix:
    """Closed form of Q-bar_t = Q_1 ... Q_t.

    For both flavors the per-step beta choice telescopes, so the survival
    probability after t steps is exactly 1 - t/T.
    """
    schedule.check_t(t)
    p = schedule.mask_prob(t)
    if flavor == ABSORBING:
        size = categories + 1
        m = np.zeros((size, size), dtype=np.float64)
        np.fill_diagonal(m, 1.0 - p)
        m[:, categories] = p
        m[categories, categories] = 1.0
        return TransitionMatrix(m, flavor, categories, categories)
    if flavor == UNIFORM:
        m = np.full((categories, categories), p / categories, dtype=np.float64)
        np.fill_diagonal(m, 1.0 - p + p / categories)
        return TransitionMatrix(m, flavor, categories, None)
    raise ValueError(f"unknown flavor {flavor!r}")


@dataclass
class CorruptedBatch:
    """x0 alongside its partially masked version at per-sample timesteps."""

    x0: np.ndarray      # (..., tracks) int
    xt: np.ndarray      # same shape, mask ids where mask is True
    t: np.ndarray       # per-sample timesteps, shape (batch,) or scalar
    mask: np.ndarray    # bool, True where xt is absorbed


def q_sample(x0: np.ndarray, t: int, schedule: DiffusionSchedule,
             rng: np.random.Generator, mask_ids) -> CorruptedBatch:
    """Draw x_t | x_0 for one grid: each token masked with probability t/T."""
    schedule.check_t(t)
    x0 = np.asarray(x0)
    if x0.ndim == 1:
        x0 = x0[:, None]
    prob = schedule.mask_prob(t)
    mask = rng.random(x0.shape) < prob
    xt = np.where(mask, np.asarray(mask_ids, dtype=x0.dtype)[None, :], x0)
    return CorruptedBatch(x0=x0, xt=xt, t=np.asarray(t), mask=mask)


def corrupt_batch(x0: np.ndarray, t: np.ndarray, schedule: DiffusionSchedule,
                  rng: np.random.Generator, mask_ids,
                  track_subsets: np.ndarray | None = None) -> CorruptedBatch:
    """Vectorized q_sample over a batch with per-sample timesteps.

    track_subsets, when given as a (batch, tracks) boolean array, restricts
    masking to the selected tracks of each sample (the trio training
    schedule); probabilities within the subset are unchanged.
    """
    x0 = np.asarray(x0)
    t = np.asarray(t, dtype=np.int64)
    probs = t.astype(np.float64) / schedule.timesteps
    mask = rng.random(x0.shape) < probs[:, None, None]
    if track_subsets is not None:
        mask &= np.asarray(track_subsets, dtype=bool)[:, None, :]
    xt = np.where(mask, np.asarray(mask_ids, dtype=x0.dtype)[None, None, :], x0)
    return CorruptedBatch(x0=x0, xt=xt, t=t, mask=mask)


def posterior(x_t: int, x0: int, t: int, schedule: DiffusionSchedule,
              categories: int, flavor: str = ABSORBING) -> np.ndarray:
    """q(x_{t-1} | x_t, x_0) for one token, as a distribution over states.

    Bayes on the Markov chain: p[k] = Q_t[k, x_t] * Qbar_{t-1}[x0, k],
    normalized by Qbar_t[x0, x_t].  Raises when the (x_t, x_0) pair cannot
    occur under the forward process.
    """
    schedule.check_t(t, lo=2)
    q_t = step_matrix(schedule, t, categories, flavor).matrix
    q_prev = cumulative_matrix(schedule, t - 1, categories, flavor).matrix
    q_cum = cumulative_matrix(schedule, t, categories, flavor).matrix
    denom = q_cum[x0, x_t]
    if denom <= 0.0:
        raise PosteriorDomainError(
            f"x_t={x_t} unreachable from x_0={x0} at t={t} under {flavor} forward process"
        )
    p = q_t[:, x_t] * q_prev[x0, :] / denom
    return p


@dataclass
class ElboTerms:
    """Per-term diagnostic losses for one sampled timestep."""

    t: int
    l_T: float
    l_tminus1: float
    l_0: float

    @property
    def total(self) -> float:
        return self.l_T + self.l_tminus1 + self.l_0


def _reverse_step_distribution(xt_value: int, x0_probs: np.ndarray, t: int,
                               schedule: DiffusionSchedule, categories: int,
                               flavor: str) -> np.ndarray:
    """p_theta(x_{t-1} | x_t) by marginalizing the posterior over predicted x_0.

    Works through the unnormalized joint q(x_t | x_{t-1}) q(x_{t-1} | x0-hat)
    so impossible (x_t, x0-hat) pairs contribute zero instead of dividing by
    zero.
    """
    q_t = step_matrix(schedule, t, categories, flavor).matrix
    q_prev = cumulative_matrix(schedule, t - 1, categories, flavor).matrix
    # weights[k] = p_theta(x0 = k); joint over x_{t-1}: sum_k w_k * Q_t[:, x_t] * Qbar_{t-1}[k, :]
    joint = q_t[:, xt_value] * (x0_probs @ q_prev[: len(x0_probs), :])
    total = joint.sum()
    if total <= 0.0:
        raise PosteriorDomainError(f"x_t={xt_value} has zero mass under predicted x_0 at t={t}")
    return joint / total


def elbo_terms(x0: np.ndarray, probs_fn, schedule: DiffusionSchedule,
               rng: np.random.Generator, categories: int,
               flavor: str = ABSORBING, t: int | None = None,
               x_t: np.ndarray | None = None) -> ElboTerms:
    """Stochastic ELBO decomposition for one sampled timestep (diagnostics).

    probs_fn maps a corrupted sequence (1-D int array, mask ids allowed) to
    per-position distributions over the real categories, shape (len, K).
    Masked positions drive the KL/reconstruction sums; unmasked positions
    contribute exactly zero through the marginalization.
    """
    x0 = np.asarray(x0, dtype=np.int64).reshape(-1)
    T = schedule.timesteps
    if t is None:
        t = int(rng.integers(1, T + 1))
    schedule.check_t(t)
    mask_id = categories if flavor == ABSORBING else None

    # L_T: KL between q(x_T | x_0) and the mask-free prior p(x_T).
    q_T = cumulative_matrix(schedule, T, categories, flavor).matrix
    if flavor == ABSORBING:
        prior = np.zeros(categories + 1)
        prior[mask_id] = 1.0
    else:
        prior = np.full(categories, 1.0 / categories)
    l_T = 0.0
    for token in x0:
        row = q_T[token]
        live = row > 0
        l_T += float(np.sum(row[live] * np.log(row[live] / prior[live])))

    if x_t is None:
        mask_ids = (mask_id,) if flavor == ABSORBING else None
        if flavor == ABSORBING:
            x_t = q_sample(x0, t, schedule, rng, mask_ids).xt[:, 0]
        else:
            # Uniform flavor: resample corrupted tokens from the cumulative row.
            x_t = x0.copy()
            q_cum = cumulative_matrix(schedule, t, categories, flavor).matrix
            for i, token in enumerate(x0):
                x_t[i] = rng.choice(categories, p=q_cum[token])
    x_t = np.asarray(x_t, dtype=np.int64).reshape(-1)

    probs = np.asarray(probs_fn(x_t), dtype=np.float64)

    l_tminus1 = 0.0
    l_0 = 0.0
    if t >= 2:
        for i, (x0_i, xt_i) in enumerate(zip(x0, x_t)):
            q_post = posterior(int(xt_i), int(x0_i), t, schedule, categories, flavor)
            p_theta = _reverse_step_distribution(
                int(xt_i), probs[i], t, schedule, categories, flavor
            )
            live = q_post > 0
            l_tminus1 += float(np.sum(q_post[live] * np.log(q_post[live] / p_theta[live])))
    else:
        # Reconstruction term: -log p_theta(x_0 | x_1) over absorbed positions.
        for i, (x0_i, xt_i) in enumerate(zip(x0, x_t)):
            if mask_id is not None and xt_i != mask_id:
                continue
            l_0 -= float(np.log(probs[i, int(x0_i)]))
    return ElboTerms(t=t, l_T=l_T, l_tminus1=l_tminus1, l_0=l_0)


def loss_weight(t: np.ndarray | int, schedule: DiffusionSchedule,
                weighting: str = "reweighted") -> np.ndarray:
    """Per-example loss weight; the reweighting clamps to 0 at t >= T-1."""
    t = np.asarray(t, dtype=np.float64)
    if weighting == "uniform":
        return np.ones_like(t)
    if weighting == "reweighted":
        return np.maximum(0.0, (schedule.timesteps - t - 1.0) / schedule.timesteps)
    raise ValueError(f"unknown weighting {weighting!r}")


def training_loss(logits, x0: torch.Tensor, mask: torch.Tensor, t: torch.Tensor,
                  schedule: DiffusionSchedule, weighting: str = "reweighted") -> torch.Tensor:
    """Reweighted masked cross-entropy, averaged over the batch.

    Per example: w(t) * sum over absorbed positions of -log softmax(logits)
    at the true token, with w(t) = max(0, (T-t-1)/T).  Unmasked positions
    contribute exactly zero.  Accepts a single logits tensor or one per
    track; shapes (batch, steps, vocab) against x0/mask (batch, steps,
    tracks).
    """
    if isinstance(logits, torch.Tensor):
        logits = [logits]
    T = schedule.timesteps
    w = torch.clamp((T - t.to(torch.float64) - 1.0) / T, min=0.0)
    if weighting == "uniform":
        w = torch.ones_like(w)
    elif weighting != "reweighted":
        raise ValueError(f"unknown weighting {weighting!r}")

    total_masked = 0
    per_example = torch.zeros_like(w)
    for track, track_logits in enumerate(logits):
        log_probs = torch.log_softmax(track_logits.to(torch.float64), dim=-1)
        targets = x0[..., track].to(torch.long).clamp(min=0, max=track_logits.shape[-1] - 1)
        nll = -log_probs.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
        track_mask = mask[..., track].to(torch.float64)
        per_example = per_example + (nll * track_mask).sum(dim=-1)
        total_masked += int(mask[..., track].sum())

    if total_masked == 0:
        warnings.warn("training_loss: no masked positions in batch; loss is 0", stacklevel=2)
    return (w * per_example).mean()
