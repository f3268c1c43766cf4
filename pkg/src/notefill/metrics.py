"""Framewise self-similarity: Overlapping Area, Consistency, Variance.

Pieces are cut into 4-bar windows at a 2-bar hop.  Within each window the
pitches and durations of notes onsetting there are summarized as Gaussians;
the Overlapping Area (OA) of adjacent windows' Gaussians is pooled over all
window pairs of a set of pieces.  Consistency and Variance compare the
pooled OA mean/variance against a ground-truth set's, clipped to [0, 1].

Drum tracks are unpitched and excluded; trio evaluation pools melody and
bass pairs.  Aggregation uses exactly rounded summation, so results do not
depend on piece order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricsError
from .tokens import TokenSequence, track_note_events

_SQRT2 = math.sqrt(2.0)


def _phi(z: float) -> float:
    """Standard normal CDF (erf-based: cheap enough for annealing loops)."""
    return 0.5 * (1.0 + math.erf(z / _SQRT2))

WINDOW_BARS = 4
HOP_BARS = 2
VARIANCE_FLOOR = 1e-4


@dataclass(frozen=True)
class WindowStats:
    """Gaussian summaries of one window's note pitches and durations."""

    index: int
    pitch_mean: float
    pitch_var: float
    duration_mean: float
    duration_var: float
    note_count: int


def _fsum_mean_var(values) -> tuple[float, float]:
    """Population mean/variance via exactly rounded sums (order-independent)."""
    values = list(map(float, values))
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, var


def window_stats(notes, total_steps: int, steps_per_bar: int = 16,
                 window_bars: int = WINDOW_BARS, hop_bars: int = HOP_BARS) -> list[WindowStats | None]:
    """Per-window Gaussian stats; None marks empty (excluded) windows.

    `notes` is any iterable of objects with pitch / onset_step /
    duration_steps attributes.  A note belongs to every window containing
    its onset.
    """
    bars = total_steps // steps_per_bar
    n_windows = max(0, (bars - window_bars) // hop_bars + 1)
    buckets: list[list[tuple[float, float]]] = [[] for _ in range(n_windows)]
    window_steps = window_bars * steps_per_bar
    hop_steps = hop_bars * steps_per_bar
    for note in notes:
        onset = note.onset_step
        if not 0 <= onset < total_steps:
            continue
        last = min(onset // hop_steps, n_windows - 1)
        first = max(0, (onset - window_steps) // hop_steps + 1)
        for w in range(first, last + 1):
            start = w * hop_steps
            if start <= onset < start + window_steps:
                buckets[w].append((float(note.pitch), float(note.duration_steps)))

    out: list[WindowStats | None] = []
    for index, bucket in enumerate(buckets):
        if not bucket:
            out.append(None)
            continue
        pitches = [p for p, _ in bucket]
        durations = [d for _, d in bucket]
        p_mean, p_var = _fsum_mean_var(pitches)
        d_mean, d_var = _fsum_mean_var(durations)
        out.append(
            WindowStats(
                index=index,
                pitch_mean=p_mean,
                pitch_var=max(p_var, VARIANCE_FLOOR),
                duration_mean=d_mean,
                duration_var=max(d_var, VARIANCE_FLOOR),
                note_count=len(bucket),
            )
        )
    return out


def overlap_area(mean1: float, var1: float, mean2: float, var2: float) -> float:
    """Area under min(pdf1, pdf2) of two Gaussians; 1 iff identical.

    Solves the pdf-equality equation for the intersection points and
    integrates the lower pdf on each segment through Gaussian CDFs.
    """
    var1 = max(float(var1), VARIANCE_FLOOR)
    var2 = max(float(var2), VARIANCE_FLOOR)
    mean1, mean2 = float(mean1), float(mean2)
    sd1, sd2 = math.sqrt(var1), math.sqrt(var2)

    if math.isclose(var1, var2, rel_tol=1e-12, abs_tol=1e-300):
        if mean1 == mean2:
            return 1.0
        # Equal widths: single crossing at the midpoint.
        half_gap = abs(mean1 - mean2) / 2.0
        return 2.0 * _phi(-half_gap / sd1)

    # log pdf1 = log pdf2 reduces to a quadratic a x^2 + b x + c = 0.
    a = 1.0 / var2 - 1.0 / var1
    b = 2.0 * (mean1 / var1 - mean2 / var2)
    c = mean2**2 / var2 - mean1**2 / var1 + math.log(var2 / var1)
    disc = b * b - 4.0 * a * c
    if disc <= 0:
        # Distinct variances always cross twice; disc <= 0 only happens by
        # rounding when the widths are nearly equal, so use that formula.
        if mean1 == mean2:
            return 1.0
        half_gap = abs(mean1 - mean2) / 2.0
        return 2.0 * _phi(-half_gap / math.sqrt((var1 + var2) / 2.0))
    root = math.sqrt(disc)
    x1, x2 = sorted(((-b - root) / (2 * a), (-b + root) / (2 * a)))

    # Between the crossings the narrower pdf is the higher one, so the lower
    # pdf is the wide Gaussian inside [x1, x2] and the narrow one outside.
    if var1 <= var2:
        narrow_mean, narrow_sd, wide_mean, wide_sd = mean1, sd1, mean2, sd2
    else:
        narrow_mean, narrow_sd, wide_mean, wide_sd = mean2, sd2, mean1, sd1

    total = (
        _phi((x1 - narrow_mean) / narrow_sd)
        + (_phi((x2 - wide_mean) / wide_sd) - _phi((x1 - wide_mean) / wide_sd))
        + (1.0 - _phi((x2 - narrow_mean) / narrow_sd))
    )
    return min(1.0, max(0.0, total))


def piece_pair_oas(stats: list[WindowStats | None]) -> tuple[list[float], list[float]]:
    """OA for each adjacent pair of non-empty windows: (pitch, duration)."""
    pitch, duration = [], []
    for a, b in zip(stats, stats[1:]):
        if a is None or b is None:
            continue
        pitch.append(overlap_area(a.pitch_mean, a.pitch_var, b.pitch_mean, b.pitch_var))
        duration.append(
            overlap_area(a.duration_mean, a.duration_var, b.duration_mean, b.duration_var)
        )
    return pitch, duration


def melodic_tracks(seq: TokenSequence) -> list[int]:
    return [0] if seq.tracks == 1 else [0, 1]


def sequence_pair_oas(seq: TokenSequence) -> tuple[list[float], list[float]]:
    """Pooled adjacent-window OAs of a piece (melody and bass tracks)."""
    pitch, duration = [], []
    for track in melodic_tracks(seq):
        stats = window_stats(track_note_events(seq, track), seq.steps, seq.steps_per_bar)
        p, d = piece_pair_oas(stats)
        pitch.extend(p)
        duration.extend(d)
    return pitch, duration


@dataclass(frozen=True)
class QuantityScores:
    mu_oa: float
    var_oa: float
    mu_gt: float
    var_gt: float
    consistency: float
    variance: float
    pair_count: int
    gt_pair_count: int


@dataclass(frozen=True)
class SelfSimilarityReport:
    pitch: QuantityScores
    duration: QuantityScores
    piece_count: int
    gt_piece_count: int

    @property
    def scores(self) -> dict[str, float]:
        return {
            "consistency_pitch": self.pitch.consistency,
            "variance_pitch": self.pitch.variance,
            "consistency_duration": self.duration.consistency,
            "variance_duration": self.duration.variance,
        }

    def to_json(self) -> dict:
        def quantity(q: QuantityScores) -> dict:
            return {
                "mu_oa": q.mu_oa,
                "var_oa": q.var_oa,
                "mu_gt": q.mu_gt,
                "var_gt": q.var_gt,
                "consistency": q.consistency,
                "variance": q.variance,
                "pair_count": q.pair_count,
                "gt_pair_count": q.gt_pair_count,
            }

        return {
            "pitch": quantity(self.pitch),
            "duration": quantity(self.duration),
            "piece_count": self.piece_count,
            "gt_piece_count": self.gt_piece_count,
        }

    def table(self) -> str:
        rows = [
            ("Quantity", "C", "Var", "mu_OA", "mu_GT"),
            (
                "Pitch",
                f"{self.pitch.consistency:.3f}",
                f"{self.pitch.variance:.3f}",
                f"{self.pitch.mu_oa:.4f}",
                f"{self.pitch.mu_gt:.4f}",
            ),
            (
                "Duration",
                f"{self.duration.consistency:.3f}",
                f"{self.duration.variance:.3f}",
                f"{self.duration.mu_oa:.4f}",
                f"{self.duration.mu_gt:.4f}",
            ),
        ]
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
        return "\n".join(lines)


def relative_scores(mu_oa, var_oa, mu_gt, var_gt) -> tuple[float, float]:
    if mu_gt == 0 or var_gt == 0:
        raise MetricsError("degenerate ground truth: zero OA mean or variance")
    consistency = max(0.0, 1.0 - abs(mu_oa - mu_gt) / mu_gt)
    variance = max(0.0, 1.0 - abs(var_oa - var_gt) / var_gt)
    return consistency, variance


def _pooled(oa_lists: list[tuple[list[float], list[float]]], label: str):
    pitch = [v for p, _ in oa_lists for v in p]
    duration = [v for _, d in oa_lists for v in d]
    if not pitch or not duration:
        raise MetricsError(f"{label}: no valid adjacent window pairs")
    return pitch, duration


def evaluate_oa_pools(set_pools, gt_pools, piece_count: int,
                      gt_piece_count: int) -> SelfSimilarityReport:
    set_pitch, set_duration = _pooled(set_pools, "evaluation set")
    gt_pitch, gt_duration = _pooled(gt_pools, "ground truth set")

    def quantity(sample: list[float], truth: list[float]) -> QuantityScores:
        mu_oa, var_oa = _fsum_mean_var(sample)
        mu_gt, var_gt = _fsum_mean_var(truth)
        consistency, variance = relative_scores(mu_oa, var_oa, mu_gt, var_gt)
        return QuantityScores(
            mu_oa=mu_oa, var_oa=var_oa, mu_gt=mu_gt, var_gt=var_gt,
            consistency=consistency, variance=variance,
            pair_count=len(sample), gt_pair_count=len(truth),
        )

    return SelfSimilarityReport(
        pitch=quantity(set_pitch, gt_pitch),
        duration=quantity(set_duration, gt_duration),
        piece_count=piece_count,
        gt_piece_count=gt_piece_count,
    )


def evaluate(set_a: list[TokenSequence], ground_truth: list[TokenSequence]) -> SelfSimilarityReport:
    """Consistency/Variance of a sample set against a ground-truth set."""
    if not set_a or not ground_truth:
        raise MetricsError("both sets must be non-empty")
    return evaluate_oa_pools(
        [sequence_pair_oas(s) for s in set_a],
        [sequence_pair_oas(s) for s in ground_truth],
        piece_count=len(set_a),
        gt_piece_count=len(ground_truth),
    )


def write_report(report: SelfSimilarityReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")
