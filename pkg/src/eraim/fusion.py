"""Attack scoring, inconsistent-subset exclusion and position recovery.

Functions here take any sequence of estimates exposing ``spec.infrastructure``,
``position`` and ``uncertainty`` (see :class:`eraim.subsets.SubsetEstimate`).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError, NoDataError

SIGMA_MIN = 1.0
MAX_EXCLUSION_ITER = 20
# slack on the exclusion threshold absorbing float noise between equal deviations
EXCLUSION_TOL = 1e-6


def subset_uncertainty(diagnostics, infrastructure=None, sigma_min=SIGMA_MIN) -> np.ndarray:
    """Per-axis uncertainty (m) from solver diagnostics.

    * ``gnss``: spatial DOP times the mean pseudorange sigma on every axis.
    * ``wls``: ``sqrt(residual / k) * mean range``.
    * ``trilateration``: the larger of the propagated geometry sigma and the
      RMS range residual, per horizontal axis; up takes the horizontal max.
    * ``fingerprint``: ``c_f / mean(top scores)`` with ``c_f = sigma_min * k / d_min``
      so that an exact match maps to ``sigma_min``.
    * otherwise: the ``poly_residual`` norm.

    Everything is clamped below at ``sigma_min``.
    """
    kind = diagnostics.get("kind")
    if kind == "gnss":
        dop = np.asarray(diagnostics["dop"], dtype=float)
        s = np.full(3, math.sqrt(float(np.sum(dop[:3] ** 2))) * float(diagnostics.get("range_sigma", 1.0)))
    elif kind == "wls":
        r = max(float(diagnostics["residual"]), 0.0)
        s = np.full(3, math.sqrt(r / diagnostics["size"]) * float(diagnostics["mean_range"]))
    elif kind == "trilateration":
        g = np.asarray(diagnostics["geometry_sigma"], dtype=float)
        h = np.maximum(g, float(diagnostics.get("range_rms", 0.0)))
        s = np.r_[h, h.max()]
    elif kind == "fingerprint":
        c_f = sigma_min * diagnostics["size"] / diagnostics["d_min"]
        mean_f = float(np.mean(diagnostics["scores"]))
        s = np.full(3, c_f / mean_f if mean_f > 0 else np.inf)
    else:
        s = np.full(3, float(diagnostics.get("poly_residual", 0.0)))
    s = np.where(np.isnan(s), np.inf, s)
    return np.maximum(s, sigma_min)


def batch_uncertainty(kind, columns, sigma_min=SIGMA_MIN) -> np.ndarray:
    """Row-wise :func:`subset_uncertainty` for ``S`` subsets of one solver kind.

    ``columns`` holds the stacked diagnostic fields; returns (S, 3).
    """
    if kind == "gnss":
        dop = np.asarray(columns["dop"], dtype=float)
        h = np.sqrt(np.sum(dop[:, :3] ** 2, axis=1)) * np.asarray(columns["range_sigma"], dtype=float)
        s = np.repeat(h[:, None], 3, axis=1)
    elif kind == "wls":
        r = np.maximum(np.asarray(columns["residual"], dtype=float), 0.0)
        h = np.sqrt(r / np.asarray(columns["size"], dtype=float)) * np.asarray(columns["mean_range"], dtype=float)
        s = np.repeat(h[:, None], 3, axis=1)
    elif kind == "trilateration":
        g = np.maximum(np.asarray(columns["geometry_sigma"], dtype=float),
                       np.asarray(columns["range_rms"], dtype=float)[:, None])
        s = np.c_[g, g.max(axis=1)]
    else:
        raise InvalidArgumentError(f"no batched uncertainty for {kind!r}")
    s = np.where(np.isnan(s), np.inf, s)
    return np.maximum(s, sigma_min)


def log_density(mean, sigma, p):
    """Log of the peak-normalized axis-aligned Gaussian density at ``p``."""
    z = (np.asarray(p, dtype=float) - np.asarray(mean, dtype=float)) / np.asarray(sigma, dtype=float)
    return -0.5 * np.sum(z**2, axis=-1)


def normalized_density(mean, sigma, p) -> float:
    """Gaussian density at ``p`` divided by its peak value, in (0, 1]."""
    if np.any(np.asarray(sigma) <= 0):
        raise InvalidArgumentError("sigma must be positive")
    return float(np.exp(log_density(mean, sigma, p)))


def _arrays(estimates):
    if hasattr(estimates, "groups"):
        return estimates.groups, estimates.position, estimates.uncertainty
    infra = [e.spec.infrastructure for e in estimates]
    mu = np.array([e.position for e in estimates], dtype=float).reshape(-1, 3)
    sig = np.array([e.uncertainty for e in estimates], dtype=float).reshape(-1, 3)
    return infra, mu, sig


def likelihood_from_arrays(groups, means, sigmas, p) -> float:
    """Score from stacked densities; ``groups`` labels each row's infrastructure."""
    if len(means) == 0:
        raise NoDataError("no subset densities")
    lg = log_density(means, sigmas, p)
    per_infra = [lg[[g == k for g in groups]].mean() for k in dict.fromkeys(groups)]
    return float(-np.expm1(np.mean(per_infra)))


def attack_likelihood(estimates: Sequence, p) -> float:
    """Attack score ``f_t`` in [0, 1] for a reported position ``p``.

    One minus the geometric mean over infrastructures of the geometric mean
    of subset densities within each infrastructure; infrastructures without
    subsets do not take part.
    """
    infra, mu, sig = _arrays(estimates)
    return likelihood_from_arrays(infra, mu, sig, p)


def decide_alarm(score: float, threshold: float) -> bool:
    return bool(score > threshold)


def fuse(means, sigmas):
    """Per-axis inverse-uncertainty weighted mean."""
    w = 1.0 / np.asarray(sigmas, dtype=float)
    return (w * means).sum(axis=0) / w.sum(axis=0)


def preliminary_fuse(estimates: Sequence) -> np.ndarray:
    if not estimates:
        raise InsufficientDataError("no estimates to fuse")
    _, mu, sig = _arrays(estimates)
    return fuse(mu, sig)


@dataclass(frozen=True)
class ExclusionResult:
    benign: np.ndarray  # bool mask over the input estimates
    iterations: int
    deviations: np.ndarray
    threshold: float
    fused: np.ndarray  # fused position over the final survivors
    trivial: bool = False


def exclude_from_arrays(means, sigmas, n_lambda=3.0, max_iter=MAX_EXCLUSION_ITER, tol=EXCLUSION_TOL):
    """Array form of :func:`exclude_inconsistent`."""
    mu = np.asarray(means, dtype=float)
    sig = np.asarray(sigmas, dtype=float)
    n = len(mu)
    if n == 0:
        raise InsufficientDataError("no estimates to check")
    keep = np.ones(n, dtype=bool)
    if n == 1:
        return ExclusionResult(keep, 0, np.zeros(1), 0.0, mu[0].copy(), True)
    it = 0
    while True:
        it += 1
        p = fuse(mu[keep], sig[keep])
        d = np.linalg.norm(mu - p, axis=1)
        ds = d[keep]
        lam = float(ds.mean() + n_lambda * ds.std())
        drop = keep & (d > lam + tol)
        if not drop.any() or it >= max_iter:
            break
        if drop.sum() == keep.sum():
            break
        keep &= ~drop
    return ExclusionResult(keep, it, d, lam, p)


def exclude_inconsistent(estimates: Sequence, n_lambda=3.0, max_iter=MAX_EXCLUSION_ITER,
                         tol=EXCLUSION_TOL) -> ExclusionResult:
    """Iteratively drop subsets whose deviation from the fused position is large.

    Each pass fuses the survivors, measures every survivor's distance ``d`` to
    the fused point and drops those with ``d > mean(d) + n_lambda * std(d)``
    (population std). Stops at a fixpoint or after ``max_iter`` passes; at
    least one subset always survives. A lone estimate is returned with
    ``trivial=True``.
    """
    _, mu, sig = _arrays(estimates)
    return exclude_from_arrays(mu, sig, n_lambda, max_iter, tol)


def recover_position(estimates: Sequence, benign) -> np.ndarray | None:
    """Fused position over benign subsets; ``None`` when none remain."""
    benign = np.asarray(benign, dtype=bool)
    if not benign.any():
        return None
    _, mu, sig = _arrays(estimates)
    return fuse(mu[benign], sig[benign])


def calibrate_threshold(benign_scores, target_fp, grid=101):
    """Smallest threshold whose false-positive rate on benign scores is at most ``target_fp``.

    ``grid`` is the number of evenly spaced candidates in [0, 1]; ``None``
    sweeps the exact breakpoints (0 and every distinct benign score). An
    unreachable target yields 1.0 with a warning.
    """
    s = np.sort(np.asarray(benign_scores, dtype=float))
    if s.size == 0:
        raise InsufficientDataError("no benign scores to calibrate on")
    if not 0.0 <= target_fp <= 1.0:
        raise InvalidArgumentError("target P_fp must lie in [0, 1]")
    cands = np.unique(np.r_[0.0, s]) if grid is None else np.linspace(0.0, 1.0, grid)
    fp = 1.0 - np.searchsorted(s, cands, side="right") / s.size
    ok = np.flatnonzero(fp <= target_fp)
    if ok.size == 0:
        warnings.warn(f"P_fp <= {target_fp} unreachable; using threshold 1.0", stacklevel=2)
        return 1.0
    return float(cands[ok[0]])


@dataclass(frozen=True)
class DetectionReport:
    time: int
    score: float
    alarm: bool
    preliminary_fused: np.ndarray | None
    deviations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    excluded: tuple = ()
    benign_index_sets: dict = field(default_factory=dict)
    recovered: np.ndarray | None = None
    iterations: int = 0
    reference: str = "lbs"
    n_subsets: int = 0
    markers: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else [float(x) for x in v]

        return {
            "time_ms": self.time,
            "score": float(self.score),
            "alarm": bool(self.alarm),
            "reference": self.reference,
            "preliminary_fused": vec(self.preliminary_fused),
            "deviations": vec(self.deviations),
            "excluded": [[s.infrastructure.value, list(s.members)] for s in self.excluded],
            "benign_index_sets": {k: list(v) for k, v in self.benign_index_sets.items()},
            "recovered": vec(self.recovered),
            "iterations": self.iterations,
            "n_subsets": self.n_subsets,
            "markers": list(self.markers),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
