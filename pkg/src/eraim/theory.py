"""Counting conditions for detecting and recovering from spoofing.

A subset of anchors is benign when it contains no adversarial anchor and
adversarial when it mixes ``i >= 1`` adversarial anchors with too few benign
ones (at most ``N_min - 1``) to contradict the spoof. Python integers keep
the binomial sums exact for any anchor count.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class InfraCounts:
    n_min: int
    n_anc: int
    n_adv: int

    def __post_init__(self):
        if self.n_min < 1 or self.n_anc < 0 or not 0 <= self.n_adv <= self.n_anc:
            raise InvalidArgumentError(f"invalid counts {self}")

    @property
    def n_benign(self) -> int:
        return self.n_anc - self.n_adv


def benign_subset_count(c: InfraCounts) -> int:
    """Subsets of at least ``N_min`` anchors drawn only from benign anchors."""
    b = c.n_benign
    return sum(comb(b, i) for i in range(c.n_min, b + 1))


def adversarial_subset_count(c: InfraCounts) -> int:
    """Subsets with ``i`` adversarial and ``j`` benign anchors, ``1 <= j <= N_min - 1``, ``i + j >= N_min``."""
    b = c.n_benign
    total = 0
    for i in range(1, c.n_adv + 1):
        inner = sum(comb(b, j) for j in range(max(c.n_min - i, 1), min(c.n_min - 1, b) + 1))
        total += comb(c.n_adv, i) * inner
    return total


def check_lemma1(c: InfraCounts) -> bool:
    """Recoverable from uncoordinated spoofing."""
    return c.n_benign > c.n_min


def check_detectable(c: InfraCounts) -> bool:
    """Uncoordinated spoofing is detectable."""
    return c.n_benign >= c.n_min


def max_benign_in_adversarial(c: InfraCounts) -> int:
    """Most benign anchors a subset can hold while still agreeing with the spoof."""
    return c.n_min - 1


def check_lemma2(c: InfraCounts) -> bool:
    """Recoverable from coordinated spoofing: benign subsets outnumber adversarial ones."""
    return benign_subset_count(c) > adversarial_subset_count(c)


def check_theorem1(counts: Sequence[InfraCounts]) -> bool:
    slack = [c.n_benign - c.n_min for c in counts]
    return sum(s == 0 for s in slack) > 1 or any(s > 0 for s in slack)


def check_theorem2(counts: Sequence[InfraCounts]) -> bool:
    return sum(map(benign_subset_count, counts)) > sum(map(adversarial_subset_count, counts))


def condition_row(c: InfraCounts) -> dict:
    return {"Nmin": c.n_min, "Nanc": c.n_anc, "Nadv": c.n_adv,
            "lemma1": check_lemma1(c), "detectable": check_detectable(c), "lemma2": check_lemma2(c),
            "benign_count": benign_subset_count(c), "adv_count": adversarial_subset_count(c)}


# -- idealized recovery -------------------------------------------------------------

GNSS_MIN = 4
WIFI_MIN = 3


@dataclass(frozen=True)
class RecoveryTrial:
    """Outcome of one zero-noise recovery instance."""

    coordinated: bool
    counts: tuple[InfraCounts, ...]
    error: float
    n_subsets: int
    n_consistent: int
    n_kept: int

    @property
    def recovered(self) -> bool:
        return self.error < IDEAL_TOL


IDEAL_TOL = 1e-6


def condition_holds(counts: Sequence[InfraCounts], coordinated: bool) -> bool:
    """Recoverability condition for an attack kind.

    Uncoordinated attacks need Lemma 1 on every infrastructure; coordinated
    attacks need the multi-infrastructure counting condition, which is
    Lemma 2 when only one infrastructure is present.
    """
    if coordinated:
        return check_theorem2(counts)
    return all(check_lemma1(c) for c in counts)


def sample_counts(rng, coordinated: bool, gnss_range=(6, 9), wifi_range=(5, 8),
                  condition: bool | None = True) -> tuple[InfraCounts, InfraCounts]:
    """Random GNSS and Wi-Fi counts with at least one adversarial anchor.

    Anchor counts are uniform over the inclusive ranges and adversarial
    counts uniform over ``0..N_anc``. Draws repeat until
    :func:`condition_holds` equals ``condition`` (``None`` accepts any draw).
    """
    while True:
        n_g = int(rng.integers(gnss_range[0], gnss_range[1] + 1))
        n_w = int(rng.integers(wifi_range[0], wifi_range[1] + 1))
        g = InfraCounts(GNSS_MIN, n_g, int(rng.integers(0, n_g + 1)))
        w = InfraCounts(WIFI_MIN, n_w, int(rng.integers(0, n_w + 1)))
        if g.n_adv + w.n_adv == 0:
            continue
        if condition is None or condition_holds((g, w), coordinated) == condition:
            return g, w


def _fit_rms(diag) -> float:
    if "residuals" in diag:
        r = np.asarray(diag["residuals"], dtype=float)
        return float(np.sqrt(np.mean(r**2)))
    return float(diag["range_rms"])


def idealized_recovery_trial(counts: Sequence[InfraCounts], coordinated: bool, seed=0,
                             n_lambda=0.0, consistency_tol=1e-4) -> RecoveryTrial:
    """Run one zero-noise instance through subset solving, exclusion and recovery.

    Parameters
    ----------
    counts : sequence of InfraCounts
        One entry per infrastructure: ``N_min = 4`` is GNSS and
        ``N_min = 3`` is Wi-Fi, each at most once.
    coordinated : bool
        Whether every adversarial anchor points at one common spoof position
        or each at its own random one.
    seed : int or Generator
        Geometry and spoof placement.
    n_lambda : float
        Exclusion threshold multiplier; the idealized analysis uses 0.
    consistency_tol : float
        Fit residual (m) above which a subset counts as detected.

    Notes
    -----
    Every subset is enumerated and solved, measurement noise is zero and the
    uncertainty floor is negligible. Overdetermined mixtures of benign and
    adversarial anchors leave a residual and are dropped as detected; the
    remaining subsets are fused with equal weight, as uncertainties are all
    vanishingly small, and excluded recursively.
    """
    # local imports keep the counting functions free of solver dependencies
    from .fusion import exclude_from_arrays
    from .model import Infrastructure
    from .solvers import PathLossModel, range_to_rssi
    from .subsets import InfraData, SolverConfig, enumerate_subsets, evaluate_subsets

    by_infra = {}
    for c in counts:
        infra = {GNSS_MIN: Infrastructure.GNSS, WIFI_MIN: Infrastructure.WIFI}.get(c.n_min)
        if infra is None or infra in by_infra:
            raise InvalidArgumentError("expected at most one GNSS (N_min 4) and one Wi-Fi (N_min 3) entry")
        by_infra[infra] = c
    rng = np.random.default_rng(seed)
    truth = np.r_[rng.uniform(-40, 40, 2), 0.0]

    def spoof_point():
        mag, ang = rng.uniform(100, 500), rng.uniform(0, 2 * np.pi)
        return truth + np.array([mag * np.sin(ang), mag * np.cos(ang), 0.0])

    common = spoof_point()

    def apparent(c: InfraCounts):
        pos = np.repeat(truth[None], c.n_anc, axis=0)
        for i in rng.choice(c.n_anc, size=c.n_adv, replace=False):
            pos[i] = common if coordinated else spoof_point()
        return pos

    model = PathLossModel()
    data, specs = {}, []
    if Infrastructure.GNSS in by_infra:
        c = by_infra[Infrastructure.GNSS]
        az, el = rng.uniform(0, 2 * np.pi, c.n_anc), np.radians(rng.uniform(15, 85, c.n_anc))
        r = rng.uniform(20.2e6, 25e6, c.n_anc)
        sats = np.c_[r * np.cos(el) * np.sin(az), r * np.cos(el) * np.cos(az), r * np.sin(el)]
        pr = np.linalg.norm(sats - apparent(c), axis=1) + rng.uniform(-1e3, 1e3)
        ids = tuple(f"G{i:02d}" for i in range(c.n_anc))
        data[Infrastructure.GNSS] = InfraData(Infrastructure.GNSS, ids, sats, pr, np.full(c.n_anc, 1e-6))
        specs += enumerate_subsets(ids, Infrastructure.GNSS)
    if Infrastructure.WIFI in by_infra:
        c = by_infra[Infrastructure.WIFI]
        aps = np.c_[rng.uniform(-60, 60, (c.n_anc, 2)), rng.uniform(2, 8, c.n_anc)]
        rssi = range_to_rssi(np.linalg.norm(aps - apparent(c), axis=1), model)
        ids = tuple(f"AP{i:02d}" for i in range(c.n_anc))
        data[Infrastructure.WIFI] = InfraData(Infrastructure.WIFI, ids, aps, rssi, np.full(c.n_anc, 1e-6))
        specs += enumerate_subsets(ids, Infrastructure.WIFI)
    cfg = SolverConfig(path_loss={Infrastructure.WIFI: model}, sigma_min=1e-9)
    batch, _ = evaluate_subsets(data, specs, cfg)
    consistent = np.array([_fit_rms(d) <= consistency_tol for d in batch.diagnostics], dtype=bool)
    pos = batch.position[consistent]
    if len(pos) == 0:
        return RecoveryTrial(coordinated, tuple(counts), float("inf"), len(batch), 0, 0)
    ex = exclude_from_arrays(pos, np.ones_like(pos), n_lambda)
    err = float(np.linalg.norm(pos[ex.benign].mean(axis=0) - truth))
    return RecoveryTrial(coordinated, tuple(counts), err, len(batch), int(consistent.sum()),
                         int(ex.benign.sum()))


def idealized_recovery_oracle(counts: Sequence[InfraCounts], coordinated: bool, seed=0) -> bool:
    """Whether the zero-noise instance recovers the true position within 1e-6 m."""
    return idealized_recovery_trial(counts, coordinated, seed).recovered


def idealized_recovery_study(n=500, seed=0, condition: bool | None = True) -> list[RecoveryTrial]:
    """Alternate uncoordinated and coordinated instances with counts from :func:`sample_counts`."""
    ss = np.random.SeedSequence(seed)
    out = []
    for i, child in enumerate(ss.spawn(n)):
        rng = np.random.default_rng(child)
        coordinated = bool(i % 2)
        counts = sample_counts(rng, coordinated, condition=condition)
        out.append(idealized_recovery_trial(counts, coordinated, rng))
    return out
