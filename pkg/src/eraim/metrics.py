"""Per-fix detection rates, detection delay, ROC sweeps and recovery error."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError
from .fusion import calibrate_threshold
from .logs import EPOCH_LABEL


def attacked_by_time(labels, times) -> np.ndarray:
    """Per-fix attack flags aligned to ``times``.

    Epoch-level rows (infra and anchor ``*``) decide when present; otherwise
    a fix counts as attacked when any anchor row at that time is attacked.
    """
    epoch_rows = {t: a for t, a, infra, aid in labels if infra == EPOCH_LABEL and aid == EPOCH_LABEL}
    anchor_rows: dict[int, bool] = {}
    for t, a, infra, aid in labels:
        if not (infra == EPOCH_LABEL and aid == EPOCH_LABEL):
            anchor_rows[t] = anchor_rows.get(t, False) or a
    return np.array([epoch_rows.get(t, anchor_rows.get(t, False)) for t in times], dtype=bool)


def rates(alarms, attacked):
    """(P_tp, P_fp); a rate is NaN when its denominator is empty."""
    alarms = np.asarray(alarms, dtype=bool)
    attacked = np.asarray(attacked, dtype=bool)
    tp = alarms[attacked].mean() if attacked.any() else np.nan
    fp = alarms[~attacked].mean() if (~attacked).any() else np.nan
    return float(tp), float(fp)


def attack_windows(attacked) -> list[tuple[int, int]]:
    """Maximal runs of attacked fixes as ``[start, end)`` index pairs."""
    a = np.r_[False, np.asarray(attacked, dtype=bool), False].astype(int)
    d = np.diff(a)
    return list(zip(np.flatnonzero(d == 1).tolist(), np.flatnonzero(d == -1).tolist()))


def detection_delays(times, alarms, attacked) -> list[float | None]:
    """Seconds from attack onset to the first alarm, one entry per window.

    Onset is the time of the last benign fix before the window (one cadence
    before the first attacked fix for a window at the start), so a detector
    alarming on the first attacked fix scores one epoch. Windows without an
    alarm give ``None``.
    """
    times = np.asarray(times, dtype=np.int64)
    alarms = np.asarray(alarms, dtype=bool)
    out = []
    for s, e in attack_windows(attacked):
        if s > 0:
            onset = times[s - 1]
        else:
            cadence = times[1] - times[0] if len(times) > 1 else 1000
            onset = times[0] - cadence
        hit = np.flatnonzero(alarms[s:e])
        out.append(None if hit.size == 0 else float(times[s + hit[0]] - onset) / 1000.0)
    return out


def recovery_errors(recovered, truth, attacked=None) -> np.ndarray:
    """Horizontal error of recovered positions; rows without a recovery are skipped."""
    rec = np.asarray(recovered, dtype=float).reshape(-1, 3)
    tru = np.asarray(truth, dtype=float).reshape(-1, 3)
    sel = ~np.isnan(rec).any(axis=1)
    if attacked is not None:
        sel &= np.asarray(attacked, dtype=bool)
    return np.linalg.norm(rec[sel, :2] - tru[sel, :2], axis=1)


@dataclass
class MetricsSummary:
    p_tp: float
    p_fp: float
    delays: list = field(default_factory=list)
    delta_t_d: float | None = None
    roc: list = field(default_factory=list)
    recovery_mae: float | None = None
    recovery_median: float | None = None
    recovery_p20: float | None = None
    recovery_p80: float | None = None
    n_attacked: int = 0
    n_benign: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(times, alarms, attacked, recovered=None, truth=None) -> MetricsSummary:
    times = np.asarray(times)
    attacked = np.asarray(attacked, dtype=bool)
    if len(times) != len(attacked) or len(times) != len(alarms):
        raise InvalidArgumentError("times, alarms and labels must align")
    tp, fp = rates(alarms, attacked)
    delays = detection_delays(times, alarms, attacked)
    found = [d for d in delays if d is not None]
    out = MetricsSummary(tp, fp, delays, float(np.mean(found)) if found else None,
                         n_attacked=int(attacked.sum()), n_benign=int((~attacked).sum()))
    if recovered is not None and truth is not None:
        err = recovery_errors(recovered, truth, attacked)
        if err.size:
            out.recovery_mae = float(err.mean())
            out.recovery_median = float(np.median(err))
            out.recovery_p20 = float(np.percentile(err, 20))
            out.recovery_p80 = float(np.percentile(err, 80))
    return out


def roc(scores, attacked, grid=None) -> list[tuple[float, float, float]]:
    """``(lambda_f, P_fp, P_tp)`` for every distinct threshold, sorted by threshold.

    ``grid`` defaults to 101 evenly spaced points in [0, 1].
    """
    scores = np.asarray(scores, dtype=float)
    attacked = np.asarray(attacked, dtype=bool)
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.unique(np.asarray(grid, dtype=float))
    out = []
    for lam in grid:
        tp, fp = rates(scores > lam, attacked)
        out.append((float(lam), fp, tp))
    return out


def tp_at_fp(scores, attacked, target_fp) -> float:
    """Detection rate at the smallest threshold meeting ``target_fp`` on benign fixes.

    The threshold sweep is exact (over the benign scores themselves).
    """
    scores = np.asarray(scores, dtype=float)
    attacked = np.asarray(attacked, dtype=bool)
    if not (~attacked).any() or not attacked.any():
        raise InsufficientDataError("need both benign and attacked fixes")
    lam = calibrate_threshold(scores[~attacked], target_fp, grid=None)
    return float((scores[attacked] > lam).mean())


def pooled(values: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(v) for v in values]) if values else np.zeros(0)
