"""Epoch-by-epoch detector: subset generation, motion smoothing and fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import motion
from .errors import InsufficientDataError
from .fusion import (DetectionReport, attack_likelihood, decide_alarm, exclude_inconsistent,
                     preliminary_fuse, recover_position)
from .geodesy import LocalFrame
from .model import AnchorRegistry, Epoch, GeoPoint, Infrastructure
from .subsets import (DEFAULT_CAP, DEFAULT_DOP_THRESHOLD, EstimateBatch, InfraData, SolverConfig,
                      evaluate_infrastructure, greedy_dop_expansion, padded_index, plan_subsets)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectorConfig:
    sampling_rate: float = 1.0
    cap: int | None = DEFAULT_CAP
    seed: int = 0
    gnss_strategy: str = "enumerate"  # or "greedy"
    dop_threshold: float = DEFAULT_DOP_THRESHOLD
    window: int = motion.DEFAULT_WINDOW
    poly_order: int = motion.DEFAULT_ORDER
    kernel_decay: float = motion.DEFAULT_DECAY
    kernel_scale: float = 1.0  # epochs per kernel time unit
    smoothing: bool = True
    poly_uncertainty: bool = True  # floor subset sigma by the smoothing residual
    motion_sigma: float = 0.1  # per-epoch displacement noise, m
    eps_factor: float = 3.0
    n_lambda: float = 3.0
    lambda_f: float = 0.5
    solver: SolverConfig = field(default_factory=SolverConfig)

    @property
    def eps(self) -> float:
        return self.eps_factor * self.motion_sigma


class _Tracks:
    """Ring buffers of raw subset positions over the smoothing window, one row per subset key."""

    def __init__(self, size):
        self.size = size
        self.ids: dict[tuple, int] = {}
        self.free: list[int] = []
        self.pos = np.zeros((0, size, 3))
        self.epoch = np.zeros((0, size), dtype=np.int64)

    def rows(self, keys) -> np.ndarray:
        out = np.empty(len(keys), dtype=int)
        for i, key in enumerate(keys):
            r = self.ids.get(key)
            if r is None:
                if not self.free:
                    n = len(self.pos)
                    grow = max(n, 64)
                    self.pos = np.concatenate([self.pos, np.zeros((grow, self.size, 3))])
                    self.epoch = np.concatenate([self.epoch, np.full((grow, self.size), -1, dtype=np.int64)])
                    self.free = list(range(n + grow - 1, n - 1, -1))
                r = self.ids[key] = self.free.pop()
                self.epoch[r] = -1
            out[i] = r
        return out

    def prune(self, horizon):
        stale = self.epoch.max(axis=1) < horizon
        for key in [k for k, r in self.ids.items() if stale[r]]:
            self.free.append(self.ids.pop(key))


class Detector:
    """Stateful extended-RAIM detector; feed epochs in time order.

    Parameters
    ----------
    origin : GeoPoint
        Local ENU frame origin shared with the scenario.
    registry : AnchorRegistry
        Terrestrial anchor positions.
    """

    def __init__(self, origin: GeoPoint, registry: AnchorRegistry, config: DetectorConfig = DetectorConfig()):
        self.config = config
        self.frame = LocalFrame(origin.latitude, origin.longitude, origin.altitude)
        self.registry = registry
        self.smoother = motion.Smoother(config.window, config.poly_order, config.kernel_decay, config.kernel_scale)
        self._anchor_enu: dict[tuple, np.ndarray] = {}
        self._plans: dict[tuple, tuple] = {}
        self._tracks = _Tracks(config.window + 1)
        self._verified: dict[int, np.ndarray] = {}
        self._k = -1
        self._prev_motion = None
        self._prev_time = None

    # -- inputs --

    def _enu(self, infra, anchor):
        key = (infra, anchor.id, anchor.ecef)
        if key not in self._anchor_enu:
            if anchor.ecef is not None:
                self._anchor_enu[key] = self.frame.ecef_to_enu(anchor.ecef)
            else:
                p = anchor.position
                self._anchor_enu[key] = self.frame.geodetic_to_enu(p.latitude, p.longitude, p.altitude)
        return self._anchor_enu[key]

    def _infra_data(self, epoch: Epoch):
        out = {}
        for infra, ms in epoch.by_infrastructure().items():
            ids, pos, vals, sig = [], [], [], []
            for m in sorted(ms, key=lambda m: m.anchor_id):
                a = epoch.anchors.get(m.anchor_id) if infra is Infrastructure.GNSS else self.registry.get(infra, m.anchor_id)
                if a is None:
                    log.debug("unknown anchor %s/%s", infra.value, m.anchor_id)
                    continue
                if ids and ids[-1] == m.anchor_id:
                    continue
                ids.append(m.anchor_id)
                pos.append(self._enu(infra, a))
                vals.append(m.value)
                sig.append(m.sigma)
            if ids:
                out[infra] = InfraData(infra, tuple(ids), np.array(pos), np.array(vals), np.array(sig))
        return out

    def _plan(self, d: InfraData):
        """Subsets for one infrastructure with their padded member indices."""
        cfg = self.config
        if d.infrastructure is Infrastructure.GNSS and cfg.gnss_strategy == "greedy":
            # geometry shifts with satellite motion, so no caching
            specs, _ = greedy_dop_expansion(d.ids, d.positions, cfg.dop_threshold)
            return specs, padded_index(d.ids, specs)
        key = (d.infrastructure, d.ids)
        if key not in self._plans:
            specs = plan_subsets(d.ids, d.infrastructure, cfg.sampling_rate, cfg.seed, cfg.cap)
            self._plans[key] = (specs, padded_index(d.ids, specs))
        return self._plans[key]

    # -- motion --

    def _prediction_step(self, epoch: Epoch):
        """Per-epoch ENU displacement predicted from the previous motion sample."""
        m, t_prev = self._prev_motion, self._prev_time
        if m is None or t_prev is None:
            return None
        dt = (epoch.time - t_prev) / 1000.0
        state = motion.KinematicState(np.zeros(3), np.asarray(m.velocity) * dt,
                                      np.asarray(m.acceleration) * dt**2, m.orientation)
        return motion.propagate_state(state)[0]

    def _smooth(self, batch: EstimateBatch, step):
        cfg = self.config
        w = cfg.window
        k = self._k
        tr = self._tracks
        rows = tr.rows([spec.key for spec in batch.specs])
        tr.pos[rows, k % (w + 1)] = batch.raw_position
        tr.epoch[rows, k % (w + 1)] = k
        epochs = np.arange(k - w, k + 1)
        ring = epochs % (w + 1)
        tracks = tr.pos[rows][:, ring]
        mask = tr.epoch[rows][:, ring] == epochs
        filled = np.zeros(len(rows), dtype=int)
        for j, e in enumerate(epochs.tolist()):
            v = self._verified.get(e)
            if v is not None:
                gap = ~mask[:, j]
                tracks[gap, j] = v
                mask[gap, j] = True
                filled += gap
        p_bar = None
        if step is not None and w >= 1:
            p_bar = np.where(mask[:, w - 1, None], tracks[:, w - 1] + step, np.nan)
        smoothed, fallback, constrained, residual = self.smoother.smooth(tracks, mask, p_bar, cfg.eps)
        sigma = batch.uncertainty
        if cfg.poly_uncertainty:
            sigma = np.maximum(sigma, residual)
        diags = tuple({**d, "smoothing_fallback": bool(f), "constrained": bool(c), "backfilled": int(n),
                       "poly_residual": r}
                      for d, f, c, n, r in zip(batch.diagnostics, fallback, constrained, filled, residual))
        return batch.replace(position=smoothed, uncertainty=sigma, diagnostics=diags)

    def _prune(self):
        horizon = self._k - self.config.window
        self._tracks.prune(horizon)
        for t in [t for t in self._verified if t < horizon]:
            del self._verified[t]

    # -- main loop --

    def process(self, epoch: Epoch) -> DetectionReport:
        cfg = self.config
        self._k += 1
        data = self._infra_data(epoch)
        batches = []
        for infra in sorted(data, key=lambda i: i.value):
            try:
                specs, index = self._plan(data[infra])
            except InsufficientDataError as exc:
                log.debug("epoch %d: %s", epoch.time, exc)
                continue
            batch, failed = evaluate_infrastructure(data[infra], specs, cfg.solver, index)
            for spec, reason in failed:
                log.debug("subset %s/%s dropped: %s", infra.value, ",".join(spec.members), reason)
            batches.append(batch)
        estimates = EstimateBatch.concatenate(batches)
        step = self._prediction_step(epoch)
        if cfg.smoothing and estimates:
            estimates = self._smooth(estimates, step)
        self._prev_motion, self._prev_time = epoch.motion, epoch.time
        report = self._fuse(epoch, estimates)
        if report.recovered is not None:
            self._verified[self._k] = np.asarray(report.recovered)
        self._prune()
        return report

    def _fuse(self, epoch, estimates) -> DetectionReport:
        cfg = self.config
        if not estimates:
            return DetectionReport(epoch.time, 0.0, False, None, markers=("no-data",))
        p_tilde = preliminary_fuse(estimates)
        if epoch.lbs_position is not None:
            p = epoch.lbs_position
            ref, ref_name = self.frame.geodetic_to_enu(p.latitude, p.longitude, p.altitude), "lbs"
        else:
            ref, ref_name = p_tilde, "fused"
        score = attack_likelihood(estimates, ref)
        ex = exclude_inconsistent(estimates, cfg.n_lambda)
        recovered = recover_position(estimates, ex.benign)
        benign_sets: dict[str, list[int]] = {}
        for spec, b in zip(estimates.specs, ex.benign):
            if b:
                benign_sets.setdefault(spec.infrastructure.value, []).append(spec.index)
        markers = ("single-estimate",) if ex.trivial else ()
        return DetectionReport(
            epoch.time, score, decide_alarm(score, cfg.lambda_f), p_tilde, ex.deviations,
            tuple(spec for spec, b in zip(estimates.specs, ex.benign) if not b), benign_sets,
            recovered, ex.iterations, ref_name, len(estimates), markers)

    def run(self, epochs: Iterable[Epoch]) -> list[DetectionReport]:
        return [self.process(e) for e in epochs]
