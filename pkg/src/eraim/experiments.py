"""Seeded scenario ensembles and the runs that compare detectors on them."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import baselines, metrics
from .model import Infrastructure
from .pipeline import Detector, DetectorConfig
from .simulate import AttackKind, Scenario, ScenarioConfig, build_scenario
from .subsets import SolverConfig

FP_LEVELS = (0.05, 0.10, 0.15, 0.20, 0.25)
SAMPLING_RATES = (0.25, 0.5, 0.75, 1.0)


def coordinated_ensemble(n=20, base_seed=0, n_epochs=120, attack_start=60, offset=150.0,
                         max_wifi=3) -> list[ScenarioConfig]:
    """Coordinated spoofing scenarios with a random attacker reach per seed.

    Each scenario draws how many satellites (1 to all in view) and Wi-Fi APs
    (1 to ``max_wifi``) the attacker controls and a bearing for the
    ``offset`` displacement; the platform position follows the spoof.
    """
    out = []
    for i in range(n):
        seed = base_seed + i
        rng = np.random.default_rng(np.random.SeedSequence([seed, 150]))
        cfg = ScenarioConfig(seed=seed, n_epochs=n_epochs)
        n_gnss = int(rng.integers(1, cfg.n_satellites + 1))
        n_wifi = int(rng.integers(1, max_wifi + 1))
        b = rng.uniform(0, 2 * np.pi)
        attack = dict(kind=AttackKind.COORDINATED, start=attack_start, end=n_epochs,
                      affected={"GNSS": n_gnss, "WIFI": n_wifi},
                      offset=(offset * np.sin(b), offset * np.cos(b), 0.0))
        out.append(replace(cfg, attacks=[attack]))
    return out


def drift_ensemble(n=3, base_seed=100, n_epochs=660, attack_start=60, terminal=150.0) -> list[ScenarioConfig]:
    """All-satellite gradual drift to ``terminal`` metres, platform following."""
    out = []
    for i in range(n):
        seed = base_seed + i
        rng = np.random.default_rng(np.random.SeedSequence([seed, 151]))
        attack = dict(kind=AttackKind.GRADUAL_DRIFT, start=attack_start, end=n_epochs, affected={"GNSS": "all"},
                      terminal_offset=terminal, drift_bearing_deg=float(rng.uniform(0, 360)))
        out.append(ScenarioConfig(seed=seed, n_epochs=n_epochs, attacks=[attack]))
    return out


def solver_config(cfg: ScenarioConfig) -> SolverConfig:
    """Solver settings matching the scenario's path-loss models."""
    return SolverConfig(path_loss={Infrastructure(k): cfg.path_loss_model(Infrastructure(k)) for k in cfg.path_loss})


@dataclass
class Run:
    """Per-epoch outputs of every detector on one scenario."""

    scenario: Scenario
    attacked: np.ndarray
    scores: np.ndarray
    recovered: np.ndarray
    fused: np.ndarray
    baseline_scores: dict = field(default_factory=dict)


def run_scenario(cfg: ScenarioConfig, detector: DetectorConfig | None = None, with_baselines=False) -> Run:
    sc = build_scenario(cfg)
    epochs = sc.epochs()
    det_cfg = replace(detector or DetectorConfig(), solver=solver_config(cfg))
    reports = Detector(cfg.origin_point, sc.registry(), det_cfg).run(epochs)
    nan = np.full(3, np.nan)
    run = Run(sc, sc.attacked_epochs.copy(), np.array([r.score for r in reports]),
              np.array([nan if r.recovered is None else r.recovered for r in reports], dtype=float),
              np.array([nan if r.preliminary_fused is None else r.preliminary_fused for r in reports], dtype=float))
    if with_baselines:
        run.baseline_scores["distance"] = baselines.distance_scores(epochs, sc.registry(), cfg.origin_point,
                                                                    det_cfg.solver)
        run.baseline_scores["kalman"] = baselines.kalman_scores(epochs, cfg.origin_point)
    return run


def pooled_tp(runs: Sequence[Run], target_fp, which=None) -> float:
    """Detection rate over all runs at one threshold calibrated on their pooled benign fixes."""
    scores = np.concatenate([r.scores if which is None else r.baseline_scores[which] for r in runs])
    attacked = np.concatenate([r.attacked for r in runs])
    return metrics.tp_at_fp(scores, attacked, target_fp)


def pooled_mae(runs: Sequence[Run], which: str) -> float:
    """Horizontal MAE over attacked epochs of ``recovered``, ``fused`` or ``lbs`` positions."""
    errs = []
    for r in runs:
        pos = r.scenario.lbs if which == "lbs" else getattr(r, which)
        errs.append(metrics.recovery_errors(pos, r.scenario.truth, r.attacked))
    return float(np.concatenate(errs).mean())


def first_alarm_before_end(run: Run, threshold) -> bool:
    """Whether the detector alarms inside the attack window before its last epoch."""
    idx = np.flatnonzero(run.attacked)
    hits = idx[run.scores[idx] > threshold]
    return bool(hits.size) and hits[0] < idx[-1]
