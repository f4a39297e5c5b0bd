"""Reference detectors: GNSS-vs-network distance and a constant-velocity Kalman filter."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import solvers
from .errors import InvalidArgumentError
from .geodesy import LocalFrame
from .model import AnchorRegistry, Epoch, GeoPoint, Infrastructure
from .motion import rotation_matrix
from .subsets import SolverConfig


def _frame(origin: GeoPoint) -> LocalFrame:
    return LocalFrame(origin.latitude, origin.longitude, origin.altitude)


def gnss_position(epoch: Epoch, frame: LocalFrame, x0=(0.0, 0.0, 0.0)):
    """All-in-view pseudorange solution in the local frame, or ``None``."""
    ms = [m for m in epoch.measurements if m.infrastructure is Infrastructure.GNSS and m.anchor_id in epoch.anchors]
    if len(ms) < 4:
        return None
    sats = frame.ecef_to_enu(np.array([epoch.anchors[m.anchor_id].ecef for m in ms]))
    res = solvers.solve_gnss_batch(sats[None], np.array([m.value for m in ms])[None], x0)
    return res["position"][0] if res["status"][0] == solvers.OK else None


def network_position(epoch: Epoch, registry: AnchorRegistry, frame: LocalFrame,
                     config: SolverConfig = SolverConfig()):
    """Horizontal position from every RSSI anchor heard, or ``None``."""
    pos, rho, sig = [], [], []
    for m in epoch.measurements:
        if m.infrastructure not in (Infrastructure.WIFI, Infrastructure.CELL, Infrastructure.BLUETOOTH):
            continue
        a = registry.get(m.infrastructure, m.anchor_id)
        if a is None:
            continue
        p = frame.geodetic_to_enu(a.position.latitude, a.position.longitude, a.position.altitude)
        model = config.model(m.infrastructure)
        d = float(solvers.rssi_to_range(m.value, model))
        pos.append(p[:2])
        rho.append(np.sqrt(max(d**2 - (p[2] - config.reference_up) ** 2, 1e-6)))
        sig.append(float(solvers.range_sigma_from_rssi(d, m.sigma, model)))
    if len(pos) < 3:
        return None
    if config.terrestrial_method == "wls":
        return solvers.solve_weighted_ls(np.array(pos), np.array(rho)).position
    out = solvers.solve_trilateration_batch(np.array(pos)[None], np.array(rho)[None], np.array(sig)[None])
    return out["position"][0]


def distance_scores(epochs: Sequence[Epoch], registry: AnchorRegistry, origin: GeoPoint,
                    config: SolverConfig = SolverConfig()) -> np.ndarray:
    """Horizontal distance between the provided position and the all-in-view GNSS fix.

    The provided position is the platform (LBS) position when the epoch
    carries one and the network position otherwise; epochs missing either
    side score 0.
    """
    frame = _frame(origin)
    out = np.zeros(len(epochs))
    for i, e in enumerate(epochs):
        g = gnss_position(e, frame)
        if g is None:
            continue
        if e.lbs_position is not None:
            p = e.lbs_position
            n = frame.geodetic_to_enu(p.latitude, p.longitude, p.altitude)
        else:
            n = network_position(e, registry, frame, config)
        if n is not None:
            out[i] = float(np.linalg.norm(g[:2] - n[:2]))
    return out


def baseline_distance_detector(epochs, registry, origin, threshold, config: SolverConfig = SolverConfig()):
    return distance_scores(epochs, registry, origin, config) > threshold


def kalman_scores(epochs: Sequence[Epoch], origin: GeoPoint, pos_sigma=5.0, accel_sigma=0.5) -> np.ndarray:
    """Innovation distance of GNSS fixes against a constant-velocity filter.

    State is horizontal position and velocity. The motion-sensor
    acceleration, rotated into the local frame, drives the prediction as a
    control input and the all-in-view GNSS position is the measurement. The
    score is the horizontal distance between the GNSS fix and the predicted
    position (0 before the filter starts or without a fix).
    """
    if pos_sigma <= 0 or accel_sigma <= 0:
        raise InvalidArgumentError("noise parameters must be positive")
    frame = _frame(origin)
    scores = np.zeros(len(epochs))
    x = P = t_prev = None
    H = np.eye(4)[:2]
    R = np.eye(2) * pos_sigma**2
    for i, e in enumerate(epochs):
        g = gnss_position(e, frame)
        if x is None:
            if g is not None:
                x = np.r_[g[:2], 0.0, 0.0]
                P = np.diag([pos_sigma**2] * 2 + [4.0] * 2)
                t_prev = e.time
            continue
        dt = (e.time - t_prev) / 1000.0
        t_prev = e.time
        F = np.eye(4)
        F[0, 2] = F[1, 3] = dt
        q = accel_sigma**2
        Q = np.zeros((4, 4))
        for a in (0, 1):
            Q[a, a] = q * dt**3 / 3
            Q[a, a + 2] = Q[a + 2, a] = q * dt**2 / 2
            Q[a + 2, a + 2] = q * dt
        x = F @ x
        if e.motion is not None:
            acc = (rotation_matrix(e.motion.orientation) @ np.asarray(e.motion.acceleration))[:2]
            x = x + np.r_[0.5 * acc * dt**2, acc * dt]
        P = F @ P @ F.T + Q
        if g is None:
            continue
        nu = g[:2] - x[:2]
        scores[i] = float(np.linalg.norm(nu))
        S = H @ P @ H.T + R
        K = np.linalg.solve(S, H @ P).T
        x = x + K @ nu
        P = (np.eye(4) - K @ H) @ P
    return scores


def baseline_kalman_detector(epochs, origin, threshold, **kw):
    return kalman_scores(epochs, origin, **kw) > threshold
