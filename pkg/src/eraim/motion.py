"""Kinematic propagation and motion-constrained local polynomial smoothing.

Body frame is right-forward-up (x right, y forward, z up). Yaw turns the
body counterclockwise about the local up axis, so a yaw of +90 degrees points
the forward axis west. Pitch turns about the body x axis and roll about the
body y axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_WINDOW = 15
DEFAULT_ORDER = 2
DEFAULT_DECAY = 0.3


def rotation_matrix(orientation) -> np.ndarray:
    """Body-to-local rotation ``R = R_roll @ R_pitch @ R_yaw``."""
    phi, theta, psi = (float(a) for a in orientation)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    r_roll = np.array([[cf, 0.0, sf], [0.0, 1.0, 0.0], [-sf, 0.0, cf]])
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]])
    r_yaw = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
    return r_roll @ r_pitch @ r_yaw


@dataclass(frozen=True)
class KinematicState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("position", "velocity", "acceleration", "orientation"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise InvalidArgumentError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)
        wrapped = np.angle(np.exp(1j * self.orientation))
        object.__setattr__(self, "orientation", np.where(wrapped == -np.pi, np.pi, wrapped))


def propagate_state(state: KinematicState):
    """One-epoch prediction ``(p + R v + R a / 2, v + a)``.

    Velocity and acceleration are body-frame values in per-epoch units.
    """
    R = rotation_matrix(state.orientation)
    p = state.position + R @ state.velocity + 0.5 * (R @ state.acceleration)
    return p, state.velocity + state.acceleration


@dataclass(frozen=True)
class PolyFit:
    """Local polynomial ``W`` in scaled time ``s = (t' - t) / window``."""

    coefficients: np.ndarray
    order: int = DEFAULT_ORDER
    window: int = DEFAULT_WINDOW
    decay: float = DEFAULT_DECAY
    constrained: bool = False
    fallback: bool = False

    def __post_init__(self):
        if self.order < 1 or self.window < self.order + 1:
            raise InvalidArgumentError("need order >= 1 and window >= order + 1")


def kernel(delta, decay=DEFAULT_DECAY, scale=1.0):
    """Gaussian weight ``exp(-decay * (delta / scale)^2)``; ``delta`` in epochs."""
    return np.exp(-decay * (np.asarray(delta, dtype=float) / scale) ** 2)


def _design(delta, order, window):
    s = -np.asarray(delta, dtype=float) / window
    return np.vander(s, order + 1, increasing=True)


def poly_objective(W, delta, positions, order=DEFAULT_ORDER, window=DEFAULT_WINDOW, decay=DEFAULT_DECAY,
                   kernel_scale=1.0):
    V = _design(delta, order, window)
    r = V @ np.asarray(W).T - positions
    return float(np.sum(kernel(delta, decay, kernel_scale) * np.sum(r**2, axis=1)))


def poly_gram(delta, order=DEFAULT_ORDER, window=DEFAULT_WINDOW, decay=DEFAULT_DECAY, kernel_scale=1.0):
    """Per-axis Hessian ``V^T K V`` of the smoothing objective (up to a factor 2)."""
    V = _design(delta, order, window)
    return V.T @ (kernel(delta, decay, kernel_scale)[:, None] * V)


def _project(v, p_bar, eps):
    d = v - p_bar
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    scale = np.where(n > eps, eps / np.where(n > 0, n, 1.0), 1.0)
    return p_bar + d * scale, (n > eps)[..., 0]


def fit_constrained_poly(delta, positions, p_bar=None, eps=np.inf, order=DEFAULT_ORDER,
                         window=DEFAULT_WINDOW, decay=DEFAULT_DECAY, kernel_scale=1.0):
    """Kernel-weighted polynomial fit with the value at ``t`` kept near ``p_bar``.

    Minimizes ``sum K(delta) |W s - p|^2`` subject to ``|W e0 - p_bar| <= eps``.
    The objective restricted to the value ``v = W e0`` is an isotropic
    quadratic around the unconstrained value ``v*``, so the constrained
    optimum is ``v*`` projected onto the ball; ``W`` then follows from the
    equality-constrained normal equations.

    Parameters
    ----------
    delta : array (n,)
        Epochs before the fit time, ``t - t'`` (0 for the current epoch).
    positions : array (n, 3)
    p_bar : array (3,), optional
        Motion-predicted position; ``None`` disables the constraint.

    Returns
    -------
    (PolyFit, smoothed position). With fewer than ``order + 1`` distinct
    points the fit falls back to the latest raw position with
    ``fallback=True``.
    """
    delta = np.asarray(delta, dtype=float)
    P = np.asarray(positions, dtype=float)
    if eps < 0:
        raise InvalidArgumentError("eps must be non-negative")
    if len(np.unique(delta)) < order + 1:
        latest = P[int(np.argmin(delta))]
        return PolyFit(np.c_[latest, np.zeros((3, order))], order, window, decay, fallback=True), latest.copy()
    V = _design(delta, order, window)
    k = kernel(delta, decay, kernel_scale)
    G = V.T @ (k[:, None] * V)
    W = np.linalg.solve(G, V.T @ (k[:, None] * P)).T
    v_star = W[:, 0]
    constrained = False
    if p_bar is not None:
        v, constrained = _project(v_star, np.asarray(p_bar, dtype=float), eps)
        if constrained:
            g = np.linalg.solve(G, np.eye(order + 1)[0])
            W = W + np.outer(v - v_star, g / g[0])
    return PolyFit(W, order, window, decay, bool(constrained)), W[:, 0].copy()


class Smoother:
    """Batched linear smoother over fixed-length windows with gaps.

    Window slot ``j`` holds epoch ``t - (window - j)``; the unconstrained
    value at ``t`` is a fixed linear combination of the available slots,
    cached per availability pattern.
    """

    def __init__(self, window=DEFAULT_WINDOW, order=DEFAULT_ORDER, decay=DEFAULT_DECAY, kernel_scale=1.0):
        if order < 1 or window < order:
            raise InvalidArgumentError("need order >= 1 and window >= order")
        self.window, self.order, self.decay, self.kernel_scale = window, order, decay, kernel_scale
        self.delta = np.arange(window, -1, -1, dtype=float)
        self._rows: dict[bytes, np.ndarray | None] = {}

    def _hat(self, mask):
        """Hat matrix mapping available slots to fitted values at every slot, plus kernel weights."""
        key = np.packbits(mask).tobytes()
        if key not in self._rows:
            if mask.sum() < self.order + 1:
                self._rows[key] = None
            else:
                d = self.delta[mask]
                V = _design(d, self.order, self.window)
                k = kernel(d, self.decay, self.kernel_scale)
                G = V.T @ (k[:, None] * V)
                n = len(self.delta)
                M = np.zeros((n, n))
                M[:, mask] = _design(self.delta, self.order, self.window) @ np.linalg.solve(G, V.T * k)
                kw = np.where(mask, kernel(self.delta, self.decay, self.kernel_scale), 0.0)
                self._rows[key] = (M, kw / kw.sum())
        return self._rows[key]

    def smooth(self, tracks, mask, p_bar=None, eps=np.inf):
        """Smoothed current positions for ``S`` tracks.

        Parameters
        ----------
        tracks : array (S, window + 1, 3); unavailable slots are ignored
        mask : bool array (S, window + 1)
        p_bar : array (S, 3) with NaN rows meaning unconstrained

        Returns
        -------
        (positions (S, 3), fallback (S,), constrained (S,), residual (S, 3))
        where ``residual`` is the kernel-weighted RMS of the unconstrained
        fit residuals per axis (0 for fallbacks).
        """
        S, n = mask.shape[0], len(self.delta)
        mask = np.asarray(mask, dtype=bool)
        keys = np.packbits(mask, axis=1)
        uniq, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        M = np.zeros((len(uniq), n, n))
        KW = np.zeros((len(uniq), n))
        fb = np.zeros(len(uniq), dtype=bool)
        for u, i in enumerate(first):
            hat = self._hat(mask[i])
            if hat is None:
                fb[u] = True
            else:
                M[u], KW[u] = hat
        inv = np.ravel(inv)
        fallback = fb[inv]
        P = np.where(mask[..., None], tracks, 0.0)
        fitted = M[inv] @ P
        out = fitted[:, -1].copy()
        residual = np.sqrt((KW[inv][:, None, :] @ (fitted - P) ** 2)[:, 0])
        for s in np.flatnonzero(fallback):
            last = np.flatnonzero(mask[s])
            out[s] = tracks[s, last[-1]] if last.size else np.nan
        constrained = np.zeros(S, dtype=bool)
        if p_bar is not None:
            has = ~np.isnan(p_bar).any(axis=1) & ~fallback
            if has.any():
                out[has], constrained[has] = _project(out[has], p_bar[has], eps)
        return out, fallback, constrained, residual


def backfill_track(times, positions, verified: Mapping[int, np.ndarray]):
    """Fill missing track points from verified fused positions.

    ``positions`` rows that are NaN count as gaps. Returns ``(positions,
    available, filled)``; gaps without a verified fill stay unavailable.
    """
    P = np.array(positions, dtype=float)
    available = ~np.isnan(P).any(axis=1)
    filled = np.zeros(len(P), dtype=bool)
    for i, t in enumerate(times):
        if not available[i] and t in verified:
            P[i] = verified[t]
            available[i] = filled[i] = True
    return P, available, filled
