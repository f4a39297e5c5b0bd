"""Per-subset positioning: GNSS pseudorange LS, RSSI trilateration, the
weighted-LS geolocation estimate, GeoIP circle intersection and fingerprinting.

The batched solvers take stacked subsets of equal size, shape ``(S, k, ...)``,
so that an epoch's worth of subsets is solved in a handful of numpy calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (ConvergenceError, InsufficientDataError,
                     InvalidArgumentError, SingularGeometryError)

SPEED_OF_LIGHT = 299_792_458.0

GN_MAX_ITER = 20
GN_STEP_TOL = 1e-8
# ratio of smallest to largest singular value below which geometry is singular
RANK_TOL = 1e-9

OK, SINGULAR, NOT_CONVERGED = 0, 1, 2


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss: rssi = p0 - 10 n log10(d / d0)."""

    p0_dbm: float = -40.0
    d0_m: float = 1.0
    exponent: float = 2.7

    def __post_init__(self):
        if self.exponent <= 0 or self.d0_m <= 0:
            raise InvalidArgumentError("path-loss exponent and reference distance must be positive")


def rssi_to_range(rssi, model: PathLossModel = PathLossModel()):
    """Invert the log-distance model; strictly decreasing in ``rssi``."""
    return model.d0_m * 10.0 ** ((model.p0_dbm - np.asarray(rssi, dtype=float)) / (10.0 * model.exponent))


def range_to_rssi(distance, model: PathLossModel = PathLossModel()):
    return model.p0_dbm - 10.0 * model.exponent * np.log10(np.asarray(distance, dtype=float) / model.d0_m)


def range_sigma_from_rssi(distance, rssi_sigma_db, model: PathLossModel = PathLossModel()):
    """First-order distance uncertainty induced by RSSI noise."""
    return np.asarray(distance) * np.log(10.0) * rssi_sigma_db / (10.0 * model.exponent)


def rtt_to_distance(rtt_s, gamma=0.5):
    """Affine RTT-to-distance map ``c/2 * rtt * gamma``."""
    if not 0.0 < gamma <= 1.0:
        raise InvalidArgumentError("gamma must lie in (0, 1]")
    return SPEED_OF_LIGHT / 2.0 * np.asarray(rtt_s, dtype=float) * gamma


def distance_to_rtt(distance_m, gamma=0.5):
    return np.asarray(distance_m, dtype=float) / (SPEED_OF_LIGHT / 2.0 * gamma)


# -- GNSS ---------------------------------------------------------------------

@dataclass(frozen=True)
class GnssSolution:
    position: np.ndarray
    clock_bias: float
    residuals: np.ndarray
    dop: np.ndarray  # (sigma_x, sigma_y, sigma_z, sigma_t)
    iterations: int = 0

    @property
    def spatial_dop(self) -> float:
        return float(np.sqrt(np.sum(self.dop[:3] ** 2)))


def _design(sat, x):
    d = x[:, None, :3] - sat
    r = np.linalg.norm(d, axis=-1)
    A = np.concatenate([d / r[..., None], np.ones(r.shape + (1,))], axis=-1)
    return A, r


def _rank_ok(A):
    s = np.linalg.svd(A, compute_uv=False)
    return (A.shape[-2] >= A.shape[-1]) & (s[..., -1] > RANK_TOL * s[..., 0])


def solve_gnss_batch(sat_pos, pseudoranges, x0=None, max_iter=GN_MAX_ITER, tol=GN_STEP_TOL, mask=None):
    """Gauss-Newton pseudorange solutions for ``S`` stacked subsets.

    Solves ``rho_j = |p - a_j| + b`` for position ``p`` and clock bias ``b``
    in the frame of ``sat_pos``; iterations start at ``x0`` (default: the
    frame origin, i.e. near the receiver in a local ENU frame). ``mask``
    (S, k) marks real rows when subsets of different sizes share a padded
    batch.

    Returns
    -------
    dict with ``position`` (S, 3), ``clock_bias`` (S,), ``residuals`` (S, k),
    ``dop`` (S, 4), ``status`` (S,) and ``iterations`` (S,).
    """
    sat = np.asarray(sat_pos, dtype=float)
    pr = np.asarray(pseudoranges, dtype=float)
    S, k = pr.shape
    m = np.ones((S, k)) if mask is None else np.asarray(mask, dtype=float)
    x = np.zeros((S, 4))
    if x0 is not None:
        x[:, :3] = np.asarray(x0, dtype=float)
    status = np.zeros(S, dtype=int)
    iters = np.zeros(S, dtype=int)
    active = m.sum(axis=1) >= 4
    status[~active] = SINGULAR
    last_step = np.full(S, np.inf)
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        A, r = _design(sat[idx], x[idx])
        mi = m[idx]
        A *= mi[..., None]
        dy = (pr[idx] - (r + x[idx, 3:4])) * mi
        At = A.transpose(0, 2, 1)
        N = At @ A
        g = (At @ dy[..., None])[..., 0]
        ev = np.linalg.eigvalsh(N)
        # eigenvalues of A^T A are squared singular values of A; 1e-12 keeps clear of round-off
        ok = ev[:, 0] > 1e-12 * ev[:, -1]
        status[idx[~ok]] = SINGULAR
        active[idx[~ok]] = False
        idx, N, g = idx[ok], N[ok], g[ok]
        if idx.size == 0:
            break
        dx = np.linalg.solve(N, g[..., None])[..., 0]
        x[idx] += dx
        step = np.linalg.norm(dx, axis=1)
        iters[idx] = it
        # below 1e-5 m a non-shrinking step means the float noise floor is reached
        done = (step < tol) | ((step < 1e-5) & (step > 0.5 * last_step[idx]))
        last_step[idx] = step
        active[idx[done]] = False
    status[active] = NOT_CONVERGED

    A, r = _design(sat, x)
    A *= m[..., None]
    residuals = (pr - (r + x[:, 3:4])) * m
    dop = np.full((S, 4), np.inf)
    good = status == OK
    if good.any():
        Ag = A[good]
        Q = np.linalg.inv(Ag.transpose(0, 2, 1) @ Ag)
        dop[good] = np.sqrt(np.clip(np.diagonal(Q, axis1=1, axis2=2), 0.0, None))
    return {"position": x[:, :3], "clock_bias": x[:, 3], "residuals": residuals,
            "dop": dop, "status": status, "iterations": iters}


def solve_gnss_ls(sat_pos, pseudoranges, x0=None, max_iter=GN_MAX_ITER, tol=GN_STEP_TOL) -> GnssSolution:
    """Single-subset pseudorange solution; needs at least four satellites."""
    sat = np.asarray(sat_pos, dtype=float)
    pr = np.asarray(pseudoranges, dtype=float)
    if sat.ndim != 2 or sat.shape[1] != 3 or pr.shape != (sat.shape[0],):
        raise InvalidArgumentError("expected (k, 3) satellite positions and k pseudoranges")
    if len(pr) < 4:
        raise InsufficientDataError("GNSS positioning needs at least 4 pseudoranges")
    out = solve_gnss_batch(sat[None], pr[None], x0, max_iter, tol)
    if out["status"][0] == SINGULAR:
        raise SingularGeometryError("satellite geometry is rank deficient")
    if out["status"][0] == NOT_CONVERGED:
        raise ConvergenceError(f"no convergence after {max_iter} iterations")
    return GnssSolution(out["position"][0], float(out["clock_bias"][0]), out["residuals"][0],
                        out["dop"][0], int(out["iterations"][0]))


def compute_dop(design_matrix) -> np.ndarray:
    """DOP components ``sqrt(diag((A^T A)^-1))`` for a (k, 4) design matrix."""
    A = np.asarray(design_matrix, dtype=float)
    if A.ndim != 2 or A.shape[1] != 4:
        raise InvalidArgumentError("design matrix must be (k, 4)")
    if not _rank_ok(A):
        raise SingularGeometryError("A^T A is singular")
    Q = np.linalg.inv(A.T @ A)
    return np.sqrt(np.diag(Q))


def gnss_design_matrix(sat_pos, position) -> np.ndarray:
    """Unit line-of-sight rows with a clock column, evaluated at ``position``."""
    A, _ = _design(np.asarray(sat_pos, dtype=float)[None], np.r_[np.asarray(position, float), 0.0][None])
    return A[0]


def spatial_dop(dop) -> float:
    dop = np.asarray(dop)
    return float(np.sqrt(np.sum(dop[..., :3] ** 2, axis=-1)))


# -- terrestrial ----------------------------------------------------------------

@dataclass(frozen=True)
class LsSolution:
    position: np.ndarray
    residual: float
    degenerate: bool = False
    diagnostics: Mapping[str, object] = field(default_factory=dict)


def _collinear(anchors, mask=None):
    m = np.ones(anchors.shape[:-1]) if mask is None else np.asarray(mask, dtype=float)
    mean = (m[..., None] * anchors).sum(axis=-2, keepdims=True) / m.sum(axis=-1)[..., None, None]
    c = (anchors - mean) * m[..., None]
    s = np.linalg.svd(c, compute_uv=False)
    return s[..., 1] <= 1e-6 * np.maximum(s[..., 0], 1e-12)


def weighted_ls_objective(p, anchors, ranges):
    p = np.asarray(p, dtype=float)
    return float(np.sum((np.linalg.norm(p - anchors, axis=-1) / ranges) ** 2))


def solve_weighted_ls(anchors, ranges) -> LsSolution:
    """Minimize ``sum_j (|p - a_j| / rho_j)^2`` over ``p``.

    The objective is a convex quadratic in ``p`` whose minimizer is the
    centroid of the anchors weighted by ``1 / rho_j^2``. Collinear anchors
    are flagged, not rejected.
    """
    a = np.asarray(anchors, dtype=float)
    rho = np.asarray(ranges, dtype=float)
    if a.ndim != 2 or rho.shape != (a.shape[0],):
        raise InvalidArgumentError("expected (k, d) anchors and k ranges")
    if len(rho) < 3:
        raise InsufficientDataError("weighted LS needs at least 3 measurements")
    if np.any(rho <= 0):
        raise InvalidArgumentError("ranges must be positive")
    w = 1.0 / rho**2
    p = (w[:, None] * a).sum(axis=0) / w.sum()
    return LsSolution(p, weighted_ls_objective(p, a, rho), bool(_collinear(a)))


def weighted_ls_batch(anchors, ranges, mask=None):
    """Batched form of :func:`solve_weighted_ls`; returns (positions, residuals)."""
    a = np.asarray(anchors, dtype=float)
    w = 1.0 / np.asarray(ranges, dtype=float) ** 2
    if mask is not None:
        w = w * mask
    p = np.einsum("sk,skd->sd", w, a) / w.sum(axis=1)[:, None]
    res = np.sum(w * np.sum((p[:, None, :] - a) ** 2, axis=-1), axis=1)
    return p, res


def _range_cost(p, a, rho, w):
    r = np.linalg.norm(p[:, None, :] - a, axis=-1)
    return np.sum(w * (r - rho) ** 2, axis=1)


def solve_trilateration_batch(anchors, ranges, sigmas=None, max_iter=GN_MAX_ITER, tol=GN_STEP_TOL,
                              mask=None):
    """Planar range trilateration for ``S`` stacked subsets.

    Minimizes ``sum_j ((|p - a_j| - rho_j) / sigma_j)^2`` by damped Newton
    (Gauss-Newton where the Hessian is indefinite) with step halving, started from the exact linearized (difference-of-squares)
    solution. Collinear anchor sets are flagged degenerate and started from the
    weighted-LS centroid instead. With ``mask``, column 0 must be a real
    member of every subset.

    Returns a dict with ``position`` (S, 2), ``residual`` (relative residual
    ``sum ((r - rho) / rho)^2``), ``cov`` (S, 2, 2) of the position in units
    of ``sigma``, ``degenerate`` and ``status``.
    """
    a = np.asarray(anchors, dtype=float)
    rho = np.asarray(ranges, dtype=float)
    S, k = rho.shape
    m = np.ones((S, k)) if mask is None else np.asarray(mask, dtype=float)
    sig = np.ones_like(rho) if sigmas is None else np.maximum(np.asarray(sigmas, dtype=float), 1e-9)
    w = m / sig**2
    degenerate = _collinear(a, m)

    # linearized start: 2 (a_j - a_0) . p = |a_j|^2 - |a_0|^2 - rho_j^2 + rho_0^2
    H = 2.0 * (a[:, 1:] - a[:, :1]) * m[:, 1:, None]
    y = (np.sum(a[:, 1:] ** 2, -1) - np.sum(a[:, :1] ** 2, -1)
         - rho[:, 1:] ** 2 + rho[:, :1] ** 2) * m[:, 1:]
    wc = m / rho**2
    p = np.einsum("sk,skd->sd", wc, a) / wc.sum(axis=1)[:, None]
    good = ~degenerate
    if good.any():
        N = np.einsum("ski,skj->sij", H[good], H[good])
        g = np.einsum("ski,sk->si", H[good], y[good])
        p[good] = np.linalg.solve(N, g[..., None])[..., 0]

    status = np.zeros(S, dtype=int)
    active = np.ones(S, dtype=bool)
    c = _range_cost(p, a, rho, w)
    eye = np.eye(2)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ai, rhoi, wi, pi, ci = a[idx], rho[idx], w[idx], p[idx], c[idx]
        d = pi[:, None, :] - ai
        r = np.maximum(np.linalg.norm(d, axis=-1), 1e-12)
        J = d / r[..., None]
        Jt = J.transpose(0, 2, 1)
        N = (Jt * wi[:, None, :]) @ J
        # full Newton Hessian where positive definite: GN alone crawls on large residuals
        wc = wi * (r - rhoi) / r
        Hn = N + wc.sum(axis=1)[:, None, None] * eye - (Jt * wc[:, None, :]) @ J
        pd = (Hn[:, 0, 0] > 0) & (np.linalg.det(Hn) > 0)
        N = np.where(pd[:, None, None], Hn, N)
        N += 1e-12 * np.trace(N, axis1=1, axis2=2)[:, None, None] * eye
        g = (Jt @ (wi * (rhoi - r))[..., None])[..., 0]
        dx = np.linalg.solve(N, g[..., None])[..., 0]
        # step halving on the rows whose full step raised the cost
        t = np.ones(idx.size)
        cn = np.full(idx.size, np.inf)
        accept = np.zeros(idx.size, dtype=bool)
        todo = np.arange(idx.size)
        for _ in range(7):
            cn[todo] = _range_cost(pi[todo] + t[todo, None] * dx[todo], ai[todo], rhoi[todo], wi[todo])
            accept[todo] = cn[todo] <= ci[todo] * (1 + 1e-12) + 1e-300
            todo = todo[~accept[todo]]
            if todo.size == 0:
                break
            t[todo] *= 0.5
        sel = idx[accept]
        p[sel] = pi[accept] + t[accept, None] * dx[accept]
        c[sel] = cn[accept]
        step = t * np.linalg.norm(dx, axis=1)
        # a stalled cost means the noise floor of a large-residual fit
        stalled = ci - cn <= 1e-12 * ci
        active[idx[(step < tol) | ~accept | (accept & stalled)]] = False
    status[active] = NOT_CONVERGED

    d = p[:, None, :] - a
    r = np.maximum(np.linalg.norm(d, axis=-1), 1e-12)
    J = d / r[..., None]
    N = (J.transpose(0, 2, 1) * w[:, None, :]) @ J
    cov = np.full((S, 2, 2), np.inf)
    inv_ok = np.abs(np.linalg.det(N)) > 1e-18 * np.trace(N, axis1=1, axis2=2) ** 2
    if inv_ok.any():
        cov[inv_ok] = np.linalg.inv(N[inv_ok])
    residual = np.sum(m * ((r - rho) / rho) ** 2, axis=1)
    rms = np.sqrt(np.sum(m * (r - rho) ** 2, axis=1) / m.sum(axis=1))
    return {"position": p, "residual": residual, "cov": cov, "degenerate": degenerate,
            "status": status, "range_rms": rms}


def solve_trilateration(anchors, ranges, sigmas=None) -> LsSolution:
    a = np.asarray(anchors, dtype=float)
    rho = np.asarray(ranges, dtype=float)
    if len(rho) < 3:
        raise InsufficientDataError("trilateration needs at least 3 ranges")
    out = solve_trilateration_batch(a[None], rho[None], None if sigmas is None else np.asarray(sigmas)[None])
    return LsSolution(out["position"][0], float(out["residual"][0]), bool(out["degenerate"][0]),
                      {"cov": out["cov"][0], "status": int(out["status"][0])})


# -- GeoIP ----------------------------------------------------------------------

def geoip_intersection(anchors, radii, grid=200):
    """Grid points lying inside every circle; returns (points, resolution)."""
    a = np.asarray(anchors, dtype=float)[:, :2]
    r = np.asarray(radii, dtype=float)
    lo = np.max(a - r[:, None], axis=0)
    hi = np.min(a + r[:, None], axis=0)
    if np.any(lo >= hi):
        return np.empty((0, 2)), 0.0
    res = float(np.max(hi - lo)) / grid
    xs = np.arange(lo[0] + res / 2, hi[0], res)
    ys = np.arange(lo[1] + res / 2, hi[1], res)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    inside = np.ones(len(pts), dtype=bool)
    for c, rad in zip(a, r):
        inside &= np.sum((pts - c) ** 2, axis=1) <= rad**2
    return pts[inside], res


def solve_geoip(anchors, distances, grid=200) -> LsSolution:
    """Centroid of the intersection of circles centered on the RTT servers.

    The intersection is sampled on a regular grid of ``grid`` cells along its
    bounding box's longer side. An empty intersection falls back to the
    weighted-LS estimate and marks the solution degenerate.
    """
    a = np.asarray(anchors, dtype=float)
    d = np.asarray(distances, dtype=float)
    if len(d) < 3:
        raise InsufficientDataError("GeoIP positioning needs at least 3 RTT distances")
    pts, res = geoip_intersection(a, d, grid)
    if len(pts) == 0:
        fb = solve_weighted_ls(a[:, :2], d)
        return LsSolution(fb.position, fb.residual, True, {"fallback": True, "resolution": 0.0})
    p = pts.mean(axis=0)
    return LsSolution(p, weighted_ls_objective(p, a[:, :2], d), False,
                      {"fallback": False, "resolution": res, "samples": len(pts)})


def solve_geoip_batch(anchors, distances, grid=200, mask=None):
    """Batched :func:`solve_geoip` over ``S`` padded subsets.

    Returns a dict with ``position`` (S, 2), ``residual``, ``fallback``,
    ``resolution`` and ``samples``.
    """
    a = np.asarray(anchors, dtype=float)[..., :2]
    d = np.asarray(distances, dtype=float)
    S, k = d.shape
    m = np.ones((S, k), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    lo = np.max(np.where(m[..., None], a - d[..., None], -np.inf), axis=1)
    hi = np.min(np.where(m[..., None], a + d[..., None], np.inf), axis=1)
    empty = np.any(lo >= hi, axis=1)
    res = np.where(empty, 1.0, np.max(hi - lo, axis=1) / grid)
    c = np.arange(grid) + 0.5
    xs = lo[:, 0, None] + res[:, None] * c
    ys = lo[:, 1, None] + res[:, None] * c
    inside = (xs < hi[:, 0, None])[:, :, None] & (ys < hi[:, 1, None])[:, None, :]
    inside &= ~empty[:, None, None]
    for j in range(k):
        dx2 = (xs - a[:, j, 0, None]) ** 2
        dy2 = (ys - a[:, j, 1, None]) ** 2
        within = dx2[:, :, None] + dy2[:, None, :] <= (d[:, j] ** 2)[:, None, None]
        inside &= within | ~m[:, j, None, None]
    n = inside.sum(axis=(1, 2))
    safe = np.maximum(n, 1)
    p = np.stack([(inside.sum(axis=2) * xs).sum(axis=1) / safe,
                  (inside.sum(axis=1) * ys).sum(axis=1) / safe], axis=1)
    fallback = n == 0
    if fallback.any():
        p[fallback] = weighted_ls_batch(a[fallback], d[fallback], m[fallback])[0]
    residual = np.sum(m * np.sum((p[:, None, :] - a) ** 2, axis=-1) / d**2, axis=1)
    return {"position": p, "residual": residual, "fallback": fallback,
            "resolution": np.where(fallback, 0.0, res), "samples": n}


# -- fingerprinting ---------------------------------------------------------------

@dataclass(frozen=True)
class FingerprintEntry:
    rssi: Mapping[str, float]
    position: np.ndarray
    time: int = 0


class FingerprintDb:
    """Pre-surveyed RSSI vectors keyed by anchor id, each with a known position."""

    def __init__(self, entries: Sequence[FingerprintEntry]):
        entries = list(entries)
        for e in entries:
            if not e.rssi:
                raise InvalidArgumentError("fingerprint entry without RSSI")
            if not np.all(np.isfinite(e.position)):
                raise InvalidArgumentError("fingerprint position must be finite")
        self.entries = entries
        self.anchor_ids = sorted({k for e in entries for k in e.rssi})
        col = {a: i for i, a in enumerate(self.anchor_ids)}
        self.matrix = np.full((len(entries), len(self.anchor_ids)), np.nan)
        for i, e in enumerate(entries):
            for k, v in e.rssi.items():
                self.matrix[i, col[k]] = v
        pos = [np.asarray(e.position, dtype=float) for e in entries]
        self.positions = np.array(pos) if pos else np.zeros((0, 2))
        self._col = col

    def __len__(self):
        return len(self.entries)

    def scores(self, query: Mapping[str, float], subset: Sequence[str], d_min: float) -> np.ndarray:
        """Similarity of ``query`` restricted to ``subset`` against every entry.

        Anchors absent from an entry contribute nothing.
        """
        total = np.zeros(len(self.entries))
        for j in subset:
            if j not in query or j not in self._col:
                continue
            col = self.matrix[:, self._col[j]]
            term = 1.0 / np.maximum(np.abs(query[j] - col), d_min)
            total += np.where(np.isnan(col), 0.0, term)
        return total


def fingerprint_position(query, subset, db: FingerprintDb, K=3, d_min=1.0):
    """Top-``K`` similarity-weighted average of stored positions.

    Returns ``(position, top_scores)``; ties in score keep database order.
    """
    if K < 1 or d_min <= 0:
        raise InvalidArgumentError("need K >= 1 and d_min > 0")
    if len(db) == 0:
        raise InsufficientDataError("empty fingerprint database")
    s = db.scores(query, subset, d_min)
    order = np.argsort(-s, kind="stable")[:K]
    top = s[order]
    if top.sum() <= 0:
        raise InsufficientDataError("query shares no anchors with the database")
    pos = (top[:, None] * db.positions[order]).sum(axis=0) / top.sum()
    return pos, top
