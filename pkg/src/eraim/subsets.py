"""Anchor subsets: enumeration, sampling strategies and per-subset solving."""

from __future__ import annotations

import itertools
import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import solvers
from .errors import InsufficientDataError, InvalidArgumentError
from .fusion import batch_uncertainty, subset_uncertainty
from .model import Infrastructure

log = logging.getLogger(__name__)

DEFAULT_CAP = 512
DEFAULT_DOP_THRESHOLD = 3.0
# above this many candidate subsets, sample members directly instead of enumerating
ENUMERATION_LIMIT = 1 << 16


def min_subset_size(infrastructure) -> int:
    """Fewest anchors that fix a position: four pseudoranges, else three."""
    return 4 if Infrastructure(infrastructure) is Infrastructure.GNSS else 3


@dataclass(frozen=True)
class SubsetSpec:
    infrastructure: Infrastructure
    members: tuple[str, ...]
    index: int = 0

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise InvalidArgumentError("subset members must be unique")
        if len(self.members) < min_subset_size(self.infrastructure):
            raise InvalidArgumentError(
                f"{self.infrastructure.value} subset needs at least {min_subset_size(self.infrastructure)} members")

    @property
    def key(self):
        return (self.infrastructure.value, self.members)


@dataclass(frozen=True)
class SubsetEstimate:
    """Position and per-axis uncertainty from one subset.

    ``position`` starts as the raw solver output and is replaced by the
    motion-filtered value; ``raw_position`` keeps the former.
    """

    spec: SubsetSpec
    position: np.ndarray
    uncertainty: np.ndarray
    diagnostics: Mapping[str, object] = field(default_factory=dict)
    raw_position: np.ndarray | None = None

    def __post_init__(self):
        if np.any(~(np.asarray(self.uncertainty) > 0)):
            raise InvalidArgumentError("uncertainty components must be positive")

    def with_position(self, position, **diag) -> "SubsetEstimate":
        return replace(self, position=np.asarray(position, dtype=float),
                       diagnostics={**self.diagnostics, **diag})


def subset_count(n_anchors: int, n_min: int) -> int:
    return sum(math.comb(n_anchors, i) for i in range(n_min, n_anchors + 1))


def enumerate_subsets(anchor_ids: Sequence[str], infrastructure) -> list[SubsetSpec]:
    """All subsets of size ``N_min..J``, indexed in lexicographic member order."""
    infra = Infrastructure(infrastructure)
    ids = sorted(set(anchor_ids))
    n_min = min_subset_size(infra)
    if len(ids) < n_min:
        raise InsufficientDataError(f"{infra.value}: {len(ids)} anchors, need {n_min}")
    combos = sorted(c for k in range(n_min, len(ids) + 1) for c in itertools.combinations(ids, k))
    return [SubsetSpec(infra, c, i) for i, c in enumerate(combos)]


def subset_seed(seed: int, infrastructure, anchor_ids: Sequence[str]) -> np.random.SeedSequence:
    """Seed tied to an anchor set so that a stable set keeps its sample."""
    key = Infrastructure(infrastructure).value + "|" + "|".join(sorted(anchor_ids))
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(key.encode())])


def sample_uniform(subsets: Sequence[SubsetSpec], rate: float, seed) -> list[SubsetSpec]:
    """Keep each subset independently with probability ``rate``.

    One uniform draw per subset, so for a fixed seed the sample at a lower
    rate is contained in the sample at a higher one. The first subset is
    kept if the draw would leave nothing.
    """
    if not rate > 0:
        raise InvalidArgumentError("sampling rate must be positive")
    subsets = list(subsets)
    if rate >= 1.0 or not subsets:
        return subsets
    u = np.random.default_rng(seed).random(len(subsets))
    keep = [s for s, x in zip(subsets, u) if x < rate]
    return keep or subsets[:1]


def _draw_subsets(ids, infra, rate, total, rng):
    """Direct random draw of about ``rate * total`` distinct subsets."""
    n_min = min_subset_size(infra)
    sizes = np.arange(n_min, len(ids) + 1)
    weights = np.array([math.comb(len(ids), int(k)) for k in sizes], dtype=float)
    want = max(1, int(rng.binomial(total, rate)))
    seen = set()
    while len(seen) < want:
        k = int(rng.choice(sizes, p=weights / weights.sum()))
        seen.add(tuple(sorted(rng.choice(ids, size=k, replace=False).tolist())))
    return [SubsetSpec(infra, c) for c in sorted(seen)]


def plan_subsets(anchor_ids, infrastructure, rate=1.0, seed=0, cap=DEFAULT_CAP) -> list[SubsetSpec]:
    """Subsets to evaluate for one infrastructure.

    Full enumeration thinned by ``rate``; when the enumeration exceeds
    ``cap`` the rate is further scaled by ``cap / total``. ``cap=None``
    disables the bound.
    """
    infra = Infrastructure(infrastructure)
    ids = sorted(set(anchor_ids))
    n_min = min_subset_size(infra)
    if len(ids) < n_min:
        raise InsufficientDataError(f"{infra.value}: {len(ids)} anchors, need {n_min}")
    total = subset_count(len(ids), n_min)
    eff = min(rate, 1.0)
    if cap is not None and total > cap:
        eff *= cap / total
    ss = subset_seed(seed, infra, ids)
    if total > ENUMERATION_LIMIT:
        specs = _draw_subsets(ids, infra, eff, total, np.random.default_rng(ss))
    else:
        specs = sample_uniform(enumerate_subsets(ids, infra), eff, ss)
    return [replace(s, index=i) for i, s in enumerate(specs)]


def _spatial_dops(sat_pos, position, combos):
    A = solvers.gnss_design_matrix(sat_pos, position)
    sub = A[np.asarray(combos)]
    s = np.linalg.svd(sub, compute_uv=False)
    out = np.full(len(combos), np.inf)
    ok = s[:, -1] > solvers.RANK_TOL * s[:, 0]
    if ok.any():
        Q = np.linalg.inv(np.einsum("ski,skj->sij", sub[ok], sub[ok]))
        out[ok] = np.sqrt(np.trace(Q[:, :3, :3], axis1=1, axis2=2))
    return out


def greedy_dop_expansion(sat_ids, sat_pos, threshold=DEFAULT_DOP_THRESHOLD, position=(0.0, 0.0, 0.0)):
    """Partition satellites into successive good-geometry subsets.

    Each round seeds with the 4-subset of lowest spatial DOP among the
    remaining satellites, then repeatedly adds the satellite giving the lowest
    DOP while the threshold holds. Rounds continue until fewer than four
    satellites remain or no 4-subset meets the threshold.

    Returns
    -------
    (specs, best_effort) : list of SubsetSpec, bool
        ``best_effort`` is set when not even the first round met the
        threshold; the single best 4-subset is then returned.
    """
    ids = list(sat_ids)
    pos = np.asarray(sat_pos, dtype=float)
    if len(ids) < 4:
        raise InsufficientDataError("greedy DOP expansion needs at least 4 satellites")
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    remaining = list(order)
    specs = []
    while len(remaining) >= 4:
        combos = list(itertools.combinations(remaining, 4))
        dops = _spatial_dops(pos, position, combos)
        best = int(np.argmin(dops))
        if not dops[best] <= threshold:
            if not specs:
                members = tuple(sorted(ids[i] for i in combos[best]))
                return [SubsetSpec(Infrastructure.GNSS, members, 0)], True
            break
        current = list(combos[best])
        while True:
            cand = [i for i in remaining if i not in current]
            if not cand:
                break
            d = _spatial_dops(pos, position, [current + [c] for c in cand])
            j = int(np.argmin(d))
            if not d[j] <= threshold:
                break
            current.append(cand[j])
        specs.append(SubsetSpec(Infrastructure.GNSS, tuple(sorted(ids[i] for i in current)), len(specs)))
        remaining = [i for i in remaining if i not in current]
    return specs, False


# -- evaluation -------------------------------------------------------------------

@dataclass(frozen=True)
class InfraData:
    """One epoch's measurements of one infrastructure, in the local frame.

    ``values`` are pseudoranges (m), RSSI (dBm) or RTT distances (m).
    """

    infrastructure: Infrastructure
    ids: tuple[str, ...]
    positions: np.ndarray
    values: np.ndarray
    sigmas: np.ndarray

    def index(self, members) -> np.ndarray:
        lookup = {a: i for i, a in enumerate(self.ids)}
        return np.array([lookup[m] for m in members])

    @property
    def rssi(self) -> dict[str, float]:
        return dict(zip(self.ids, self.values.tolist()))


@dataclass(frozen=True)
class SolverConfig:
    """Per-infrastructure positioning choices."""

    path_loss: Mapping[Infrastructure, solvers.PathLossModel] = field(default_factory=dict)
    terrestrial_method: str = "trilateration"
    fingerprint_dbs: Mapping[Infrastructure, solvers.FingerprintDb] = field(default_factory=dict)
    fingerprint_k: int = 3
    fingerprint_d_min: float = 1.0
    geoip_grid: int = 100
    sigma_min: float = 1.0
    reference_up: float = 0.0
    gnss_x0: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.terrestrial_method not in ("trilateration", "wls", "fingerprint"):
            raise InvalidArgumentError(f"unknown terrestrial method {self.terrestrial_method!r}")

    def model(self, infra) -> solvers.PathLossModel:
        return self.path_loss.get(infra, solvers.PathLossModel())


@dataclass(frozen=True)
class EstimateBatch:
    """Stacked subset estimates, row ``i`` belonging to ``specs[i]``.

    Indexing and iteration yield :class:`SubsetEstimate` views.
    """

    specs: tuple[SubsetSpec, ...]
    position: np.ndarray
    uncertainty: np.ndarray
    raw_position: np.ndarray
    diagnostics: tuple[Mapping[str, object], ...]

    def __len__(self):
        return len(self.specs)

    def __getitem__(self, i) -> SubsetEstimate:
        return SubsetEstimate(self.specs[i], self.position[i], self.uncertainty[i], self.diagnostics[i],
                              self.raw_position[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def groups(self) -> list[Infrastructure]:
        return [s.infrastructure for s in self.specs]

    def replace(self, **changes) -> "EstimateBatch":
        return replace(self, **changes)

    @classmethod
    def empty(cls) -> "EstimateBatch":
        return cls((), np.zeros((0, 3)), np.ones((0, 3)), np.zeros((0, 3)), ())

    @classmethod
    def from_estimates(cls, estimates: Sequence[SubsetEstimate]) -> "EstimateBatch":
        if not estimates:
            return cls.empty()
        pos = np.array([e.position for e in estimates], dtype=float)
        raw = np.array([e.position if e.raw_position is None else e.raw_position for e in estimates], dtype=float)
        return cls(tuple(e.spec for e in estimates), pos,
                   np.array([e.uncertainty for e in estimates], dtype=float), raw,
                   tuple(e.diagnostics for e in estimates))

    @classmethod
    def concatenate(cls, batches: Sequence["EstimateBatch"]) -> "EstimateBatch":
        batches = [b for b in batches if len(b)]
        if not batches:
            return cls.empty()
        return cls(sum((b.specs for b in batches), ()),
                   np.concatenate([b.position for b in batches]),
                   np.concatenate([b.uncertainty for b in batches]),
                   np.concatenate([b.raw_position for b in batches]),
                   sum((b.diagnostics for b in batches), ()))


def padded_index(ids: Sequence[str], specs: Sequence[SubsetSpec]):
    """Member indices into ``ids`` padded to the largest subset.

    Padding repeats the first member and is switched off in the mask, so
    subsets of every size can share one solver call.
    """
    lookup = {a: i for i, a in enumerate(ids)}
    k = max(len(s.members) for s in specs)
    idx = np.zeros((len(specs), k), dtype=int)
    mask = np.zeros((len(specs), k), dtype=bool)
    for r, s in enumerate(specs):
        row = [lookup[m] for m in s.members]
        idx[r] = row + [row[0]] * (k - len(row))
        mask[r, :len(row)] = True
    return idx, mask


def _batch(specs, pos, kind, columns, diags, cfg, keep=None):
    """Assemble an :class:`EstimateBatch`, dropping rows where ``keep`` is False."""
    if keep is not None:
        sel = np.flatnonzero(keep)
        specs = [specs[i] for i in sel]
        pos = pos[sel]
        columns = {k: v[sel] for k, v in columns.items()}
        diags = [diags[i] for i in sel]
    if not specs:
        return EstimateBatch.empty()
    pos = np.asarray(pos, dtype=float)
    if pos.shape[1] == 2:
        up = columns.get("up")
        pos = np.c_[pos, np.full(len(pos), cfg.reference_up) if up is None else up]
    sigma = batch_uncertainty(kind, columns, cfg.sigma_min)
    return EstimateBatch(tuple(specs), pos, sigma, pos.copy(), tuple(diags))


def _solve_gnss(data, specs, idx, mask, cfg, failed):
    res = solvers.solve_gnss_batch(data.positions[idx], data.values[idx], cfg.gnss_x0, mask=mask)
    st = res["status"]
    for s in np.flatnonzero(st != solvers.OK):
        failed.append((specs[s], "singular" if st[s] == solvers.SINGULAR else "not-converged"))
    range_sigma = np.sum(data.sigmas[idx] * mask, axis=1) / mask.sum(axis=1)
    diags = [{"kind": "gnss", "dop": res["dop"][s], "clock_bias": float(res["clock_bias"][s]),
              "residuals": res["residuals"][s][mask[s]], "range_sigma": float(range_sigma[s])}
             for s in range(len(specs))]
    cols = {"dop": res["dop"], "range_sigma": range_sigma}
    return _batch(specs, res["position"], "gnss", cols, diags, cfg, st == solvers.OK)


def _horizontal_ranges(data, idx, cfg):
    model = cfg.model(data.infrastructure)
    rho = solvers.rssi_to_range(data.values[idx], model)
    sig = solvers.range_sigma_from_rssi(rho, data.sigmas[idx], model)
    du = data.positions[idx][..., 2] - cfg.reference_up
    rho_h = np.sqrt(np.maximum(rho**2 - du**2, 1e-6))
    return rho, rho_h, sig


def _solve_rssi(data, specs, idx, mask, cfg, failed):
    anchors = data.positions[idx][..., :2]
    rho, rho_h, sig = _horizontal_ranges(data, idx, cfg)
    size = mask.sum(axis=1)
    if cfg.terrestrial_method == "wls":
        pos, res = solvers.weighted_ls_batch(anchors, rho_h, mask)
        degenerate = solvers._collinear(anchors, mask)
        mean_range = np.sum(rho_h * mask, axis=1) / size
        diags = [{"kind": "wls", "residual": float(res[s]), "size": int(size[s]),
                  "mean_range": float(mean_range[s]), "degenerate": bool(degenerate[s])}
                 for s in range(len(specs))]
        cols = {"residual": res, "size": size, "mean_range": mean_range}
        return _batch(specs, pos, "wls", cols, diags, cfg)
    res = solvers.solve_trilateration_batch(anchors, rho_h, sig, mask=mask)
    geometry = np.sqrt(np.clip(np.diagonal(res["cov"], axis1=1, axis2=2), 0.0, None))
    ok = (res["status"] == solvers.OK) & np.isfinite(geometry).all(axis=1)
    for s in np.flatnonzero(~ok):
        failed.append((specs[s], "not-converged" if res["status"][s] != solvers.OK else "singular"))
    diags = [{"kind": "trilateration", "degenerate": bool(res["degenerate"][s]),
              "residual": float(res["residual"][s]), "geometry_sigma": geometry[s],
              "range_rms": float(res["range_rms"][s])}
             for s in range(len(specs))]
    cols = {"geometry_sigma": geometry, "range_rms": res["range_rms"]}
    return _batch(specs, res["position"], "trilateration", cols, diags, cfg, ok)


def _solve_fingerprint(data, specs, cfg, failed):
    db = cfg.fingerprint_dbs.get(data.infrastructure)
    out = []
    for spec in specs:
        if db is None:
            failed.append((spec, "no-fingerprint-db"))
            continue
        try:
            pos, top = solvers.fingerprint_position(data.rssi, spec.members, db, cfg.fingerprint_k,
                                                    cfg.fingerprint_d_min)
        except InsufficientDataError as exc:
            failed.append((spec, str(exc)))
            continue
        diag = {"kind": "fingerprint", "scores": top, "size": len(spec.members), "d_min": cfg.fingerprint_d_min}
        p = np.asarray(pos, dtype=float)
        p = p[:3] if len(p) >= 3 else np.r_[p, cfg.reference_up]
        out.append(SubsetEstimate(spec, p, subset_uncertainty(diag, spec.infrastructure, cfg.sigma_min),
                                  diag, p.copy()))
    return EstimateBatch.from_estimates(out)


def _solve_geoip(data, specs, idx, mask, cfg, failed):
    d = data.values[idx]
    res = solvers.solve_geoip_batch(data.positions[idx], d, cfg.geoip_grid, mask)
    size = mask.sum(axis=1)
    mean_range = np.sum(d * mask, axis=1) / size
    diags = [{"kind": "wls", "residual": float(res["residual"][s]), "size": int(size[s]),
              "mean_range": float(mean_range[s]), "degenerate": bool(res["fallback"][s]),
              "fallback": bool(res["fallback"][s]), "resolution": float(res["resolution"][s]),
              "samples": int(res["samples"][s])}
             for s in range(len(specs))]
    cols = {"residual": res["residual"], "size": size, "mean_range": mean_range}
    return _batch(specs, res["position"], "wls", cols, diags, cfg)


def evaluate_infrastructure(data: InfraData, specs: Sequence[SubsetSpec], config: SolverConfig = SolverConfig(),
                            index=None):
    """Solve subsets of one infrastructure, all present in ``data``.

    ``index`` is an optional precomputed :func:`padded_index` for ``specs``.
    Returns ``(EstimateBatch, failures)``.
    """
    failed: list[tuple[SubsetSpec, str]] = []
    if not specs:
        return EstimateBatch.empty(), failed
    infra = data.infrastructure
    if infra.terrestrial and config.terrestrial_method == "fingerprint":
        return _solve_fingerprint(data, specs, config, failed), failed
    idx, mask = padded_index(data.ids, specs) if index is None else index
    if infra is Infrastructure.GEOIP:
        batch = _solve_geoip(data, specs, idx, mask, config, failed)
    elif infra is Infrastructure.GNSS:
        batch = _solve_gnss(data, specs, idx, mask, config, failed)
    else:
        batch = _solve_rssi(data, specs, idx, mask, config, failed)
    return batch, failed


def evaluate_subsets(data: Mapping[Infrastructure, InfraData], specs: Sequence[SubsetSpec],
                     config: SolverConfig = SolverConfig()):
    """Solve every subset with its infrastructure's positioning method.

    Subsets of one infrastructure are solved as one padded batch. Failures
    never abort the epoch; they come back as ``(spec, reason)`` pairs.

    Returns
    -------
    (EstimateBatch, failures), the batch ordered like ``specs``.
    """
    failed: list[tuple[SubsetSpec, str]] = []
    groups: dict[Infrastructure, list[SubsetSpec]] = {}
    for spec in specs:
        d = data.get(spec.infrastructure)
        if d is None or any(m not in d.ids for m in spec.members):
            failed.append((spec, "missing-measurement"))
            continue
        groups.setdefault(spec.infrastructure, []).append(spec)
    batches = []
    for infra, group in groups.items():
        b, f = evaluate_infrastructure(data[infra], group, config)
        batches.append(b)
        failed.extend(f)
    batch = EstimateBatch.concatenate(batches)
    order = {id(s): i for i, s in enumerate(specs)}
    perm = sorted(range(len(batch)), key=lambda i: order[id(batch.specs[i])])
    if perm != list(range(len(batch))):
        batch = EstimateBatch(tuple(batch.specs[i] for i in perm), batch.position[perm], batch.uncertainty[perm],
                              batch.raw_position[perm], tuple(batch.diagnostics[i] for i in perm))
    for spec, reason in failed:
        log.debug("subset %s/%s dropped: %s", spec.infrastructure.value, ",".join(spec.members), reason)
    return batch, failed
