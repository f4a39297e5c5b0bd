"""Synthetic scenarios: trajectory, anchors, noisy measurements and attacks.

Everything is generated natively in the local ENU frame of the scenario
origin and converted to WGS84/ECEF only when epochs or files are emitted.
Each measurement is a function of the *apparent* user position seen by its
anchor plus a stored noise realization; attacks move the apparent position
(or delete measurements) and reuse the same noise, so an attacked scenario
differs from its benign twin only where the schedule says so.
"""

from __future__ import annotations

import copy
import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import logs, solvers
from .errors import InvalidArgumentError
from .geodesy import WGS84_A, LocalFrame
from .model import (Anchor, AnchorRegistry, Epoch, GeoPoint, Infrastructure, MotionSample,
                    RangingMeasurement, ValueKind)

log = logging.getLogger(__name__)

ANCHOR_PREFIX = {Infrastructure.GNSS: "G", Infrastructure.WIFI: "AP", Infrastructure.CELL: "BS",
                 Infrastructure.BLUETOOTH: "BT", Infrastructure.GEOIP: "IP"}


class AttackKind(str, enum.Enum):
    NONE = "NONE"
    UNCOORDINATED = "UNCOORDINATED"
    COORDINATED = "COORDINATED"
    JAMMING = "JAMMING"
    GRADUAL_DRIFT = "GRADUAL_DRIFT"


@dataclass
class AttackSchedule:
    """One attack window over epochs ``[start, end)``.

    ``affected`` maps an infrastructure name to a count of anchors chosen at
    random, a list of anchor ids, or ``"all"``. ``offset`` (E, N, U metres)
    is the coordinated spoof displacement; a gradual drift ramps linearly
    along ``drift_bearing_deg`` (clockwise from north) to ``terminal_offset``
    at the last epoch of the window.
    """

    kind: AttackKind = AttackKind.NONE
    start: int = 0
    end: int | None = None
    affected: dict = field(default_factory=dict)
    offset: tuple = (150.0, 0.0, 0.0)
    terminal_offset: float = 150.0
    drift_bearing_deg: float = 90.0
    min_offset: float = 100.0
    max_offset: float = 500.0
    lbs: str | None = None  # "spoof", "gnss" or "truth"; default by kind

    def __post_init__(self):
        try:
            raw = self.kind.value if isinstance(self.kind, AttackKind) else str(self.kind)
            self.kind = AttackKind(raw.upper())
        except ValueError as exc:
            raise InvalidArgumentError(f"unknown attack kind {self.kind!r}") from exc
        self.offset = tuple(float(x) for x in self.offset)
        if self.end is not None and self.start >= self.end:
            raise InvalidArgumentError("attack start must precede end")
        if self.lbs not in (None, "spoof", "gnss", "truth"):
            raise InvalidArgumentError(f"unknown lbs mode {self.lbs!r}")

    @property
    def lbs_mode(self) -> str:
        if self.lbs:
            return self.lbs
        return {AttackKind.COORDINATED: "spoof", AttackKind.GRADUAL_DRIFT: "spoof",
                AttackKind.UNCOORDINATED: "gnss"}.get(self.kind, "truth")


@dataclass
class NoiseConfig:
    pr_sigma: float = 2.0
    clock_walk_sigma: float = 10.0
    rssi_sigma: dict = field(default_factory=lambda: {"WIFI": 4.0, "CELL": 6.0, "BLUETOOTH": 4.0})
    rtt_sigma_m: float = 15_000.0
    motion_sigma: float = 0.1
    heading_sigma: float = 0.01
    lbs_sigma: float = 3.0

    def scaled(self, k: float) -> "NoiseConfig":
        return NoiseConfig(self.pr_sigma * k, self.clock_walk_sigma, {a: s * k for a, s in self.rssi_sigma.items()},
                           self.rtt_sigma_m * k, self.motion_sigma * k, self.heading_sigma * k, self.lbs_sigma * k)


DEFAULT_PATH_LOSS = {"WIFI": (-40.0, 2.7), "CELL": (-20.0, 2.7), "BLUETOOTH": (-59.0, 2.0)}


@dataclass
class ScenarioConfig:
    origin: tuple = (59.4040, 17.9470, 30.0)
    n_epochs: int = 300
    cadence_ms: int = 1000
    start_ms: int = 1_700_000_000_000
    seed: int = 0
    speed: float = 1.4
    area: float = 120.0
    waypoints: list | None = None
    n_satellites: int = 10
    n_wifi: int = 12
    n_cells: int = 4
    n_bluetooth: int = 0
    n_geoip: int = 5
    path_loss: dict = field(default_factory=lambda: dict(DEFAULT_PATH_LOSS))
    gamma: float = 0.5
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    attacks: list = field(default_factory=list)

    def __post_init__(self):
        if isinstance(self.noise, dict):
            self.noise = NoiseConfig(**self.noise)
        self.attacks = [a if isinstance(a, AttackSchedule) else AttackSchedule(**a) for a in self.attacks]
        self.origin = tuple(float(x) for x in self.origin)
        self.path_loss = {k: tuple(v) for k, v in self.path_loss.items()}
        if self.n_epochs < 2 or self.cadence_ms <= 0:
            raise InvalidArgumentError("need at least 2 epochs and a positive cadence")
        if self.n_satellites < 0 or self.speed < 0 or self.area <= 0:
            raise InvalidArgumentError("invalid scenario geometry")
        for a in self.attacks:
            end = self.n_epochs if a.end is None else a.end
            if not 0 <= a.start < end <= self.n_epochs:
                raise InvalidArgumentError(f"attack window [{a.start}, {end}) outside scenario")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise InvalidArgumentError("config must be a JSON object")
        try:
            return cls.from_dict(d)
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        for a in d["attacks"]:
            a["kind"] = AttackKind(a["kind"]).value
        return d

    def path_loss_model(self, infra: Infrastructure) -> solvers.PathLossModel:
        p0, n = self.path_loss.get(infra.value, DEFAULT_PATH_LOSS.get(infra.value, (-40.0, 2.7)))
        return solvers.PathLossModel(p0, 1.0, n)

    @property
    def origin_point(self) -> GeoPoint:
        return GeoPoint(*self.origin)


@dataclass
class Scenario:
    """A generated scenario with per-anchor apparent positions and noise.

    ``apparent[infra]`` has shape (n_epochs, n_anchors, 3); ``present`` marks
    measurements that exist; ``noise[infra]`` holds the additive noise in
    measurement units.
    """

    config: ScenarioConfig
    times: np.ndarray
    truth: np.ndarray
    yaw: np.ndarray
    anchor_ids: dict
    anchor_enu: dict
    clock: np.ndarray
    noise: dict
    motion_noise: np.ndarray
    lbs: np.ndarray
    apparent: dict
    present: dict
    spoof: np.ndarray
    attacked_anchors: dict = field(default_factory=dict)  # epoch index -> set of (infra, id)
    attacked_epochs: np.ndarray | None = None

    @property
    def frame(self) -> LocalFrame:
        return LocalFrame(*self.config.origin)

    @property
    def n(self) -> int:
        return len(self.times)

    def copy(self) -> "Scenario":
        return copy.deepcopy(self)

    def registry(self) -> AnchorRegistry:
        frame = self.frame
        out = []
        for infra, ids in self.anchor_ids.items():
            if infra is Infrastructure.GNSS:
                continue
            lat, lon, alt = frame.enu_to_geodetic(self.anchor_enu[infra])
            for i, aid in enumerate(ids):
                out.append(Anchor(aid, infra, GeoPoint(float(lat[i]), float(lon[i]), float(alt[i])),
                                  {"name": aid}))
        return AnchorRegistry(out)

    def measurement_values(self, infra: Infrastructure) -> np.ndarray:
        """Measurement values (n, k) implied by the apparent positions."""
        cfg = self.config
        d = np.linalg.norm(self.apparent[infra] - self.anchor_enu[infra][None], axis=-1)
        if infra is Infrastructure.GNSS:
            return d + self.clock[:, None] + self.noise[infra]
        if infra is Infrastructure.GEOIP:
            dh = np.linalg.norm(self.apparent[infra][..., :2] - self.anchor_enu[infra][None, :, :2], axis=-1)
            rtt = solvers.distance_to_rtt(dh, cfg.gamma) + self.noise[infra]
            return solvers.rtt_to_distance(rtt, cfg.gamma)
        rssi = solvers.range_to_rssi(d, cfg.path_loss_model(infra)) + self.noise[infra]
        return np.minimum(rssi, 0.0)

    def motion_samples(self) -> list[MotionSample]:
        cfg = self.config
        dt = cfg.cadence_ms / 1000.0
        disp = np.diff(self.truth, axis=0, append=self.truth[-1:])
        disp[-1] = disp[-2]
        forward = np.linalg.norm(disp[:, :2], axis=1) / dt
        out = []
        for i, t in enumerate(self.times):
            v = (self.motion_noise[i, 0], forward[i] + self.motion_noise[i, 1], 0.0)
            out.append(MotionSample(int(t), v, (0.0, 0.0, 0.0), (0.0, 0.0, self.yaw[i] + self.motion_noise[i, 2])))
        return out

    def lbs_points(self) -> list[tuple[int, GeoPoint]]:
        lat, lon, alt = self.frame.enu_to_geodetic(self.lbs)
        return [(int(t), GeoPoint(float(a), float(b), float(c))) for t, a, b, c in zip(self.times, lat, lon, alt)]

    def epochs(self, with_lbs: bool = True) -> list[Epoch]:
        frame = self.frame
        values = {infra: self.measurement_values(infra) for infra in self.anchor_ids}
        sat_ecef = frame.enu_to_ecef(self.anchor_enu[Infrastructure.GNSS]) if Infrastructure.GNSS in self.anchor_ids else None
        sat_anchors = {}
        if sat_ecef is not None:
            lat, lon, alt = frame.enu_to_geodetic(self.anchor_enu[Infrastructure.GNSS])
            for i, sid in enumerate(self.anchor_ids[Infrastructure.GNSS]):
                sat_anchors[sid] = Anchor(sid, Infrastructure.GNSS, GeoPoint(float(lat[i]), float(lon[i]), float(alt[i])),
                                          {"signal_type": "L1"}, tuple(float(c) for c in sat_ecef[i]))
        motion = self.motion_samples()
        lbs = self.lbs_points() if with_lbs else [None] * self.n
        out = []
        for e, t in enumerate(self.times):
            t = int(t)
            meas, anchors = [], {}
            for infra, ids in self.anchor_ids.items():
                pres = self.present[infra][e]
                for i, aid in enumerate(ids):
                    if not pres[i]:
                        continue
                    v = float(values[infra][e, i])
                    if infra is Infrastructure.GNSS:
                        meas.append(RangingMeasurement(t, aid, infra, v, ValueKind.PSEUDORANGE, self.config.noise.pr_sigma))
                        anchors[aid] = sat_anchors[aid]
                    elif infra is Infrastructure.GEOIP:
                        meas.append(RangingMeasurement(t, aid, infra, v, ValueKind.RTT_DISTANCE, logs.DEFAULT_RTT_SIGMA_M))
                    else:
                        # the nominal sigma the network log implies, not the simulated one
                        meas.append(RangingMeasurement(t, aid, infra, v, ValueKind.RSSI, logs.DEFAULT_RSSI_SIGMA_DB))
            out.append(Epoch(t, tuple(meas), motion[e], lbs[e][1] if with_lbs else None, anchors))
        return out

    def labels(self) -> list[tuple[int, bool, str, str]]:
        rows = []
        attacked = self.attacked_epochs if self.attacked_epochs is not None else np.zeros(self.n, bool)
        for e, t in enumerate(self.times):
            rows.append((int(t), bool(attacked[e]), logs.EPOCH_LABEL, logs.EPOCH_LABEL))
            for infra, aid in sorted(self.attacked_anchors.get(e, ()), key=lambda x: (x[0].value, x[1])):
                rows.append((int(t), True, infra.value, aid))
        return rows


# -- generation ---------------------------------------------------------------------

def _streams(seed):
    names = ("geometry", "trajectory", "noise", "attack")
    return dict(zip(names, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(names)))))


def _trajectory(cfg: ScenarioConfig, rng):
    n, dt = cfg.n_epochs, cfg.cadence_ms / 1000.0
    half = cfg.area / 2.0
    if cfg.waypoints:
        wps = [np.asarray(w, dtype=float)[:2] for w in cfg.waypoints]
    else:
        wps = [rng.uniform(-half, half, 2)]
    pts = np.empty((n, 2))
    pos, target_i = wps[0].copy(), 1
    for i in range(n):
        pts[i] = pos
        budget = cfg.speed * dt
        while budget > 0:
            if target_i >= len(wps):
                if cfg.waypoints:
                    budget = 0
                    break
                wps.append(rng.uniform(-half, half, 2))
            d = wps[target_i] - pos
            dist = float(np.linalg.norm(d))
            if dist <= budget:
                pos, budget, target_i = wps[target_i].copy(), budget - dist, target_i + 1
            else:
                pos, budget = pos + d / dist * budget, 0.0
    disp = np.diff(pts, axis=0, append=pts[-1:])
    disp[-1] = disp[-2] if n > 1 else 0.0
    # yaw counterclockwise from north
    yaw = np.arctan2(-disp[:, 0], disp[:, 1])
    return np.c_[pts, np.zeros(n)], yaw


def _anchors(cfg: ScenarioConfig, rng):
    half = cfg.area / 2.0
    ids, enu = {}, {}

    def put(infra, pos):
        if len(pos):
            ids[infra] = tuple(f"{ANCHOR_PREFIX[infra]}{i:02d}" for i in range(len(pos)))
            enu[infra] = np.asarray(pos, dtype=float).reshape(-1, 3)

    k = cfg.n_satellites
    az = rng.uniform(0, 2 * np.pi, k)
    el = np.radians(rng.uniform(15, 85, k))
    r = rng.uniform(20.2e6, 25e6, k)
    put(Infrastructure.GNSS, np.c_[r * np.cos(el) * np.sin(az), r * np.cos(el) * np.cos(az), r * np.sin(el)])
    put(Infrastructure.WIFI, np.c_[rng.uniform(-half, half, (cfg.n_wifi, 2)), rng.uniform(2, 8, cfg.n_wifi)])
    put(Infrastructure.BLUETOOTH, np.c_[rng.uniform(-half, half, (cfg.n_bluetooth, 2)), rng.uniform(1, 3, cfg.n_bluetooth)])
    d = rng.uniform(300, 1500, cfg.n_cells)
    b = rng.uniform(0, 2 * np.pi, cfg.n_cells)
    put(Infrastructure.CELL, np.c_[d * np.sin(b), d * np.cos(b), rng.uniform(20, 40, cfg.n_cells)])
    d = rng.uniform(200e3, 2000e3, cfg.n_geoip)
    b = rng.uniform(0, 2 * np.pi, cfg.n_geoip)
    # servers sit near the ellipsoid, below the tangent plane
    put(Infrastructure.GEOIP, np.c_[d * np.sin(b), d * np.cos(b), -d**2 / (2 * WGS84_A)])
    return ids, enu


def generate_benign(cfg: ScenarioConfig) -> Scenario:
    """Benign scenario for ``cfg`` ignoring its attack list.

    Pseudoranges carry a random-walk receiver clock and Gaussian noise; RSSI
    follows the log-distance model plus Gaussian shadowing; GeoIP RTTs come
    from distance with Gaussian jitter.
    """
    rs = _streams(cfg.seed)
    ids, enu = _anchors(cfg, rs["geometry"])
    truth, yaw = _trajectory(cfg, rs["trajectory"])
    n = cfg.n_epochs
    nz = rs["noise"]
    noise_cfg = cfg.noise
    clock = np.cumsum(nz.normal(0, noise_cfg.clock_walk_sigma, n)) + nz.uniform(-1e3, 1e3)
    noise = {}
    for infra in ids:
        k = len(ids[infra])
        if infra is Infrastructure.GNSS:
            noise[infra] = nz.normal(0, noise_cfg.pr_sigma, (n, k))
        elif infra is Infrastructure.GEOIP:
            noise[infra] = solvers.distance_to_rtt(nz.normal(0, noise_cfg.rtt_sigma_m, (n, k)), cfg.gamma)
        else:
            noise[infra] = nz.normal(0, noise_cfg.rssi_sigma.get(infra.value, 4.0), (n, k))
    motion_noise = np.c_[nz.normal(0, noise_cfg.motion_sigma, (n, 2)), nz.normal(0, noise_cfg.heading_sigma, n)]
    lbs = truth + np.c_[nz.normal(0, noise_cfg.lbs_sigma, (n, 2)), np.zeros(n)]
    times = cfg.start_ms + cfg.cadence_ms * np.arange(n, dtype=np.int64)
    apparent = {infra: np.repeat(truth[:, None, :], len(ids[infra]), axis=1) for infra in ids}
    present = {infra: np.ones((n, len(ids[infra])), dtype=bool) for infra in ids}
    sc = Scenario(cfg, times, truth, yaw, ids, enu, clock, noise, motion_noise, lbs, apparent, present,
                  np.full((n, 3), np.nan), {}, np.zeros(n, dtype=bool))
    far = np.linalg.norm(truth[:, :2], axis=1).max()
    if far > cfg.area:
        log.warning("trajectory leaves the anchor area (%.0f m from origin)", far)
    return sc


# -- attacks ------------------------------------------------------------------------

def _window(sc: Scenario, sched: AttackSchedule):
    end = sc.n if sched.end is None else sched.end
    return np.arange(sched.start, end)


def _affected(sc: Scenario, sched: AttackSchedule, rng) -> dict:
    out = {}
    for name, spec in sched.affected.items():
        infra = Infrastructure(name)
        ids = sc.anchor_ids.get(infra, ())
        if spec == "all":
            chosen = list(ids)
        elif isinstance(spec, int):
            if not 0 <= spec <= len(ids):
                raise InvalidArgumentError(f"cannot affect {spec} of {len(ids)} {name} anchors")
            chosen = sorted(rng.choice(ids, size=spec, replace=False).tolist()) if spec else []
        else:
            missing = set(spec) - set(ids)
            if missing:
                raise InvalidArgumentError(f"unknown {name} anchors {sorted(missing)}")
            chosen = sorted(spec)
        if chosen:
            out[infra] = [ids.index(a) for a in chosen]
    return out


def _mark(sc: Scenario, epochs, affected):
    sc.attacked_epochs[epochs] = True
    for e in epochs:
        s = sc.attacked_anchors.setdefault(int(e), set())
        for infra, idx in affected.items():
            s.update((infra, sc.anchor_ids[infra][i]) for i in idx)


def _attack_rng(sc: Scenario, sched: AttackSchedule):
    key = [sc.config.seed, sched.start, list(AttackKind).index(sched.kind)]
    return np.random.default_rng(np.random.SeedSequence(key))


def _all_in_view_gnss(sc: Scenario, epochs) -> np.ndarray:
    out = np.empty((len(epochs), 3))
    values = sc.measurement_values(Infrastructure.GNSS)
    sats = sc.anchor_enu[Infrastructure.GNSS]
    for r, e in enumerate(epochs):
        pres = sc.present[Infrastructure.GNSS][e]
        if pres.sum() < 4:
            out[r] = sc.lbs[e - 1] if e > 0 else sc.truth[e]
            continue
        res = solvers.solve_gnss_batch(sats[pres][None], values[e, pres][None], sc.truth[e])
        out[r] = res["position"][0]
    return out


def _spoof_follow(sc, sched, epochs, spoof, affected):
    for infra, idx in affected.items():
        sc.apparent[infra][np.ix_(epochs, idx)] = spoof[:, None, :]
    sc.spoof[epochs] = spoof
    if sched.lbs_mode == "spoof":
        sc.lbs[epochs] = spoof + (sc.lbs[epochs] - sc.truth[epochs])
    _mark(sc, epochs, affected)


def inject_coordinated(sc: Scenario, sched: AttackSchedule, spoof=None) -> Scenario:
    """Affected anchors act consistently with one spoofed trajectory.

    ``spoof`` defaults to the truth displaced by ``sched.offset``; the
    platform position follows the spoof unless ``sched.lbs`` says otherwise.
    """
    out = sc.copy()
    epochs = _window(out, sched)
    affected = _affected(out, sched, _attack_rng(out, sched))
    if spoof is None:
        spoof = out.truth[epochs] + np.asarray(sched.offset)
    _spoof_follow(out, sched, epochs, np.asarray(spoof, dtype=float).reshape(len(epochs), 3), affected)
    return out


def drift_profile(n: int, terminal: float) -> np.ndarray:
    """Linear ramp from 0 at the first epoch to ``terminal`` at the last."""
    return np.linspace(0.0, terminal, n) if n > 1 else np.zeros(n)


def inject_gradual_drift(sc: Scenario, sched: AttackSchedule) -> Scenario:
    out = sc.copy()
    epochs = _window(out, sched)
    b = math.radians(sched.drift_bearing_deg)
    direction = np.array([math.sin(b), math.cos(b), 0.0])
    spoof = out.truth[epochs] + drift_profile(len(epochs), sched.terminal_offset)[:, None] * direction
    affected = _affected(out, sched, _attack_rng(out, sched))
    _spoof_follow(out, sched, epochs, spoof, affected)
    return out


def inject_uncoordinated(sc: Scenario, sched: AttackSchedule) -> Scenario:
    """Each affected anchor is consistent with its own random spoof point.

    Offsets are drawn with horizontal magnitude in ``[min_offset,
    max_offset]`` and stay fixed relative to the truth over the window.
    """
    out = sc.copy()
    epochs = _window(out, sched)
    rng = _attack_rng(out, sched)
    affected = _affected(out, sched, rng)
    for infra, idx in affected.items():
        for i in idx:
            mag = rng.uniform(sched.min_offset, sched.max_offset)
            ang = rng.uniform(0, 2 * np.pi)
            off = np.array([mag * np.sin(ang), mag * np.cos(ang), 0.0])
            out.apparent[infra][epochs, i] = out.truth[epochs] + off
    _mark(out, epochs, affected)
    if sched.lbs_mode == "gnss" and Infrastructure.GNSS in out.anchor_ids:
        out.lbs[epochs] = _all_in_view_gnss(out, epochs)
    return out


def inject_jamming(sc: Scenario, sched: AttackSchedule) -> Scenario:
    """Remove affected measurements over the window."""
    out = sc.copy()
    epochs = _window(out, sched)
    affected = _affected(out, sched, _attack_rng(out, sched))
    for infra, idx in affected.items():
        out.present[infra][np.ix_(epochs, idx)] = False
    _mark(out, epochs, affected)
    return out


INJECTORS = {AttackKind.COORDINATED: inject_coordinated, AttackKind.UNCOORDINATED: inject_uncoordinated,
             AttackKind.JAMMING: inject_jamming, AttackKind.GRADUAL_DRIFT: inject_gradual_drift}


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Benign generation followed by every configured attack in order."""
    sc = generate_benign(cfg)
    for sched in cfg.attacks:
        if sched.kind is not AttackKind.NONE:
            sc = INJECTORS[sched.kind](sc, sched)
    return sc


def write_dataset(sc: Scenario, out_dir) -> list[Path]:
    """Write the scenario's logs, anchor database, labels and config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    epochs = sc.epochs()
    paths = {name: out / f"{name}.csv" for name in ("gnss", "network", "motion", "labels", "anchors", "lbs", "truth")}
    logs.write_gnss_log(epochs, paths["gnss"])
    logs.write_network_log(epochs, paths["network"])
    logs.write_motion_log([e.motion for e in epochs], paths["motion"])
    logs.write_labels(sc.labels(), paths["labels"])
    logs.write_anchor_db(sc.registry(), paths["anchors"])
    logs.write_lbs_log([(e.time, e.lbs_position) for e in epochs], paths["lbs"])
    lat, lon, alt = sc.frame.enu_to_geodetic(sc.truth)
    logs.write_lbs_log([(int(t), GeoPoint(float(a), float(b), float(c)))
                        for t, a, b, c in zip(sc.times, lat, lon, alt)], paths["truth"])
    cfg_path = out / "scenario.json"
    cfg_path.write_text(json.dumps(sc.config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [*paths.values(), cfg_path]


@dataclass
class Dataset:
    epochs: list
    registry: AnchorRegistry
    origin: GeoPoint
    labels: list | None = None
    truth: list | None = None
    config: ScenarioConfig | None = None


def load_dataset(directory) -> Dataset:
    """Read a dataset directory written by :func:`write_dataset`."""
    d = Path(directory)
    cfg = ScenarioConfig.from_json(d / "scenario.json") if (d / "scenario.json").exists() else None
    gnss = logs.parse_gnss_log(d / "gnss.csv") if (d / "gnss.csv").exists() else []
    net = logs.parse_network_log(d / "network.csv") if (d / "network.csv").exists() else []
    mot = logs.parse_motion_log(d / "motion.csv") if (d / "motion.csv").exists() else []
    lbs = logs.parse_lbs_log(d / "lbs.csv") if (d / "lbs.csv").exists() else []
    epochs = logs.assemble_epochs(gnss, net, mot, lbs)
    registry = logs.load_anchor_db(d / "anchors.csv")
    labels = logs.parse_labels(d / "labels.csv") if (d / "labels.csv").exists() else None
    truth = logs.parse_lbs_log(d / "truth.csv") if (d / "truth.csv").exists() else None
    origin = cfg.origin_point if cfg else (truth[0][1] if truth else GeoPoint(0.0, 0.0, 0.0))
    return Dataset(epochs, registry, origin, labels, truth, cfg)
