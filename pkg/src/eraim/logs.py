"""CSV ingestion and serialization for measurement logs and the anchor database.

Schemas (UTF-8, header row mandatory)::

    gnss.csv     time_ms,sat_id,signal_type,pseudorange_m,pr_sigma_m,sat_x_ecef_m,sat_y_ecef_m,sat_z_ecef_m
    network.csv  time_ms,infra,anchor_id,rssi_dbm_or_rtt_m,value_kind,freq_hz
    anchors.csv  infra,id,lat_deg,lon_deg,alt_m,metadata_json
    motion.csv   time_ms,vx,vy,vz,ax,ay,az,roll,pitch,yaw
    lbs.csv      time_ms,lat_deg,lon_deg,alt_m
    labels.csv   time_ms,attacked,infra,anchor_id
"""

from __future__ import annotations

import bisect
import csv
import json
from pathlib import Path

from .errors import FormatError, RowError
from .geodesy import ecef_to_geodetic
from .model import (Anchor, AnchorRegistry, Epoch, GeoPoint, Infrastructure,
                    MotionSample, RangingMeasurement, ValueKind)

GNSS_HEADER = ["time_ms", "sat_id", "signal_type", "pseudorange_m", "pr_sigma_m",
               "sat_x_ecef_m", "sat_y_ecef_m", "sat_z_ecef_m"]
NETWORK_HEADER = ["time_ms", "infra", "anchor_id", "rssi_dbm_or_rtt_m", "value_kind", "freq_hz"]
ANCHOR_HEADER = ["infra", "id", "lat_deg", "lon_deg", "alt_m", "metadata_json"]
MOTION_HEADER = ["time_ms", "vx", "vy", "vz", "ax", "ay", "az", "roll", "pitch", "yaw"]
LBS_HEADER = ["time_ms", "lat_deg", "lon_deg", "alt_m"]
LABEL_HEADER = ["time_ms", "attacked", "infra", "anchor_id"]

# network logs carry no per-row uncertainty
DEFAULT_RSSI_SIGMA_DB = 4.0
DEFAULT_RTT_SIGMA_M = 15_000.0

EPOCH_LABEL = "*"


def fmt(x) -> str:
    """Shortest round-tripping text for a float; integers stay integers."""
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _rows(path, header):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise FormatError(f"{path}: header mismatch, expected {','.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RowError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, dict(zip(header, (c.strip() for c in row)))


def _parse(path, line, fn, *args):
    try:
        return fn(*args)
    except (ValueError, KeyError, TypeError) as exc:
        raise RowError(path, line, str(exc)) from exc


def _group(items):
    by_time: dict[int, list] = {}
    for t, item in items:
        by_time.setdefault(t, []).append(item)
    return by_time


def parse_gnss_log(path) -> list[Epoch]:
    """Read a GNSS pseudorange log into per-timestamp epoch fragments.

    Satellite positions travel inline as per-epoch anchors.
    """
    def row_to(r):
        t = int(r["time_ms"])
        ecef = (float(r["sat_x_ecef_m"]), float(r["sat_y_ecef_m"]), float(r["sat_z_ecef_m"]))
        lat, lon, alt = ecef_to_geodetic(ecef)
        anchor = Anchor(r["sat_id"], Infrastructure.GNSS, GeoPoint(float(lat), float(lon), float(alt)),
                        {"signal_type": r["signal_type"]}, ecef)
        meas = RangingMeasurement(t, r["sat_id"], Infrastructure.GNSS, float(r["pseudorange_m"]),
                                  ValueKind.PSEUDORANGE, float(r["pr_sigma_m"]))
        return t, (meas, anchor)

    items = [_parse(path, line, row_to, r) for line, r in _rows(path, GNSS_HEADER)]
    epochs = []
    for t, group in sorted(_group(items).items()):
        anchors = {a.id: a for _, a in group}
        if len(anchors) != len(group):
            raise FormatError(f"{path}: duplicate satellite at time {t}")
        epochs.append(Epoch(t, tuple(m for m, _ in group), anchors=anchors))
    return epochs


def parse_network_log(path, rssi_sigma_db=DEFAULT_RSSI_SIGMA_DB,
                      rtt_sigma_m=DEFAULT_RTT_SIGMA_M) -> list[Epoch]:
    """Read a terrestrial network log (RSSI scans and RTT distances)."""
    def row_to(r):
        t = int(r["time_ms"])
        infra = Infrastructure(r["infra"])
        if infra is Infrastructure.GNSS:
            raise ValueError("GNSS rows belong in the GNSS log")
        kind = ValueKind(r["value_kind"])
        expected = ValueKind.RTT_DISTANCE if infra is Infrastructure.GEOIP else ValueKind.RSSI
        if kind is not expected:
            raise ValueError(f"{infra.value} requires value_kind {expected.value}")
        sigma = rtt_sigma_m if kind is ValueKind.RTT_DISTANCE else rssi_sigma_db
        freq = float(r["freq_hz"]) if r["freq_hz"] else None
        return t, RangingMeasurement(t, r["anchor_id"], infra, float(r["rssi_dbm_or_rtt_m"]),
                                     kind, sigma, freq)

    items = [_parse(path, line, row_to, r) for line, r in _rows(path, NETWORK_HEADER)]
    return [Epoch(t, tuple(ms)) for t, ms in sorted(_group(items).items())]


def parse_motion_log(path) -> list[MotionSample]:
    def row_to(r):
        v = [float(r[k]) for k in MOTION_HEADER[1:]]
        return MotionSample(int(r["time_ms"]), tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]))

    out = [_parse(path, line, row_to, r) for line, r in _rows(path, MOTION_HEADER)]
    return sorted(out, key=lambda s: s.time)


def parse_lbs_log(path) -> list[tuple[int, GeoPoint]]:
    def row_to(r):
        return int(r["time_ms"]), GeoPoint(float(r["lat_deg"]), float(r["lon_deg"]), float(r["alt_m"]))

    return sorted((_parse(path, line, row_to, r) for line, r in _rows(path, LBS_HEADER)),
                  key=lambda x: x[0])


def parse_labels(path) -> list[tuple[int, bool, str, str]]:
    def row_to(r):
        attacked = r["attacked"].lower()
        if attacked not in ("0", "1", "true", "false"):
            raise ValueError(f"bad attacked flag {r['attacked']!r}")
        return int(r["time_ms"]), attacked in ("1", "true"), r["infra"], r["anchor_id"]

    return [_parse(path, line, row_to, r) for line, r in _rows(path, LABEL_HEADER)]


def load_anchor_db(path) -> AnchorRegistry:
    """Load the anchor database; duplicate (infrastructure, id) pairs are rejected."""
    def row_to(r):
        meta = json.loads(r["metadata_json"]) if r["metadata_json"] else {}
        if not isinstance(meta, dict):
            raise ValueError("metadata_json must be an object")
        return Anchor(r["id"], Infrastructure(r["infra"]),
                      GeoPoint(float(r["lat_deg"]), float(r["lon_deg"]), float(r["alt_m"])),
                      {str(k): str(v) for k, v in meta.items()})

    return AnchorRegistry(_parse(path, line, row_to, r) for line, r in _rows(path, ANCHOR_HEADER))


def _nearest(times, t):
    i = bisect.bisect_left(times, t)
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(times) and (best is None or abs(times[j] - t) < abs(times[best] - t)):
            best = j
    return best


def assemble_epochs(gnss=(), network=(), motion=(), lbs=(), window_ms=500) -> list[Epoch]:
    """Merge per-source fragments onto one epoch timeline.

    GNSS, motion and location-service timestamps define the timeline; each
    network scan joins the nearest timeline epoch within ``window_ms`` and
    becomes an epoch of its own otherwise.
    """
    primary = sorted({e.time for e in gnss} | {m.time for m in motion} | {t for t, _ in lbs})
    timeline: list[int] = []
    for t in primary:
        if not timeline or t - timeline[-1] > window_ms:
            timeline.append(t)
    meas = {t: [] for t in timeline}
    anchors = {t: {} for t in timeline}

    def slot(t):
        j = _nearest(timeline, t)
        if j is not None and abs(timeline[j] - t) <= window_ms:
            return timeline[j]
        bisect.insort(timeline, t)
        meas[t], anchors[t] = [], {}
        return t

    for frag in gnss:
        s = slot(frag.time)
        meas[s].extend(frag.measurements)
        anchors[s].update(frag.anchors)
    for frag in network:
        s = slot(frag.time)
        meas[s].extend(frag.measurements)
    motions = {}
    for m in motion:
        motions.setdefault(slot(m.time), m)
    positions = {}
    for t, p in lbs:
        positions.setdefault(slot(t), p)
    return [Epoch(t, tuple(meas[t]), motions.get(t), positions.get(t), anchors[t]) for t in timeline]


def _write(path, header, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_gnss_log(epochs, path):
    rows = []
    for e in epochs:
        for m in e.measurements:
            if m.infrastructure is not Infrastructure.GNSS:
                continue
            a = e.anchors[m.anchor_id]
            rows.append([m.time, m.anchor_id, a.metadata.get("signal_type", "L1"), fmt(m.value),
                         fmt(m.sigma), *(fmt(c) for c in a.ecef)])
    _write(path, GNSS_HEADER, rows)


def write_network_log(epochs, path):
    rows = []
    for e in epochs:
        for m in e.measurements:
            if m.infrastructure is Infrastructure.GNSS:
                continue
            rows.append([m.time, m.infrastructure.value, m.anchor_id, fmt(m.value),
                         m.value_kind.value, fmt(m.frequency_hz)])
    _write(path, NETWORK_HEADER, rows)


def write_motion_log(samples, path):
    _write(path, MOTION_HEADER, [[s.time, *(fmt(v) for v in (*s.velocity, *s.acceleration, *s.orientation))]
                                 for s in samples])


def write_lbs_log(points, path):
    _write(path, LBS_HEADER, [[t, fmt(p.latitude), fmt(p.longitude), fmt(p.altitude)] for t, p in points])


def write_anchor_db(anchors, path):
    rows = [[a.infrastructure.value, a.id, fmt(a.position.latitude), fmt(a.position.longitude),
             fmt(a.position.altitude), json.dumps(dict(a.metadata), sort_keys=True)] for a in anchors]
    _write(path, ANCHOR_HEADER, rows)


def write_labels(rows, path):
    _write(path, LABEL_HEADER, [[t, int(bool(att)), infra, aid] for t, att, infra, aid in rows])
