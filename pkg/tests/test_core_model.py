import math

import numpy as np
import pytest
from geographiclib.geodesic import Geodesic
from hypothesis import given
from hypothesis import strategies as st

from eraim import logs
from eraim.errors import FormatError, InvalidArgumentError, RowError
from eraim.model import (Anchor, AnchorRegistry, EnuPoint, Epoch, GeoPoint, Infrastructure, MotionSample,
                         RangingMeasurement, ValueKind, enu_to_wgs84, wgs84_to_enu)

ORIGIN = GeoPoint(59.4040, 17.9470, 30.0)


def test_origin_maps_to_zero():
    e = wgs84_to_enu(ORIGIN, ORIGIN)
    assert np.allclose(e.as_array(), 0.0, atol=1e-9)


def test_enu_against_geodesic_oracle():
    # independent route: ellipsoidal geodesic distance and azimuth
    p = GeoPoint(59.4050, 17.9490, 30.0)
    g = Geodesic.WGS84.Inverse(ORIGIN.latitude, ORIGIN.longitude, p.latitude, p.longitude)
    az = math.radians(g["azi1"])
    east, north = g["s12"] * math.sin(az), g["s12"] * math.cos(az)
    e = wgs84_to_enu(p, ORIGIN)
    assert abs(e.east - east) < 1e-3
    assert abs(e.north - north) < 1e-3


@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(-100, 500))
def test_enu_round_trip(e, n, u):
    if math.hypot(e, n) > 1e4:
        return
    p = enu_to_wgs84(EnuPoint(e, n, u), ORIGIN)
    back = wgs84_to_enu(p, ORIGIN).as_array()
    assert np.linalg.norm(back - [e, n, u]) < 1e-6


def test_non_finite_rejected():
    with pytest.raises(InvalidArgumentError):
        GeoPoint(float("nan"), 0.0)
    with pytest.raises(InvalidArgumentError):
        EnuPoint(0.0, float("inf"))


def test_measurement_validation():
    with pytest.raises(InvalidArgumentError):
        RangingMeasurement(0, "a", Infrastructure.WIFI, 5.0, ValueKind.RSSI)
    with pytest.raises(InvalidArgumentError):
        RangingMeasurement(0, "a", Infrastructure.GNSS, -1.0, ValueKind.PSEUDORANGE)
    m = RangingMeasurement(0, "a", Infrastructure.WIFI, -40.0, ValueKind.RSSI)
    assert m.value == -40.0


def test_motion_angles_wrapped():
    m = MotionSample(0, (1, 0, 0), orientation=(0.0, 0.0, 3 * math.pi))
    assert -math.pi < m.orientation[2] <= math.pi
    assert math.isclose(abs(m.orientation[2]), math.pi)


# -- log parsing ------------------------------------------------------------------------

def _write(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


def _sat_row(t, i):
    return [t, f"G{i:02d}", "L1CA", 2.1e7 + i, 2.0, 1.5e7 + i * 1e5, 1.2e7, 1.8e7 - i * 1e5]


def test_gnss_one_timestamp(tmp_path):
    p = _write(tmp_path / "g.csv", logs.GNSS_HEADER, [_sat_row(1000, i) for i in range(4)])
    epochs = logs.parse_gnss_log(p)
    assert len(epochs) == 1
    assert len(epochs[0].measurements) == 4
    assert set(epochs[0].anchors) == {"G00", "G01", "G02", "G03"}


def test_gnss_two_timestamps(tmp_path):
    rows = [_sat_row(1000, i) for i in range(4)] + [_sat_row(2000, i) for i in range(4)]
    epochs = logs.parse_gnss_log(_write(tmp_path / "g.csv", logs.GNSS_HEADER, rows))
    assert [e.time for e in epochs] == [1000, 2000]


def test_gnss_empty_file(tmp_path):
    assert logs.parse_gnss_log(_write(tmp_path / "g.csv", logs.GNSS_HEADER, [])) == []


def test_gnss_bad_row_has_line_number(tmp_path):
    rows = [_sat_row(1000, 0), [1000, "G01", "L1CA", "oops", 2.0, 1, 2, 3]]
    with pytest.raises(RowError) as exc:
        logs.parse_gnss_log(_write(tmp_path / "g.csv", logs.GNSS_HEADER, rows))
    assert exc.value.line == 3


def test_header_mismatch(tmp_path):
    with pytest.raises(FormatError):
        logs.parse_gnss_log(_write(tmp_path / "g.csv", ["time_ms", "x"], []))


def test_network_rows(tmp_path):
    rows = [[1000, "WIFI", "ap1", -40, "RSSI", 2.4e9], [1000, "CELL", "c1", -70, "RSSI", ""]]
    epochs = logs.parse_network_log(_write(tmp_path / "n.csv", logs.NETWORK_HEADER, rows))
    assert len(epochs) == 1
    groups = epochs[0].by_infrastructure()
    assert groups[Infrastructure.WIFI][0].value == -40.0
    assert set(groups) == {Infrastructure.WIFI, Infrastructure.CELL}


def test_network_positive_rssi_rejected(tmp_path):
    with pytest.raises(RowError):
        logs.parse_network_log(_write(tmp_path / "n.csv", logs.NETWORK_HEADER,
                                      [[1000, "WIFI", "ap1", 5, "RSSI", ""]]))


def test_anchor_db_lookup(tmp_path):
    rows = [["WIFI", f"ap{i}", 59.404 + i * 1e-4, 17.947, 3.0, ""] for i in range(3)]
    rows += [["CELL", f"c{i}", 59.41, 17.95 + i * 1e-3, 30.0, '{"band": "B3"}'] for i in range(2)]
    reg = logs.load_anchor_db(_write(tmp_path / "a.csv", logs.ANCHOR_HEADER, rows))
    assert len(reg) == 5
    assert reg[Infrastructure.WIFI, "ap2"].position.latitude == pytest.approx(59.4042)
    assert reg[Infrastructure.CELL, "c1"].metadata == {"band": "B3"}


def test_anchor_db_duplicate(tmp_path):
    rows = [["WIFI", "ap", 59.4, 17.9, 3.0, ""]] * 2
    with pytest.raises(FormatError):
        logs.load_anchor_db(_write(tmp_path / "a.csv", logs.ANCHOR_HEADER, rows))


def test_anchor_db_missing_altitude(tmp_path):
    header = [h for h in logs.ANCHOR_HEADER if h != "alt_m"]
    with pytest.raises(FormatError):
        logs.load_anchor_db(_write(tmp_path / "a.csv", header, [["WIFI", "ap", 59.4, 17.9, ""]]))


def test_anchor_db_large(tmp_path, rng):
    lat = 59.4 + rng.uniform(0, 0.01, 1000)
    rows = [["WIFI", f"ap{i}", lat[i], 17.9, 2.0, ""] for i in range(1000)]
    reg = logs.load_anchor_db(_write(tmp_path / "a.csv", logs.ANCHOR_HEADER, rows))
    assert all((Infrastructure.WIFI, f"ap{i}") in reg for i in range(1000))


def test_log_round_trip(tmp_path, rng):
    sats = {f"G{i}": Anchor(f"G{i}", Infrastructure.GNSS, GeoPoint(0, 0, 0),
                            {"signal_type": "L1CA"}, tuple(rng.uniform(1e7, 2e7, 3))) for i in range(5)}
    ms = tuple(RangingMeasurement(1000, k, Infrastructure.GNSS, float(rng.uniform(2e7, 2.5e7)),
                                  ValueKind.PSEUDORANGE, 3.0) for k in sats)
    net = (RangingMeasurement(1000, "ap", Infrastructure.WIFI, -55.25, ValueKind.RSSI, 4.0),)
    epoch = Epoch(1000, ms + net, anchors=sats)
    logs.write_gnss_log([epoch], tmp_path / "g.csv")
    logs.write_network_log([epoch], tmp_path / "n.csv")
    g = logs.parse_gnss_log(tmp_path / "g.csv")[0]
    n = logs.parse_network_log(tmp_path / "n.csv")[0]
    key = lambda m: (m.infrastructure.value, m.anchor_id)  # noqa: E731
    for a, b in zip(sorted(ms, key=key), sorted(g.measurements, key=key)):
        assert (a.anchor_id, a.value, a.sigma) == (b.anchor_id, b.value, b.sigma)
    assert n.measurements[0].value == -55.25
    assert {k: a.ecef for k, a in g.anchors.items()} == {k: a.ecef for k, a in sats.items()}


def test_assemble_aligns_within_window():
    g = [Epoch(1000), Epoch(2000)]
    net = [Epoch(1400, (RangingMeasurement(1400, "ap", Infrastructure.WIFI, -50.0, ValueKind.RSSI),)),
           Epoch(3600, (RangingMeasurement(3600, "ap", Infrastructure.WIFI, -50.0, ValueKind.RSSI),))]
    out = logs.assemble_epochs(g, net)
    assert [e.time for e in out] == [1000, 2000, 3600]
    assert len(out[0].measurements) == 1


def test_registry_rejects_duplicates():
    a = Anchor("x", Infrastructure.WIFI, GeoPoint(0, 0))
    with pytest.raises(FormatError):
        AnchorRegistry([a, a])
