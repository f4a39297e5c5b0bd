import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eraim import fusion
from eraim.errors import InsufficientDataError, NoDataError
from eraim.model import Infrastructure
from eraim.subsets import EstimateBatch, SubsetEstimate, SubsetSpec

G, W = Infrastructure.GNSS, Infrastructure.WIFI


def est(pos, sigma=1.0, infra=G, i=0):
    members = tuple(f"x{j}" for j in range(4 if infra is G else 3))
    return SubsetEstimate(SubsetSpec(infra, members, i), np.asarray(pos, float), np.full(3, float(sigma)))


def score_oracle(groups, means, sigmas, p):
    """Geometric mean over infrastructures of per-infrastructure geometric means, via plain math."""
    by = {}
    for g, m, s in zip(groups, means, sigmas):
        dens = 1.0
        for a in range(3):
            dens *= math.exp(-0.5 * ((p[a] - m[a]) / s[a]) ** 2)
        by.setdefault(g, []).append(dens)
    inner = [math.prod(v) ** (1 / len(v)) for v in by.values()]
    return 1 - math.prod(inner) ** (1 / len(inner))


# -- uncertainty -----------------------------------------------------------------------

def test_gnss_uncertainty_definitional():
    s = fusion.subset_uncertainty({"kind": "gnss", "dop": np.r_[np.sqrt(4 / 3) * np.ones(3), 1.0],
                                   "range_sigma": 1.5})
    assert np.allclose(s, 3.0)


def test_zero_residual_wls_floor():
    s = fusion.subset_uncertainty({"kind": "wls", "residual": 0.0, "size": 4, "mean_range": 20.0})
    assert np.array_equal(s, np.full(3, fusion.SIGMA_MIN))


def test_fingerprint_uncertainty_arithmetic():
    d = {"kind": "fingerprint", "scores": np.array([10.0, 5.0, 5.0]), "size": 4, "d_min": 0.5}
    c_f = 1.0 * 4 / 0.5
    assert np.allclose(fusion.subset_uncertainty(d, sigma_min=1.0), max(c_f / (20 / 3), 1.0))


def test_exact_fingerprint_maps_to_floor():
    d = {"kind": "fingerprint", "scores": np.array([8.0, 8.0]), "size": 4, "d_min": 0.5}
    assert np.allclose(fusion.subset_uncertainty(d, sigma_min=2.0), 2.0)


@given(st.integers(0, 10_000), st.sampled_from(["gnss", "wls", "trilateration"]))
def test_batch_uncertainty_matches_scalar(seed, kind):
    rng = np.random.default_rng(seed)
    n = 6
    if kind == "gnss":
        cols = {"dop": rng.uniform(0.5, 5, (n, 4)), "range_sigma": rng.uniform(0.1, 5, n)}
    elif kind == "wls":
        cols = {"residual": rng.uniform(0, 2, n), "size": rng.integers(3, 8, n), "mean_range": rng.uniform(1, 90, n)}
    else:
        cols = {"geometry_sigma": rng.uniform(0, 4, (n, 2)), "range_rms": rng.uniform(0, 4, n)}
    got = fusion.batch_uncertainty(kind, cols, 0.7)
    for i in range(n):
        diag = {"kind": kind, **{k: v[i] for k, v in cols.items()}}
        assert np.allclose(got[i], fusion.subset_uncertainty(diag, sigma_min=0.7), rtol=1e-12)


# -- densities and score ------------------------------------------------------------------

def test_density_closed_forms():
    assert fusion.normalized_density(np.zeros(3), np.ones(3), np.zeros(3)) == 1.0
    assert fusion.normalized_density(np.zeros(3), np.ones(3), [1, 0, 0]) == pytest.approx(math.exp(-0.5))
    assert fusion.normalized_density(np.zeros(3), np.full(3, 2.0), [2, 2, 2]) == pytest.approx(math.exp(-1.5))


def test_score_consensus_and_one_sigma():
    assert fusion.attack_likelihood([est([1, 2, 3])], np.array([1, 2, 3])) == 0.0
    f = fusion.attack_likelihood([est([0, 0, 0], 2.0)], np.array([2.0, 0, 0]))
    assert f == pytest.approx(1 - math.exp(-0.5), abs=1e-12)


def test_score_geometric_mean_across_infrastructures():
    e = [est([0, 0, 0]), est([2, 0, 0], infra=W)]
    assert fusion.attack_likelihood(e, np.zeros(3)) == pytest.approx(1 - math.exp(-1), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_score_matches_oracle_and_range(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    groups = list(rng.choice([G, W, Infrastructure.CELL], n))
    means = rng.normal(0, 50, (n, 3))
    sig = rng.uniform(0.5, 30, (n, 3))
    p = rng.normal(0, 50, 3)
    f = fusion.likelihood_from_arrays(groups, means, sig, p)
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(score_oracle(groups, means, sig, p), abs=1e-12)


def test_score_permutation_invariant():
    rng = np.random.default_rng(2)
    n = 15
    groups = list(rng.choice([G, W, Infrastructure.CELL], n))
    means, sig, p = rng.normal(0, 5, (n, 3)), rng.uniform(1, 4, (n, 3)), rng.normal(0, 5, 3)
    ref = fusion.likelihood_from_arrays(groups, means, sig, p)
    for _ in range(100):
        perm = rng.permutation(n)
        f = fusion.likelihood_from_arrays([groups[i] for i in perm], means[perm], sig[perm], p)
        assert f == pytest.approx(ref, abs=1e-12)


def test_no_estimates():
    with pytest.raises(NoDataError):
        fusion.attack_likelihood([], np.zeros(3))


def test_alarm_strict():
    assert not fusion.decide_alarm(0.0, 0.1)
    assert fusion.decide_alarm(1.0, 0.99)
    assert not fusion.decide_alarm(0.5, 0.5)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_alarm_monotone(f, a, b):
    lo, hi = min(a, b), max(a, b)
    assert fusion.decide_alarm(f, hi) <= fusion.decide_alarm(f, lo)


# -- fusion, exclusion, recovery ------------------------------------------------------------

def test_fuse_closed_forms():
    assert np.allclose(fusion.preliminary_fuse([est([1, 1, 1]), est([1, 1, 1])]), 1.0)
    assert np.allclose(fusion.preliminary_fuse([est([0, 0, 0]), est([4, 4, 4])]), 2.0)
    p = fusion.preliminary_fuse([est([0, 0, 0], 1.0), est([4, 4, 4], 3.0)])
    assert np.allclose(p, 1.0)  # 3/4 of the way toward the tighter estimate


def test_fuse_empty():
    with pytest.raises(InsufficientDataError):
        fusion.preliminary_fuse([])


def test_exclusion_coincident():
    r = fusion.exclude_inconsistent([est([1, 1, 1]) for _ in range(5)])
    assert r.benign.all() and r.iterations == 1


def test_exclusion_outlier_tie_is_retained():
    # deviations 9 x 50 and 1 x 450: mean 90, population std 120, so the
    # threshold 90 + 3 * 120 equals the outlier's deviation and ties stay
    e = [est([0, 0, 0]) for _ in range(9)] + [est([500, 0, 0])]
    r = fusion.exclude_inconsistent(e, 3.0)
    assert r.threshold == pytest.approx(450.0)
    assert r.benign.all()


def test_exclusion_outlier():
    e = [est([0, 0, 0]) for _ in range(10)] + [est([500, 0, 0])]
    r = fusion.exclude_inconsistent(e, 3.0)
    assert r.benign[:10].all() and not r.benign[10]


def test_exclusion_n_lambda_zero():
    e = [est([0, 0, 0]), est([0, 0, 0]), est([1, 0, 0]), est([10, 0, 0])]
    r = fusion.exclude_inconsistent(e, 0.0)
    assert r.benign.tolist() == [True, True, False, False]


@given(st.integers(0, 2**32 - 1), st.floats(0, 4))
def test_exclusion_terminates_nonempty(seed, n_lambda):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    r = fusion.exclude_from_arrays(rng.normal(0, 100, (n, 3)), rng.uniform(0.5, 10, (n, 3)), n_lambda)
    assert r.benign.any()
    assert r.iterations <= min(max(n, 1), fusion.MAX_EXCLUSION_ITER)


def test_recovery_all_equals_preliminary():
    rng = np.random.default_rng(3)
    e = [est(rng.normal(0, 5, 3), rng.uniform(1, 3)) for _ in range(7)]
    assert np.array_equal(fusion.recover_position(e, np.ones(7, bool)), fusion.preliminary_fuse(e))


def test_recovery_single_and_empty():
    e = [est([1, 2, 3]), est([9, 9, 9])]
    assert np.array_equal(fusion.recover_position(e, [True, False]), [1, 2, 3])
    assert fusion.recover_position(e, [False, False]) is None


def test_batch_and_list_routes_agree():
    rng = np.random.default_rng(4)
    e = [est(rng.normal(0, 5, 3), rng.uniform(1, 3), infra=[G, W][i % 2]) for i in range(8)]
    b = EstimateBatch.from_estimates(e)
    p = rng.normal(0, 5, 3)
    assert fusion.attack_likelihood(b, p) == fusion.attack_likelihood(e, p)
    assert np.array_equal(fusion.exclude_inconsistent(b).benign, fusion.exclude_inconsistent(e).benign)


def test_calibration():
    assert fusion.calibrate_threshold(np.zeros(10), 0.05) == 0.0
    s = np.array([0.0, 0.0, 0.4])
    lam = fusion.calibrate_threshold(s, 0.0)
    assert lam >= 0.4
    rng = np.random.default_rng(5)
    s = rng.random(200)
    lam = fusion.calibrate_threshold(s, 0.10)
    # exhaustive sweep over the default grid
    grid = np.linspace(0, 1, 101)
    ok = [g for g in grid if np.mean(s > g) <= 0.10]
    assert lam == min(ok)


def test_calibration_unreachable_warns():
    with pytest.warns(UserWarning):
        assert fusion.calibrate_threshold(np.full(5, 1.5), 0.0) == 1.0
