"""Tests for form matrices, form-difference matrices, the T statistic, and
the bootstrap test of mean-form equality.

Main oracles: hand-computed distance matrices and quotients for small
triangles, exact invariance identities, and self-comparison bootstrap runs
whose null distribution is known by construction.
"""

import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ellipform.data import LandmarkSample
from ellipform.models import EllipticalModel, MatrixEllipticalSpec, sample_matrix_elliptical
from ellipform.formdiff import (
    FormDifferenceResult,
    FormMatrix,
    bootstrap_test,
    fdm,
    form_matrix,
    group_mean_form,
    t_statistic,
)

GAUSS = EllipticalModel("gaussian")

# hand oracle: right triangles with known side lengths
TRI_X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
TRI_Y = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]])


def random_config(k, d, rng):
    return rng.normal(size=(k, d))


def random_rotation(d, rng, reflect=False):
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    q = q * np.sign(np.diag(r))
    if reflect:
        q[:, 0] = -q[:, 0]
    return q


def landmark_group(name, mu, sigma_scale, n, seed, k=None):
    mu = np.asarray(mu, dtype=float)
    k = mu.shape[0] if k is None else k
    spec = MatrixEllipticalSpec(mu, sigma_scale * np.eye(mu.shape[0]),
                                np.eye(mu.shape[1]), GAUSS)
    xs = sample_matrix_elliptical(spec, n, seed)
    return LandmarkSample.from_specimens(name, list(xs))


def quad_config():
    # centered K=4 configuration with mean products well away from zero
    return np.array([[2.0, 1.0], [1.5, -1.0], [-1.6, -0.8], [-1.9, 0.8]])


def test_form_matrix_unit_segment():
    fm = form_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
    assert np.array_equal(fm.dist, np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_form_matrix_hand_triangles():
    fx = form_matrix(TRI_X).dist
    assert np.allclose(fx, [[0, 1, 1], [1, 0, np.sqrt(2)], [1, np.sqrt(2), 0]],
                       rtol=0, atol=1e-15)
    fy = form_matrix(TRI_Y).dist
    assert np.allclose(fy, [[0, 2, np.sqrt(2)], [2, 0, np.sqrt(2)],
                            [np.sqrt(2), np.sqrt(2), 0]], rtol=0, atol=1e-15)
    f345 = form_matrix(np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])).dist
    assert np.allclose(f345, [[0, 3, 4], [3, 0, 5], [4, 5, 0]], rtol=0, atol=1e-12)


def test_form_matrix_equilateral():
    side = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    fm = form_matrix(side).dist
    off = fm[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 1.0, rtol=0, atol=1e-15)


@given(st.integers(2, 7), st.integers(1, 3), st.integers(0, 10 ** 6),
       st.booleans())
@settings(max_examples=60, deadline=None)
def test_form_matrix_rigid_motion_invariance(k, d, seed, reflect):
    rng = np.random.default_rng(seed)
    x = random_config(k, d, rng)
    q = random_rotation(d, rng, reflect=reflect)
    moved = x @ q + np.ones((k, 1)) @ rng.normal(size=(1, d))
    assert np.abs(form_matrix(moved).dist - form_matrix(x).dist).max() < 1e-12


def test_form_matrix_not_scale_invariant():
    rng = np.random.default_rng(3)
    x = random_config(5, 2, rng)
    assert np.allclose(form_matrix(2.0 * x).dist, 2.0 * form_matrix(x).dist,
                       rtol=0, atol=0)


@given(st.integers(3, 8), st.integers(1, 3), st.integers(0, 10 ** 6))
@settings(max_examples=60, deadline=None)
def test_form_matrix_metric_invariants(k, d, seed):
    rng = np.random.default_rng(seed)
    fm = form_matrix(random_config(k, d, rng))
    dist = fm.dist
    assert np.array_equal(dist, dist.T)
    assert np.array_equal(np.diag(dist), np.zeros(k))
    assert dist.min() >= 0
    # triangle inequality over all ordered triples
    gap = dist[:, :, None] - dist[:, None, :] - dist.T[None, :, :]
    assert gap.max() <= 1e-10 * max(1.0, dist.max())


def test_form_matrix_rejects_single_landmark():
    with pytest.raises(ValueError):
        form_matrix(np.array([[0.0, 0.0]]))


def test_form_matrix_type_rejects_asymmetric():
    with pytest.raises(ValueError):
        FormMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_fdm_self_quotient_is_ones():
    rng = np.random.default_rng(11)
    mu = random_config(5, 3, rng)
    f = fdm(mu, mu)
    assert np.array_equal(np.diag(f), np.zeros(5))
    assert np.allclose(f[~np.eye(5, dtype=bool)], 1.0, rtol=0, atol=0)


def test_fdm_scaling_is_linear():
    rng = np.random.default_rng(12)
    mu = random_config(4, 2, rng)
    f = fdm(2.5 * mu, mu)
    assert np.allclose(f[~np.eye(4, dtype=bool)], 2.5, rtol=1e-14, atol=0)


def test_fdm_hand_quotient():
    f = fdm(TRI_X, TRI_Y)
    expect = np.array([
        [0.0, 0.5, 1.0 / np.sqrt(2)],
        [0.5, 0.0, 1.0],
        [1.0 / np.sqrt(2), 1.0, 0.0],
    ])
    assert np.allclose(f, expect, rtol=0, atol=1e-15)


@given(st.integers(3, 7), st.integers(2, 3), st.integers(0, 10 ** 6))
@settings(max_examples=60, deadline=None)
def test_fdm_reciprocal_identity(k, d, seed):
    rng = np.random.default_rng(seed)
    x, y = random_config(k, d, rng), random_config(k, d, rng)
    prod = fdm(x, y) * fdm(y, x)
    off = prod[~np.eye(k, dtype=bool)]
    assert np.abs(off - 1.0).max() < 1e-12


def test_fdm_degenerate_denominator_flags_infinity():
    x = TRI_X
    y = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])  # landmarks 0,1 coincide
    with pytest.warns(RuntimeWarning, match="degenerate"):
        f = fdm(x, y)
    assert np.isposinf(f[0, 1]) and np.isposinf(f[1, 0])
    assert np.isfinite(f[0, 2]) and np.isfinite(f[1, 2])


def test_fdm_zero_over_zero_is_zero():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [2.0, 0.0]])
    y = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 3.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        f = fdm(x, y)
    assert f[0, 1] == 0.0 and f[1, 0] == 0.0


def test_fdm_rejects_mismatched_landmark_count():
    with pytest.raises(ValueError):
        fdm(TRI_X, TRI_X[:2])


def test_t_statistic_all_ones():
    f = np.ones((4, 4)) - np.eye(4)
    assert t_statistic(f) == 1.0


def test_t_statistic_max_over_min():
    f = np.zeros((3, 3))
    f[0, 1] = f[1, 0] = 2.0
    f[0, 2] = f[2, 0] = 0.5
    f[1, 2] = f[2, 1] = 1.0
    assert t_statistic(f) == 4.0


def test_t_statistic_constant_off_diagonal_is_one():
    f = 2.5 * (np.ones((5, 5)) - np.eye(5))
    assert t_statistic(f) == 1.0
    f[0, 1] = f[1, 0] = 2.6
    assert t_statistic(f) > 1.0


@given(st.integers(2, 6), st.integers(0, 10 ** 6))
@settings(max_examples=60, deadline=None)
def test_t_statistic_at_least_one(k, seed):
    rng = np.random.default_rng(seed)
    x, y = random_config(k, 2, rng), random_config(k, 2, rng)
    assert t_statistic(fdm(x, y)) >= 1.0


def test_t_statistic_scale_invariant():
    rng = np.random.default_rng(7)
    for trial in range(20):
        x, y = random_config(5, 2, rng), random_config(5, 2, rng)
        base = t_statistic(fdm(x, y))
        # power-of-two scaling commutes with rounding: equality is exact
        assert t_statistic(fdm(4.0 * x, y)) == base
        assert t_statistic(fdm(x, 0.5 * y)) == base
        # a non-dyadic factor agrees to rounding error
        assert abs(t_statistic(fdm(3.0 * x, y)) - base) <= 1e-14 * base


def test_t_statistic_rejects_nonpositive_entries():
    f = np.ones((3, 3)) - np.eye(3)
    f[0, 1] = f[1, 0] = 0.0
    with pytest.raises(ValueError):
        t_statistic(f)
    f[0, 1] = f[1, 0] = -0.3
    with pytest.raises(ValueError):
        t_statistic(f)


def test_t_statistic_rejects_trivial_matrix():
    with pytest.raises(ValueError):
        t_statistic(np.zeros((1, 1)))


def test_landmark_sample_validation():
    good = [np.zeros((3, 2)), np.ones((3, 2))]
    s = LandmarkSample.from_specimens("a", good)
    assert (s.K, s.D, len(s.specimens)) == (3, 2, 2)
    with pytest.raises(ValueError):
        LandmarkSample.from_specimens("a", [np.zeros((3, 2))])  # n < 2
    with pytest.raises(ValueError):
        LandmarkSample.from_specimens("a", [np.zeros((2, 2)), np.zeros((2, 2))])  # K <= D
    with pytest.raises(ValueError):
        LandmarkSample.from_specimens("a", [np.zeros((3, 2)), np.zeros((4, 2))])
    with pytest.raises(ValueError):
        LandmarkSample("a", good, K=4, D=2)


def test_group_mean_form_recovers_centered_truth():
    mu = quad_config()
    group = landmark_group("g", mu, 0.05, 400, seed=21)
    est = group_mean_form(group, GAUSS, case="dependent")
    ref = form_matrix(mu).dist
    got = form_matrix(est).dist
    assert np.abs(got - ref).max() < 0.05 * ref.max()


def test_bootstrap_identical_groups_accepts():
    mu = quad_config()
    group = landmark_group("g", mu, 0.1, 12, seed=5)
    res = bootstrap_test(group, group, GAUSS, case="dependent",
                         boot_size=40, seed=99)
    assert res.T_obs == 1.0
    assert res.p_value > 0.5
    off = res.fdm[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 1.0, rtol=0, atol=0)
    assert len(res.boot_T) + res.n_failed == 40
    assert all(t >= 1.0 for t in res.boot_T)


def test_bootstrap_deterministic_under_seed():
    mu = quad_config()
    ga = landmark_group("a", mu, 0.1, 10, seed=1)
    gb = landmark_group("b", mu, 0.1, 10, seed=2)
    r1 = bootstrap_test(ga, gb, GAUSS, case="dependent", boot_size=25, seed=7)
    r2 = bootstrap_test(ga, gb, GAUSS, case="dependent", boot_size=25, seed=7)
    assert r1.boot_T == r2.boot_T
    assert r1.p_value == r2.p_value
    r3 = bootstrap_test(ga, gb, GAUSS, case="dependent", boot_size=25, seed=8)
    assert r1.boot_T != r3.boot_T


def test_bootstrap_null_smoke():
    mu = quad_config()
    ga = landmark_group("a", mu, 0.2, 25, seed=31)
    gb = landmark_group("b", mu, 0.2, 25, seed=32)
    res = bootstrap_test(ga, gb, GAUSS, case="dependent", boot_size=60, seed=17)
    assert 0.0 < res.p_value <= 1.0
    assert res.p_value > 0.02
    assert res.n_exceed == sum(t >= res.T_obs for t in res.boot_T)
    assert res.p_value == (res.n_exceed + 1) / (len(res.boot_T) + 1)


def test_bootstrap_detects_large_form_difference():
    mu_a = quad_config()
    mu_b = mu_a.copy()
    # stretch the (0,1) inter-landmark distance by half
    mu_b[0] += 0.5 * (mu_a[0] - mu_a[1])
    ga = landmark_group("a", mu_a, 0.05, 25, seed=41)
    gb = landmark_group("b", mu_b, 0.05, 25, seed=42)
    res = bootstrap_test(ga, gb, GAUSS, case="dependent", boot_size=60, seed=18)
    assert res.p_value < 0.2


def test_bootstrap_independent_case_runs():
    mu = quad_config()
    ga = landmark_group("a", mu, 0.1, 20, seed=51)
    gb = landmark_group("b", mu, 0.1, 20, seed=52)
    res = bootstrap_test(ga, gb, GAUSS, case="independent", boot_size=20, seed=9)
    assert 0.0 < res.p_value <= 1.0


def test_bootstrap_rejects_undersized_groups():
    mu = quad_config()
    small = landmark_group("a", mu, 0.1, 3, seed=61)
    ok = landmark_group("b", mu, 0.1, 10, seed=62)
    with pytest.raises(ValueError, match="at least K"):
        bootstrap_test(small, ok, GAUSS, case="dependent", boot_size=5, seed=0)


def test_bootstrap_rejects_mismatched_shapes():
    ga = landmark_group("a", quad_config(), 0.1, 8, seed=71)
    gb = landmark_group("b", TRI_X, 0.1, 8, seed=72)
    with pytest.raises(ValueError, match="landmark"):
        bootstrap_test(ga, gb, GAUSS, case="dependent", boot_size=5, seed=0)


def test_bootstrap_rejects_bad_boot_size():
    g = landmark_group("a", quad_config(), 0.1, 8, seed=81)
    with pytest.raises(ValueError):
        bootstrap_test(g, g, GAUSS, case="dependent", boot_size=0, seed=0)


def test_result_serializes_to_json():
    mu = quad_config()
    g = landmark_group("a", mu, 0.1, 10, seed=91)
    res = bootstrap_test(g, g, GAUSS, case="dependent", boot_size=10, seed=3)
    blob = json.dumps(res.to_dict(), sort_keys=True)
    back = json.loads(blob)
    assert back["T_obs"] == res.T_obs
    assert back["boot_size"] == 10
    assert np.allclose(np.array(back["fdm"]), res.fdm)
