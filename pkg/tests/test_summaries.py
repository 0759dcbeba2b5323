import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import unit_vectors
from cylk.envelopes import binomial_pattern
from cylk.geometry import BoxWindow
from cylk.patterns import PointPattern
from cylk.summaries import (
    Correction,
    InsufficientPointsError,
    SummaryCurve,
    cylindrical_k,
    directional_scan,
    f_function,
    fgj_estimates,
    g_function,
    isotropic_k,
    rho2_hat,
)


def naive_k(points, window, u, r, t, combined=False):
    """Independent oracle: explicit double loop over ordered pairs."""
    n = len(points)
    total = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dx = points[j] - points[i]
            along = dx @ u
            lat = np.linalg.norm(dx - along * u)
            if lat <= r and abs(along) <= t:
                if combined:
                    k = int(np.flatnonzero(u)[0])
                    a = window.sides
                    refl = 2 * points[i][k] - points[j][k]
                    temporal = 1 + (not window.lower[k] <= refl <= window.upper[k])
                    spatial = a[k] * np.prod([a[m] - abs(dx[m]) for m in range(3) if m != k])
                    total.append(temporal / spatial)
                else:
                    total.append(1 / np.prod(window.sides - np.abs(dx)))
    return math.fsum(total) * window.volume**2 / (n * (n - 1))


def test_rho2_hat_values():
    w = BoxWindow.unit(2)
    assert rho2_hat(PointPattern(np.full((2, 2), 0.5), w)) == 2
    pts = np.random.default_rng(0).uniform(size=(110, 2))
    assert rho2_hat(PointPattern(pts, w)) == 11990
    with pytest.raises(InsufficientPointsError):
        rho2_hat(PointPattern([[0.5, 0.5]], w))


def test_two_point_hand_value():
    p = PointPattern([[0.25, 0.25], [0.25, 0.75]], BoxWindow.unit(2))
    # the pair is 0.5 apart along the axis: outside the cylinder for t=0.3
    assert cylindrical_k(p, [0, 1], [0.1], 0.3).values[0] == 0.0
    # both ordered pairs, weight 1/(1*0.5) each, rho2_hat = 2
    assert cylindrical_k(p, [0, 1], [0.1], 0.6).values[0] == pytest.approx(2.0, abs=1e-15)


@given(st.integers(2, 60), st.integers(0, 2**31), st.sampled_from([2, 3]))
def test_tree_path_is_bit_identical_to_naive(n, seed, dim):
    rng = np.random.default_rng(seed)
    w = BoxWindow(np.zeros(dim), rng.uniform(0.5, 2, dim))
    p = binomial_pattern(n, w, rng)
    u = rng.normal(size=dim)
    u /= np.linalg.norm(u)
    r = np.sort(rng.uniform(0.01, 3, 6))
    t = rng.uniform(0.05, 1)
    a = cylindrical_k(p, u, r, t).values
    b = cylindrical_k(p, u, r, t, naive=True).values
    assert np.array_equal(a, b)


def test_estimator_matches_double_loop_oracle(rng):
    w = BoxWindow([0, 0, 0], [1, 1.5, 0.8])
    p = binomial_pattern(40, w, rng)
    for u, corr in (([0, 0, 1], Correction.TRANSLATION), ([0, 0, 1], Correction.COMBINED),
                    ([1, 0, 0], Correction.COMBINED), ([0.6, 0, 0.8], Correction.TRANSLATION)):
        u = np.array(u, dtype=float)
        est = cylindrical_k(p, u, [0.2, 0.4], 0.3, corr).values
        orc = [naive_k(p.points, w, u, r, 0.3, combined=corr is Correction.COMBINED) for r in (0.2, 0.4)]
        assert np.allclose(est, orc, rtol=1e-12, atol=0)


def test_large_radius_is_finite_and_matches_naive(rng):
    p = binomial_pattern(30, BoxWindow.unit(2), rng)
    a = cylindrical_k(p, [0.6, 0.8], [0.5, 5.0], 2.0)
    b = cylindrical_k(p, [0.6, 0.8], [0.5, 5.0], 2.0, naive=True)
    assert np.all(np.isfinite(a.values)) and np.array_equal(a.values, b.values)


@given(st.integers(0, 2**31), unit_vectors(3))
def test_symmetry_and_monotonicity(seed, u):
    rng = np.random.default_rng(seed)
    p = binomial_pattern(50, BoxWindow.unit(3), rng)
    r = np.linspace(0.02, 0.4, 12)
    k = cylindrical_k(p, u, r, 0.2).values
    assert np.array_equal(k, cylindrical_k(p, -u, r, 0.2).values)
    assert np.all(np.diff(k) >= 0)
    k2 = cylindrical_k(p, u, r, 0.3).values
    assert np.all(k2 >= k)


def test_combined_correction_validity():
    p = binomial_pattern(10, BoxWindow.unit(3), np.random.default_rng(1))
    with pytest.raises(ValueError):
        cylindrical_k(p, [0.6, 0, 0.8], [0.1], 0.2, Correction.COMBINED)
    q = binomial_pattern(10, BoxWindow.unit(2), np.random.default_rng(1))
    with pytest.raises(ValueError):
        cylindrical_k(q, [0, 1], [0.1], 0.2, Correction.COMBINED)


def test_unbiased_with_true_intensity():
    # with rho^2 in place of its estimate the translation-corrected sum is unbiased for 2 pi r^2 t
    rng = np.random.default_rng(11)
    w = BoxWindow.unit(3)
    lam, reps = 150, 500
    r = np.array([0.05, 0.1, 0.15])
    t = 0.2
    vals = []
    for _ in range(reps):
        p = PointPattern(rng.uniform(size=(rng.poisson(lam), 3)), w)
        k = cylindrical_k(p, [0, 0, 1], r, t).values
        vals.append(k * rho2_hat(p) / lam**2)
    vals = np.array(vals)
    se = vals.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(vals.mean(axis=0) - 2 * np.pi * r**2 * t) < 3 * se)


def test_translation_and_combined_agree_on_csr():
    rng = np.random.default_rng(5)
    w = BoxWindow.unit(3)
    r = np.array([0.1, 0.15, 0.2])
    tr, co = [], []
    for _ in range(30):
        p = binomial_pattern(400, w, rng)
        tr.append(cylindrical_k(p, [0, 0, 1], r, 0.25).values)
        co.append(cylindrical_k(p, [0, 0, 1], r, 0.25, Correction.COMBINED).values)
    assert np.all(np.abs(np.mean(co, 0) / np.mean(tr, 0) - 1) < 0.1)


def test_scan_is_pi_periodic_and_locates_lines():
    rng = np.random.default_rng(2)
    w = BoxWindow.unit(2)
    p = binomial_pattern(60, w, rng)
    phis = np.linspace(0, np.pi, 7)
    a = directional_scan(p, phis, 0.05, 0.2).values
    b = directional_scan(p, phis + np.pi, 0.05, 0.2).values
    assert np.allclose(a, b, rtol=1e-12)
    from cylk.plcpp import PlcppParams, simulate

    th = np.radians(117)
    par = PlcppParams(13, [np.cos(th), np.sin(th)], 40, 12, 2.5e-4)
    x = simulate(par, w, w.inflate(0.05), np.random.default_rng(3)).pattern
    grid = np.radians(np.arange(0.5, 180, 1.0))
    scan = directional_scan(x, grid, 0.02, 0.1)
    best = np.degrees(grid[np.argmax(scan.values)])
    assert abs(best - 117) <= 10


def test_isotropic_k_csr():
    rng = np.random.default_rng(8)
    r = np.array([0.05, 0.1])
    vals = [isotropic_k(binomial_pattern(300, BoxWindow.unit(2), rng), r).values for _ in range(100)]
    m = np.mean(vals, 0)
    se = np.std(vals, 0, ddof=1) / 10
    assert np.all(np.abs(m - np.pi * r**2) < 4 * se)


def test_fgj_under_csr(rng):
    w = BoxWindow.unit(2)
    r = np.linspace(0.005, 0.05, 10)
    fs, gs = [], []
    for _ in range(40):
        p = binomial_pattern(200, w, rng)
        f, g, j = fgj_estimates(p, r)
        assert np.all((0 <= f.values) & (f.values <= 1)) and np.all(np.diff(f.values) >= 0)
        assert np.all((0 <= g.values) & (g.values <= 1)) and np.all(np.diff(g.values) >= 0)
        fs.append(f.values)
        gs.append(g.values)
    theory = 1 - np.exp(-200 * np.pi * r**2)
    assert np.allclose(np.mean(fs, 0), theory, atol=0.02)
    assert np.allclose(np.mean(gs, 0), theory, atol=0.03)


def test_j_below_one_for_clusters(rng):
    from cylk.fit import simulate_thomas

    p = simulate_thomas(50, 1e-4, 8, BoxWindow.unit(2), rng)
    _, _, j = fgj_estimates(p, np.linspace(0.002, 0.02, 5))
    assert np.all(j.values < 1)


def test_j_omitted_where_f_is_one():
    p = PointPattern(np.random.default_rng(0).uniform(size=(100, 2)), BoxWindow.unit(2))
    f, g, j = fgj_estimates(p, np.array([0.01, 0.5, 0.9]))
    assert f.values[-1] == 1 and len(j) < len(f)


def test_fgj_errors():
    w = BoxWindow.unit(2)
    with pytest.raises(InsufficientPointsError):
        g_function(PointPattern([[0.5, 0.5]], w), [0.1])
    with pytest.raises(InsufficientPointsError):
        f_function(PointPattern(np.zeros((0, 2)), w), [0.1])


def test_curve_csv_roundtrip():
    c = SummaryCurve([0.1, 0.2], [1.0, 2.5], {"statistic": "K_cyl", "t": 0.25})
    text = c.to_csv()
    assert "# statistic: K_cyl" in text and "arg,value" in text
    d = SummaryCurve.from_csv(text)
    assert np.array_equal(d.args, c.args) and np.array_equal(d.values, c.values)
    with pytest.raises(ValueError):
        SummaryCurve([0.2, 0.1], [1, 2])
