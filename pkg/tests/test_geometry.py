import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import unit_vectors
from cylk.geometry import (
    BoxWindow,
    Cylinder,
    DegenerateDirectionError,
    DirectedLine,
    anchor_through,
    as_unit,
    chord_length,
    complement_basis,
    cylinder_contains,
    lateral_interval_2d,
    lateral_measure,
    line_hits_box,
    project_complement,
    projected_measure,
    rotation_to,
    sample_lateral,
)


@given(st.one_of(unit_vectors(2), unit_vectors(3)))
def test_rotation_maps_last_axis_to_u(u):
    r = rotation_to(u)
    e = np.zeros(u.shape[0])
    e[-1] = 1
    assert np.allclose(r @ e, u, atol=1e-12)
    assert np.allclose(r.T @ r, np.eye(u.shape[0]), atol=1e-12)
    assert np.isclose(np.linalg.det(r), 1.0)


@given(st.one_of(unit_vectors(2), unit_vectors(3)))
def test_rotation_handles_lower_hemisphere(u):
    assert np.allclose(rotation_to(-u) @ np.eye(u.shape[0])[-1], -u, atol=1e-12)


@given(unit_vectors(3), st.tuples(*[st.floats(-5, 5)] * 3))
def test_projection_is_orthogonal_and_idempotent(u, x):
    x = np.array(x)
    p = project_complement(x, u)
    assert abs(p @ u) < 1e-9
    assert np.allclose(project_complement(p, u), p, atol=1e-12)
    b = complement_basis(u)
    assert np.allclose(b.T @ u, 0, atol=1e-12)
    assert np.allclose(b @ (b.T @ x), p, atol=1e-9)


def test_as_unit_rejects_non_unit():
    with pytest.raises(ValueError):
        as_unit([1.0, 1.0])


def test_cylinder_membership_closed():
    c = Cylinder([0, 0, 1], r=0.1, t=0.25)
    pts = np.array([[0.1, 0, 0.25], [0.1, 0, 0.2500001], [0.0, 0.1000001, 0], [0.05, 0.05, -0.25]])
    assert cylinder_contains(pts, c).tolist() == [True, False, False, True]
    with pytest.raises(ValueError):
        Cylinder([0, 0, 1], r=0, t=1)


def test_lateral_interval_matches_corner_shadow():
    # oracle: anchors of lines through the four corners of [-a, a]^2
    a = 0.55
    for phi in np.linspace(0.05, np.pi - 0.05, 37):
        u = np.array([np.cos(phi), np.sin(phi)])
        corners = BoxWindow.centered([a, a]).corners()
        ys = anchor_through(corners, np.tile(u, (4, 1)))[:, 0]
        lo, hi = lateral_interval_2d(phi, a)
        assert np.isclose(lo, ys.min()) and np.isclose(hi, ys.max())
        assert np.isclose(lateral_measure(u, BoxWindow.centered([a, a])), hi - lo)
        # closed-form width 2a(|sin|+|cos|)/|sin|
        assert np.isclose(hi - lo, 2 * a * (abs(np.sin(phi)) + abs(np.cos(phi))) / abs(np.sin(phi)))


def test_lateral_interval_degenerate():
    with pytest.raises(DegenerateDirectionError):
        lateral_interval_2d(0.0, 1.0)


@given(unit_vectors(3))
def test_lateral_measure_by_monte_carlo(u):
    # oracle: fraction of a bounding rectangle in H whose lines hit the box
    w = BoxWindow([0, 0, 0], [1, 2, 0.5])
    rng = np.random.default_rng(1)
    from cylk.geometry import lateral_bounds, lines_hit_box

    lo, hi = lateral_bounds(u, w)
    m = 20000
    y = np.zeros((m, 3))
    y[:, :2] = rng.uniform(lo, hi, size=(m, 2))
    frac = lines_hit_box(y, np.tile(u, (m, 1)), w).mean()
    est = frac * np.prod(hi - lo)
    # floor the binomial variance at one hit so that frac = 1 still carries a resolution limit
    se = np.prod(hi - lo) * np.sqrt(max(frac * (1 - frac), 1 / m) / m)
    assert abs(est - lateral_measure(u, w)) < 5 * se


@given(st.one_of(unit_vectors(2), unit_vectors(3)))
def test_projected_measure_bounds(u):
    w = BoxWindow.unit(u.shape[0])
    pm = projected_measure(u, w)
    assert 1 - 1e-12 <= pm <= np.sqrt(u.shape[0]) + 1e-12


def test_chord_length_by_sampling():
    w = BoxWindow([-1, -1], [2, 1])
    rng = np.random.default_rng(0)
    for _ in range(50):
        phi = rng.uniform(0.1, np.pi - 0.1)
        u = np.array([np.cos(phi), np.sin(phi)])
        y = np.array([rng.uniform(-3, 3), 0.0])
        s = np.linspace(-10, 10, 200001)
        inside = w.contains(y + s[:, None] * u)
        assert abs(chord_length(y, u, w) - inside.sum() * (s[1] - s[0])) < 2e-4


def test_directed_line_validation():
    with pytest.raises(DegenerateDirectionError):
        DirectedLine([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        DirectedLine([0.0, 0.5], [0.0, 1.0])
    line = DirectedLine.through([0.3, 0.4], [0.6, 0.8])
    assert line.anchor[-1] == 0 and np.isclose(line.anchor[0], 0.0)
    assert line_hits_box(line, BoxWindow.unit(2))
    assert not line_hits_box(DirectedLine([5.0, 0.0], [0.0, 1.0]), BoxWindow.unit(2))


@given(st.one_of(unit_vectors(2), unit_vectors(3)), st.integers(0, 2**31))
def test_sample_lateral_hits_window(u, seed):
    w = BoxWindow.centered(np.full(u.shape[0], 0.5))
    ys = sample_lateral(u, w, np.random.default_rng(seed), size=20)
    assert np.all(ys[:, -1] == 0)
    assert np.all(chord_length(ys, np.tile(u, (20, 1)), w) >= 0)
    from cylk.geometry import lines_hit_box

    assert lines_hit_box(ys, np.tile(u, (20, 1)), w).all()


def test_window_roundtrip_and_validation():
    w = BoxWindow([0, 1, 2], [1, 3, 5])
    assert BoxWindow.from_dict(w.to_dict()) == w
    assert w.volume == 6 and np.allclose(w.face_measures(), [6, 3, 2])
    with pytest.raises(ValueError):
        BoxWindow([0, 0], [0, 1])
    with pytest.raises(ValueError):
        BoxWindow.from_dict({"dim": 3, "lower": [0, 0], "upper": [1, 1]})
