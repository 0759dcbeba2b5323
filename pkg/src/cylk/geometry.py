"""Vector, rotation and line/box primitives shared by the estimators and models.

Lines are stored in phase representation: an anchor ``y`` on the hyperplane
``H = {x : x[d-1] = 0}`` together with a unit direction ``u``.  Windows are
axis-aligned boxes.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

UNIT_TOL = 1e-12


class DegenerateDirectionError(ValueError):
    """Raised when a direction has no component along the last axis."""


def as_unit(u, tol: float = 1e-9) -> np.ndarray:
    """Return ``u`` as a float array, checking it has unit length."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] not in (2, 3):
        raise ValueError(f"direction must have 2 or 3 components, got shape {u.shape}")
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"direction is not a unit vector (norm {norm!r})")
    return u / norm


def unit(v) -> np.ndarray:
    """Normalise ``v`` to unit length."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot normalise the zero vector")
    return v / norm


def angle_to_unit(phi: float) -> np.ndarray:
    return np.array([np.cos(phi), np.sin(phi)])


def _plane_rotation(u: np.ndarray) -> np.ndarray:
    # rotation in span{e_d, u} taking e_d to u; stable for u . e_d >= 0
    d = u.shape[0]
    e = np.zeros(d)
    e[-1] = 1.0
    c = u[-1]
    k = np.outer(u, e) - np.outer(e, u)
    return np.eye(d) + k + (k @ k) / (1.0 + c)


def rotation_to(u) -> np.ndarray:
    """Deterministic rotation matrix ``R`` with ``R @ e_d == u`` and ``det R == 1``.

    For ``u[-1] >= 0`` the rotation acts in the plane spanned by ``e_d`` and
    ``u``.  For the lower hemisphere the rotation for ``-u`` is composed with
    the diagonal matrix flipping the last two axes, which keeps the
    construction well conditioned near ``-e_d`` (where it equals that
    diagonal matrix).
    """
    u = as_unit(u, tol=1e-9)
    if u[-1] >= 0:
        return _plane_rotation(u)
    flip = np.ones(u.shape[0])
    flip[-2:] = -1.0
    return _plane_rotation(-u) * flip


def complement_basis(u) -> np.ndarray:
    """Columns spanning ``u``-perp: the first d-1 columns of ``rotation_to(u)``."""
    return rotation_to(u)[:, :-1]


def project_complement(x, u) -> np.ndarray:
    """Orthogonal projection of ``x`` (one point or rows of points) onto ``u``-perp."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return x - np.multiply.outer(x @ u, u)


@dataclass(frozen=True)
class Cylinder:
    """Cylinder centred at the origin with axis ``direction``, radius ``r`` and height ``2 t``."""

    direction: np.ndarray
    r: float
    t: float

    def __post_init__(self):
        object.__setattr__(self, "direction", as_unit(self.direction))
        if not (self.r > 0 and self.t > 0):
            raise ValueError("cylinder radius and half-height must be positive")


def cylinder_contains(x, c: Cylinder):
    """Closed membership test ``||p_{u-perp}(x)|| <= r`` and ``|x . u| <= t``."""
    x = np.asarray(x, dtype=float)
    along = x @ c.direction
    lateral = np.linalg.norm(project_complement(x, c.direction), axis=-1)
    return (lateral <= c.r) & (np.abs(along) <= c.t)


@dataclass(frozen=True)
class BoxWindow:
    """Axis-aligned box ``[lower_1, upper_1] x ... x [lower_d, upper_d]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).copy()
        hi = np.asarray(self.upper, dtype=float).copy()
        if lo.shape != hi.shape or lo.ndim != 1 or lo.shape[0] not in (2, 3):
            raise ValueError("window bounds must be two equal-length vectors of dimension 2 or 3")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("window bounds must be finite")
        if np.any(hi <= lo):
            raise ValueError("window upper bounds must exceed lower bounds")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "BoxWindow":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def centered(cls, half_sides) -> "BoxWindow":
        h = np.asarray(half_sides, dtype=float)
        return cls(-h, h)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.sides))

    def corners(self) -> np.ndarray:
        return np.array(list(product(*zip(self.lower, self.upper))), dtype=float)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def inflate(self, margin) -> "BoxWindow":
        return BoxWindow(self.lower - margin, self.upper + margin)

    def face_measures(self) -> np.ndarray:
        """``(d-1)``-volume of the box face orthogonal to each axis."""
        s = self.sides
        return np.array([np.prod(np.delete(s, i)) for i in range(self.dim)])

    def to_dict(self) -> dict:
        return {"dim": self.dim, "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BoxWindow":
        w = cls(d["lower"], d["upper"])
        if "dim" in d and int(d["dim"]) != w.dim:
            raise ValueError(f"window 'dim' is {d['dim']} but bounds have {w.dim} components")
        return w

    def __eq__(self, other):
        if not isinstance(other, BoxWindow):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))


@dataclass(frozen=True)
class DirectedLine:
    """Line ``{y + s u}`` with anchor ``y`` in ``H`` and direction ``u``."""

    anchor: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.anchor, dtype=float).copy()
        u = as_unit(self.direction)
        if y.shape != u.shape:
            raise ValueError("anchor and direction must have the same dimension")
        if u[-1] == 0:
            raise DegenerateDirectionError("line direction lies in H (last component is zero)")
        if y[-1] != 0:
            raise ValueError("anchor must lie in H (last coordinate exactly 0)")
        object.__setattr__(self, "anchor", y)
        object.__setattr__(self, "direction", u)

    @classmethod
    def through(cls, x, u) -> "DirectedLine":
        """Line with direction ``u`` passing through the point ``x``."""
        return cls(anchor_through(x, u), u)

    @property
    def dim(self) -> int:
        return self.anchor.shape[0]


def anchor_through(x, u) -> np.ndarray:
    """Intersection with ``H`` of the line through ``x`` with direction ``u``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(u[..., -1] == 0):
        raise DegenerateDirectionError("direction parallel to H")
    y = x - (x[..., -1] / u[..., -1])[..., None] * u
    y[..., -1] = 0.0
    return y


def clip_parameters(y, u, lower, upper):
    """Slab clipping of lines ``y + s u`` against a box.

    ``y`` and ``u`` broadcast over leading axes.  Returns ``(s_lo, s_hi)``;
    the line meets the closed box iff ``s_lo <= s_hi``.
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    shape = np.broadcast_shapes(y.shape, u.shape)[:-1]
    s_lo = np.full(shape, -np.inf)
    s_hi = np.full(shape, np.inf)
    for i in range(lower.shape[-1]):
        ui = u[..., i]
        yi = y[..., i]
        par = ui == 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            a = (lower[..., i] - yi) / ui
            b = (upper[..., i] - yi) / ui
        lo_i = np.where(par, np.where((yi >= lower[..., i]) & (yi <= upper[..., i]), -np.inf, np.inf), np.minimum(a, b))
        hi_i = np.where(par, np.where((yi >= lower[..., i]) & (yi <= upper[..., i]), np.inf, -np.inf), np.maximum(a, b))
        s_lo = np.maximum(s_lo, lo_i)
        s_hi = np.minimum(s_hi, hi_i)
    return s_lo, s_hi


def chord_length(y, u, w: BoxWindow):
    """Length of the intersection of the line(s) ``y + s u`` with ``w`` (``u`` unit)."""
    s_lo, s_hi = clip_parameters(y, u, w.lower, w.upper)
    return np.maximum(s_hi - s_lo, 0.0)


def line_hits_box(line: DirectedLine, w: BoxWindow) -> bool:
    s_lo, s_hi = clip_parameters(line.anchor, line.direction, w.lower, w.upper)
    return bool(s_lo <= s_hi)


def lines_hit_box(anchors, directions, w: BoxWindow) -> np.ndarray:
    s_lo, s_hi = clip_parameters(anchors, directions, w.lower, w.upper)
    return s_lo <= s_hi


def lateral_interval_2d(phi: float, a: float) -> tuple[float, float]:
    """Anchors of lines with angle ``phi`` hitting ``[-a, a]^2``.

    Closed interval on the first axis; the two branches correspond to
    directions in the first/third and second/fourth quadrants.
    """
    s = np.sin(phi)
    if abs(s) < 1e-15:
        raise DegenerateDirectionError("phi is a multiple of pi; the line is parallel to H")
    cot = np.cos(phi) / s
    if cot >= 0:
        return (-a * cot - a, a * cot + a)
    return (a * cot - a, a - a * cot)


def lateral_measure(u, w: BoxWindow) -> float:
    """Measure of ``J_u``: anchors in ``H`` whose line with direction ``u`` hits ``w``.

    Equals the shadow of the box cast along ``u`` onto ``H``, i.e. the
    projected area onto ``u``-perp divided by ``|u_d|``.
    """
    u = np.asarray(u, dtype=float)
    ud = abs(u[..., -1])
    if np.any(ud == 0):
        raise DegenerateDirectionError("direction parallel to H")
    return projected_measure(u, w) / ud


def projected_measure(u, w: BoxWindow):
    """``|u_d| * lambda(J_u)``: the (d-1)-volume of the projection of ``w`` onto ``u``-perp."""
    u = np.asarray(u, dtype=float)
    return np.abs(u) @ w.face_measures()


def max_projected_measure(w: BoxWindow) -> float:
    return float(np.linalg.norm(w.face_measures()))


def extent_along(u, w: BoxWindow) -> float:
    """Length of the projection of ``w`` onto a line with direction ``u``."""
    return float(np.abs(np.asarray(u, dtype=float)) @ w.sides)


def lateral_bounds(u, w: BoxWindow) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box (in the first d-1 coordinates) of ``J_u``."""
    ys = anchor_through(w.corners(), np.broadcast_to(np.asarray(u, dtype=float), (2 ** w.dim, w.dim)))
    return ys[:, :-1].min(axis=0), ys[:, :-1].max(axis=0)


def sample_lateral(u, w: BoxWindow, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform anchors on ``J_u`` (returned as points of ``H``)."""
    u = np.asarray(u, dtype=float)
    d = u.shape[0]
    lo, hi = lateral_bounds(u, w)
    m = 1 if size is None else size
    out = np.zeros((m, d))
    if d == 2:
        # J_u is exactly the interval between the projected corners
        out[:, 0] = rng.uniform(lo[0], hi[0], size=m)
    else:
        filled = 0
        while filled < m:
            batch = max(8, 2 * (m - filled))
            cand = np.zeros((batch, d))
            cand[:, :-1] = rng.uniform(lo, hi, size=(batch, d - 1))
            ok = lines_hit_box(cand, u, w)
            take = cand[ok][: m - filled]
            out[filled : filled + len(take)] = take
            filled += len(take)
    return out[0] if size is None else out
