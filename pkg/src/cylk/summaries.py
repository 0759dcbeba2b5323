"""Non-parametric summary statistics: cylindrical K-function, directional scans,
planar K, and the F, G, J functions used for model checking."""
from __future__ import annotations

import enum
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import BoxWindow, angle_to_unit, as_unit
from .patterns import PointPattern, translation_overlap


class InsufficientPointsError(ValueError):
    pass


class Correction(str, enum.Enum):
    TRANSLATION = "translation"
    COMBINED = "combined"


@dataclass
class SummaryCurve:
    """A summary function sampled on a strictly increasing argument grid."""

    args: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.args = np.asarray(self.args, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.args.ndim != 1 or self.args.shape != self.values.shape:
            raise ValueError("args and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.args) <= 0):
            raise ValueError("curve arguments must be strictly increasing")

    def __len__(self):
        return self.args.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.meta):
            buf.write(f"# {key}: {_meta_str(self.meta[key])}\n")
        buf.write("arg,value\n")
        for a, v in zip(self.args, self.values):
            buf.write(f"{float(a)!r},{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SummaryCurve":
        meta, args, values = {}, [], []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            elif line.strip() and line.strip() != "arg,value":
                a, v = line.split(",")
                args.append(float(a))
                values.append(float(v))
        return cls(np.array(args), np.array(values), meta)


def _meta_str(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(repr(float(x)) for x in v)
    if isinstance(v, enum.Enum):
        return str(v.value)
    return str(v)


def rho2_hat(p: PointPattern) -> float:
    """Estimate of the squared intensity, ``n (n - 1) / |W|^2``."""
    if p.n < 2:
        raise InsufficientPointsError(f"need at least 2 points, got {p.n}")
    return p.n * (p.n - 1) / p.window.volume**2


@dataclass
class PairTable:
    """Ordered pairs ``(i, j)``, ``i != j``, with difference vectors ``x_j - x_i``."""

    i: np.ndarray
    j: np.ndarray
    delta: np.ndarray
    pattern: PointPattern

    def __len__(self):
        return self.i.shape[0]


def pair_table(p: PointPattern, reach: float | None = None) -> PairTable:
    """Ordered pairs within distance ``reach`` (all pairs when ``reach`` is None).

    Pruning uses a k-d tree; pairs are returned in lexicographic ``(i, j)``
    order.  ``reach=None`` is the brute-force enumeration used as reference.
    """
    x = p.points
    n = p.n
    if reach is None:
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        keep = ii != jj
        i, j = ii[keep], jj[keep]
    else:
        tree = cKDTree(x)
        up = tree.query_pairs(reach, output_type="ndarray")
        if up.size == 0:
            up = np.zeros((0, 2), dtype=np.intp)
        i = np.concatenate([up[:, 0], up[:, 1]])
        j = np.concatenate([up[:, 1], up[:, 0]])
        order = np.lexsort((j, i))
        i, j = i[order], j[order]
    return PairTable(i, j, x[j] - x[i], p)


def _along_and_lateral2(delta: np.ndarray, u: np.ndarray):
    # explicit per-axis arithmetic keeps results independent of array length / BLAS
    d = u.shape[0]
    along = delta[:, 0] * u[0]
    for k in range(1, d):
        along = along + delta[:, k] * u[k]
    lat2 = np.zeros_like(along)
    for k in range(d):
        pk = delta[:, k] - along * u[k]
        lat2 = lat2 + pk * pk
    return along, lat2


def _combined_axis(u: np.ndarray) -> int:
    nz = np.flatnonzero(u != 0)
    if u.shape[0] != 3 or nz.size != 1 or abs(u[nz[0]]) != 1.0:
        raise ValueError("combined correction needs d = 3 and u equal to one of ±e1, ±e2, ±e3")
    return int(nz[0])


def pair_weights(pairs: PairTable, u: np.ndarray, correction: Correction) -> np.ndarray:
    w = pairs.pattern.window
    if correction is Correction.TRANSLATION:
        overlap = translation_overlap(w, pairs.delta)
        if np.any(overlap <= 0):
            raise ValueError("pair with zero translation overlap; points must lie in the window")
        return 1.0 / overlap
    k = _combined_axis(u)
    x1 = pairs.pattern.points[pairs.i]
    reflected = x1[:, k] - pairs.delta[:, k]
    temporal = 1.0 + ((reflected < w.lower[k]) | (reflected > w.upper[k]))
    spatial = w.sides[k]
    for a in range(3):
        if a != k:
            spatial = spatial * (w.sides[a] - np.abs(pairs.delta[:, a]))
    return temporal / spatial


def k_from_pairs(pairs: PairTable, u, r_grid, t: float, correction=Correction.TRANSLATION,
                 weights: np.ndarray | None = None) -> np.ndarray:
    """Weighted pair sums ``sum_{i != j} w(x_i, x_j) 1{x_j - x_i in C_u(r, t)}`` for each r.

    Sums are correctly rounded (``math.fsum``), hence independent of pair
    order and monotone in ``r`` and ``t``.
    """
    u = np.asarray(u, dtype=float)
    correction = Correction(correction)
    r_grid = np.asarray(r_grid, dtype=float)
    along, lat2 = _along_and_lateral2(pairs.delta, u)
    sel = np.abs(along) <= t
    if weights is None:
        weights = pair_weights(pairs, u, correction)
    lat2, wsel = lat2[sel], weights[sel]
    return np.array([math.fsum(wsel[lat2 <= r * r]) for r in r_grid])


def _check_k_args(p: PointPattern, r_grid, t):
    if p.n < 2:
        raise InsufficientPointsError(f"need at least 2 points, got {p.n}")
    r_grid = np.asarray(r_grid, dtype=float)
    if not t > 0:
        raise ValueError("t must be positive")
    if r_grid.ndim != 1 or r_grid.size == 0 or np.any(r_grid <= 0):
        raise ValueError("r grid must be a non-empty vector of positive values")
    return r_grid


def cylindrical_k(p: PointPattern, u, r_grid, t: float, correction=Correction.TRANSLATION,
                  naive: bool = False) -> SummaryCurve:
    """Estimate ``K_u(r, t)`` on ``r_grid`` with translation or combined edge correction.

    ``naive=True`` enumerates all ordered pairs instead of k-d tree pruning;
    both paths give bit-identical values.
    """
    r_grid = _check_k_args(p, r_grid, t)
    u = as_unit(u)
    if u.shape[0] != p.dim:
        raise ValueError("direction dimension does not match the pattern")
    correction = Correction(correction)
    reach = None if naive else math.sqrt(float(r_grid.max()) ** 2 + t * t) * (1 + 1e-9) + 1e-12
    pairs = pair_table(p, reach)
    sums = k_from_pairs(pairs, u, r_grid, t, correction)
    return SummaryCurve(
        r_grid,
        sums / rho2_hat(p),
        {"statistic": "K_cyl", "u": u, "t": t, "correction": correction},
    )


def cylindrical_k_multi(p: PointPattern, directions, r_grid, t: float,
                        correction=Correction.TRANSLATION) -> np.ndarray:
    """K estimates for several directions sharing one pair enumeration; shape (m, len(r_grid))."""
    r_grid = _check_k_args(p, r_grid, t)
    correction = Correction(correction)
    reach = math.sqrt(float(r_grid.max()) ** 2 + t * t) * (1 + 1e-9) + 1e-12
    pairs = pair_table(p, reach)
    rho2 = rho2_hat(p)
    shared = pair_weights(pairs, None, correction) if correction is Correction.TRANSLATION else None
    out = []
    for u in directions:
        u = as_unit(u)
        out.append(k_from_pairs(pairs, u, r_grid, t, correction, weights=shared) / rho2)
    return np.array(out)


def directional_scan(p: PointPattern, phis, r: float, t: float) -> SummaryCurve:
    """``K_{(cos phi, sin phi)}(r, t)`` as a function of the angle (planar patterns)."""
    if p.dim != 2:
        raise ValueError("directional scan is defined for planar patterns")
    phis = np.asarray(phis, dtype=float)
    _check_k_args(p, [r], t)
    dirs = [angle_to_unit(phi) for phi in phis]
    vals = cylindrical_k_multi(p, dirs, [r], t)[:, 0]
    return SummaryCurve(phis, vals, {"statistic": "K_scan", "r": r, "t": t, "correction": Correction.TRANSLATION})


def isotropic_k(p: PointPattern, r_grid) -> SummaryCurve:
    """Ripley-type K with translation weights (ball structuring element)."""
    r_grid = np.asarray(r_grid, dtype=float)
    if p.n < 2:
        raise InsufficientPointsError(f"need at least 2 points, got {p.n}")
    pairs = pair_table(p, float(r_grid.max()) * (1 + 1e-9) + 1e-12)
    dist2 = np.einsum("ij,ij->i", pairs.delta, pairs.delta)
    w = 1.0 / translation_overlap(p.window, pairs.delta)
    order = np.argsort(dist2, kind="stable")
    cum = np.cumsum(w[order])
    idx = np.searchsorted(dist2[order], r_grid * r_grid, side="right")
    sums = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return SummaryCurve(r_grid, sums / rho2_hat(p), {"statistic": "K_iso", "correction": Correction.TRANSLATION})


def _boundary_distance(x: np.ndarray, w: BoxWindow) -> np.ndarray:
    return np.minimum(x - w.lower, w.upper - x).min(axis=1)


def _eroded_volume(w: BoxWindow, s: np.ndarray) -> np.ndarray:
    out = np.ones_like(s)
    for a in w.sides:
        out = out * np.maximum(a - 2 * s, 0.0)
    return out


def _hanisch_cdf(dist: np.ndarray, bdist: np.ndarray, w: BoxWindow, r_grid: np.ndarray) -> np.ndarray:
    ok = (dist <= bdist) & np.isfinite(dist)
    vol = _eroded_volume(w, dist[ok])
    keep = vol > 0
    dist, weights = dist[ok][keep], 1.0 / vol[keep]
    total = weights.sum()
    if total <= 0:
        raise InsufficientPointsError("no distances usable after border correction")
    order = np.argsort(dist, kind="stable")
    cum = np.cumsum(weights[order])
    idx = np.searchsorted(dist[order], r_grid, side="right")
    vals = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0) / total
    # exactly one once every distance is covered (cumsum rounding would leave 1 - eps)
    return np.where(idx == dist.size, 1.0, np.minimum(vals, 1.0))


def lattice_anchors(w: BoxWindow, n_anchor: int = 10_000) -> np.ndarray:
    m = int(math.ceil(n_anchor ** (1.0 / w.dim)))
    axes = [lo + (np.arange(m) + 0.5) * (hi - lo) / m for lo, hi in zip(w.lower, w.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, w.dim)


def f_function(p: PointPattern, r_grid, n_anchor: int = 10_000) -> SummaryCurve:
    """Empty-space function from a regular anchor lattice, Hanisch-type border correction."""
    if p.n < 1:
        raise InsufficientPointsError("F needs a non-empty pattern")
    r_grid = np.asarray(r_grid, dtype=float)
    anchors = lattice_anchors(p.window, n_anchor)
    e, _ = cKDTree(p.points).query(anchors)
    vals = _hanisch_cdf(e, _boundary_distance(anchors, p.window), p.window, r_grid)
    return SummaryCurve(r_grid, vals, {"statistic": "F", "anchors": len(anchors)})


def g_function(p: PointPattern, r_grid) -> SummaryCurve:
    """Nearest-neighbour distance distribution, Hanisch border correction."""
    if p.n < 2:
        raise InsufficientPointsError("G needs at least two points (no finite nearest-neighbour distance)")
    r_grid = np.asarray(r_grid, dtype=float)
    dist, _ = cKDTree(p.points).query(p.points, k=2)
    vals = _hanisch_cdf(dist[:, 1], _boundary_distance(p.points, p.window), p.window, r_grid)
    return SummaryCurve(r_grid, vals, {"statistic": "G"})


def fgj_estimates(p: PointPattern, r_grid, n_anchor: int = 10_000):
    """F, G and J = (1 - G) / (1 - F); J is reported only where F < 1."""
    if p.dim != 2:
        raise ValueError("F/G/J estimates are implemented for planar patterns")
    if p.n < 1:
        raise InsufficientPointsError("empty pattern")
    f = f_function(p, r_grid, n_anchor)
    g = g_function(p, r_grid)
    ok = f.values < 1
    j = SummaryCurve(f.args[ok], (1 - g.values[ok]) / (1 - f.values[ok]), {"statistic": "J"})
    return f, g, j


def duplicate_count(p: PointPattern) -> int:
    if p.n == 0:
        return 0
    return p.n - np.unique(p.points, axis=0).shape[0]


def warn_duplicates(p: PointPattern) -> None:
    dups = duplicate_count(p)
    if dups:
        warnings.warn(f"pattern has {dups} coincident point(s); they are counted as distinct pairs", stacklevel=2)
