"""Poisson line cluster point processes: parameters, von Mises-Fisher roses,
exact simulation in an extended window and theoretical moments."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, ive

from .geometry import (
    BoxWindow,
    DirectedLine,
    as_unit,
    chord_length,
    complement_basis,
    max_projected_measure,
    projected_measure,
    rotation_to,
    sample_lateral,
)
from .patterns import LatentRealization, PointPattern


@dataclass(frozen=True)
class PlcppParams:
    """Model parameters.

    rho_L:  mean line length per unit volume.
    mu, kappa:  von Mises-Fisher rose of directions.
    alpha:  intensity of the Poisson points on each line.
    sigma2:  variance per axis of the Gaussian lateral displacement.
    degenerate:  all lines parallel to ``mu`` (which must then be ±e_d).
    """

    rho_L: float
    mu: np.ndarray
    kappa: float
    alpha: float
    sigma2: float
    degenerate: bool = False

    def __post_init__(self):
        mu = as_unit(self.mu)
        object.__setattr__(self, "mu", mu)
        if not self.rho_L > 0:
            raise ValueError("rho_L must be positive")
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.degenerate:
            if not np.allclose(np.abs(mu[-1]), 1.0, atol=1e-12):
                raise ValueError("a degenerate process needs mu = ±e_d")
        elif not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def with_(self, **kw) -> "PlcppParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "rho_L": self.rho_L,
            "mu": self.mu.tolist(),
            "kappa": self.kappa,
            "alpha": self.alpha,
            "sigma2": self.sigma2,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlcppParams":
        mu = d["mu"]
        if np.ndim(mu) == 0:
            mu = [np.cos(np.deg2rad(mu)), np.sin(np.deg2rad(mu))]
        return cls(
            rho_L=float(d["rho_L"]),
            mu=np.asarray(mu, dtype=float),
            kappa=float(d.get("kappa", 0.0)),
            alpha=float(d["alpha"]),
            sigma2=float(d["sigma2"]),
            degenerate=bool(d.get("degenerate", False)),
        )


# ---------------------------------------------------------------- vMF rose

def vmf_log_norm(kappa: float, d: int) -> float:
    """log c_d(kappa), normalising constant w.r.t. surface measure."""
    if kappa < 1e-8:
        # c_d(kappa) = c_d(0) (1 + O(kappa^2)); the Bessel form underflows for tiny kappa
        return gammaln(d / 2) - np.log(2) - (d / 2) * np.log(np.pi)
    nu = d / 2 - 1
    return nu * np.log(kappa) - (d / 2) * np.log(2 * np.pi) - np.log(ive(nu, kappa)) - kappa


def vmf_log_density(u, mu, kappa: float):
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return vmf_log_norm(kappa, mu.shape[0]) + kappa * (u @ mu)


def vmf_density(u, mu, kappa: float):
    """von Mises-Fisher density on the unit sphere (surface measure)."""
    return np.exp(vmf_log_density(u, mu, kappa))


def sample_vmf(mu, kappa: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from the von Mises-Fisher distribution.

    Planar case: numpy's von Mises sampler around the angle of ``mu``.
    Spatial case: closed-form inverse transform for ``w = u . mu``, uniform
    azimuth, then rotation taking ``e_3`` to ``mu``.
    """
    mu = as_unit(mu)
    m = 1 if size is None else size
    if mu.shape[0] == 2:
        theta = np.arctan2(mu[1], mu[0])
        if kappa == 0:
            ang = rng.uniform(-np.pi, np.pi, size=m)
        else:
            ang = theta + rng.vonmises(0.0, kappa, size=m)
        out = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        v = rng.uniform(size=m)
        if kappa == 0:
            w = 2 * v - 1
        else:
            w = 1 + np.log(v + (1 - v) * np.exp(-2 * kappa)) / kappa
        w = np.clip(w, -1.0, 1.0)
        psi = rng.uniform(0, 2 * np.pi, size=m)
        s = np.sqrt(1 - w * w)
        local = np.column_stack([s * np.cos(psi), s * np.sin(psi), w])
        out = local @ rotation_to(mu).T
    return out[0] if size is None else out


@lru_cache(maxsize=16)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _gl_on(a: float, b: float, n: int):
    x, w = _gauss_legendre(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


@lru_cache(maxsize=32)
def _sphere_rule(d: int, n: int):
    if d == 2:
        phis, ws = [], []
        for q in range(4):
            x, w = _gl_on(q * np.pi / 2, (q + 1) * np.pi / 2, n)
            phis.append(x)
            ws.append(w)
        phi = np.concatenate(phis)
        nodes = np.column_stack([np.cos(phi), np.sin(phi)])
        weights = np.concatenate(ws)
    else:
        th, wth = zip(*(_gl_on(a, a + np.pi / 2, n) for a in (0.0, np.pi / 2)))
        th, wth = np.concatenate(th), np.concatenate(wth) * np.sin(np.concatenate(th))
        ps, wps = zip(*(_gl_on(q * np.pi / 2, (q + 1) * np.pi / 2, n) for q in range(4)))
        ps, wps = np.concatenate(ps), np.concatenate(wps)
        T, P = np.meshgrid(th, ps, indexing="ij")
        nodes = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)
        weights = np.outer(wth, wps).ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def direction_quadrature(d: int, kappa: float = 0.0, n: int | None = None):
    """Product Gauss-Legendre rule on the unit sphere (surface measure).

    Segments are split on the coordinate hyperplanes so integrands built
    from ``|u_i|`` are smooth on each piece.  The node count per segment
    grows with ``kappa`` to resolve concentrated roses.
    """
    if n is None:
        base = 256 if d == 2 else 64
        n = int(min(max(base, np.ceil(12 * np.sqrt(max(kappa, 0.0)))), 2048 if d == 2 else 384))
    return _sphere_rule(d, n)


def rose_expectation(params: PlcppParams, fn):
    """``E_R[fn(u)]`` under the rose (``fn`` maps an (m, d) array to (m, ...))."""
    if params.degenerate:
        return fn(params.mu[None, :])[0]
    nodes, weights = direction_quadrature(params.dim, params.kappa)
    dens = weights * vmf_density(nodes, params.mu, params.kappa)
    vals = fn(nodes)
    return np.tensordot(dens, vals, axes=(0, 0))


def beta_from_rose(params: PlcppParams) -> float:
    """Intensity of the phase-space Poisson process: ``rho_L E_R |u_d|``."""
    return float(params.rho_L * rose_expectation(params, lambda u: np.abs(u[:, -1])))


def phase_direction_weights(params: PlcppParams):
    """Direction distribution M of the phase process on the quadrature nodes.

    Returns ``(beta, nodes, masses)`` with ``masses`` summing to one.
    """
    nodes, weights = direction_quadrature(params.dim, params.kappa)
    r = weights * vmf_density(nodes, params.mu, params.kappa)
    m = r * np.abs(nodes[:, -1])
    return params.rho_L * m.sum(), nodes, m / m.sum()


def rose_from_phase(beta: float, nodes: np.ndarray, masses: np.ndarray):
    """Inverse map ``(beta, M) -> (rho_L, R)`` on a discrete direction set."""
    inv = masses / np.abs(nodes[:, -1])
    return beta * inv.sum(), inv / inv.sum()


def intensity_I(params: PlcppParams, w_ext: BoxWindow) -> float:
    """Expected number of lines hitting ``w_ext`` divided by ``rho_L``.

    ``I = int lambda(J_u) |u_d| f(u | mu, kappa) du``; the integrand is the
    projected volume of the window onto ``u``-perp.
    """
    if params.degenerate:
        return float(projected_measure(params.mu, w_ext))
    return float(rose_expectation(params, lambda u: projected_measure(u, w_ext)))


def intensity_theoretical(params: PlcppParams) -> float:
    return params.alpha * params.rho_L


def gaussian_convolution(dist2, sigma2: float, d: int):
    """Self-convolution of the (d-1)-dim isotropic normal density at squared distance ``dist2``."""
    return np.exp(-dist2 / (4 * sigma2)) / (4 * np.pi * sigma2) ** ((d - 1) / 2)


def pcf_theoretical(params: PlcppParams, x) -> np.ndarray:
    """Pair correlation ``g(x) = 1 + E_R[(k * k~)(p_{u-perp} x)] / rho_L`` for Gaussian kernels."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sq = np.einsum("ij,ij->i", x, x)

    def conv(u):
        along = u @ x.T
        return gaussian_convolution(np.maximum(sq[None, :] - along**2, 0.0), params.sigma2, params.dim)

    out = 1.0 + rose_expectation(params, conv) / params.rho_L
    return np.asarray(out)


# --------------------------------------------------------------- simulation

@dataclass
class LineSample:
    """Lines of the process that hit the extended window (phase representation)."""

    anchors: np.ndarray
    directions: np.ndarray
    window_ext: BoxWindow | None = None

    def __post_init__(self):
        d = self.anchors.shape[1] if self.anchors.ndim == 2 else self.directions.shape[-1]
        self.anchors = np.asarray(self.anchors, dtype=float).reshape(-1, d)
        self.directions = np.asarray(self.directions, dtype=float).reshape(-1, d)

    def __len__(self):
        return self.anchors.shape[0]

    @property
    def lines(self) -> list[DirectedLine]:
        return [DirectedLine(y, u) for y, u in zip(self.anchors, self.directions)]


def default_extended_window(w: BoxWindow, sigma: float, factor: float = 5.0) -> BoxWindow:
    """Inflate ``w`` laterally by ``factor * sigma`` (all axes)."""
    return w.inflate(factor * sigma)


def sample_directions(params: PlcppParams, w_ext: BoxWindow, count: int, rng: np.random.Generator,
                      exact: bool = True) -> np.ndarray:
    """Directions of lines hitting ``w_ext``: density ∝ |u_d| lambda(J_u) f(u).

    Proposals come from the rose and are accepted with probability
    ``|u_d| lambda(J_u) / sup``.  ``exact=False`` uses the bare ``|u_d|``
    acceptance, which ignores the ``lambda(J_u)`` factor.
    """
    d = params.dim
    if params.degenerate:
        return np.tile(params.mu, (count, 1))
    out = np.empty((count, d))
    filled = 0
    sup = max_projected_measure(w_ext)
    while filled < count:
        batch = max(16, 2 * (count - filled))
        u = sample_vmf(params.mu, params.kappa, rng, size=batch)
        acc = projected_measure(u, w_ext) / sup if exact else np.abs(u[:, -1])
        keep = u[(rng.uniform(size=batch) < acc) & (u[:, -1] != 0)][: count - filled]
        out[filled : filled + len(keep)] = keep
        filled += len(keep)
    return out


def sample_line_process(params: PlcppParams, w_ext: BoxWindow, rng: np.random.Generator,
                        exact: bool = True) -> LineSample:
    """Simulate the lines of the process that hit ``w_ext``."""
    count = int(rng.poisson(params.rho_L * intensity_I(params, w_ext)))
    dirs = sample_directions(params, w_ext, count, rng, exact=exact)
    anchors = np.zeros_like(dirs)
    for k in range(count):
        anchors[k] = sample_lateral(dirs[k], w_ext, rng)
    return LineSample(anchors, dirs, w_ext)


def simulate_on_lines(params: PlcppParams, lines: LineSample, w: BoxWindow, rng: np.random.Generator,
                      keep_latent: bool = True) -> LatentRealization:
    """Poisson points on each line's projection of ``w``, displaced laterally, restricted to ``w``.

    Each line draws from its own child generator, so the output does not
    depend on the order in which lines are processed.
    """
    d = w.dim
    sigma = np.sqrt(params.sigma2)
    corners = w.corners()
    children = rng.spawn(len(lines)) if len(lines) else []
    parents, displaced, kept, links = [], [], [], []
    for k, (y, u) in enumerate(zip(lines.anchors, lines.directions)):
        g = children[k]
        proj = (corners - y) @ u
        s_lo, s_hi = proj.min(), proj.max()
        m = int(g.poisson(params.alpha * (s_hi - s_lo)))
        s = np.sort(g.uniform(s_lo, s_hi, size=m))
        q = y + s[:, None] * u
        z = g.normal(scale=sigma, size=(m, d - 1))
        x = q + z @ complement_basis(u).T
        parents.append(q)
        displaced.append(x)
        inside = np.flatnonzero(w.contains(x))
        kept.append(x[inside])
        links.extend((k, int(i)) for i in inside)
    pts = np.concatenate(kept) if kept else np.zeros((0, d))
    pattern = PointPattern(pts, w)
    if not keep_latent:
        return LatentRealization(lines.lines, [], [], pattern, lines.window_ext, links)
    return LatentRealization(lines.lines, parents, displaced, pattern, lines.window_ext, links)


def simulate(params: PlcppParams, w: BoxWindow, w_ext: BoxWindow | None, rng: np.random.Generator,
             keep_latent: bool = True, exact: bool = True) -> LatentRealization:
    """Simulate the process restricted to ``w`` using lines that hit ``w_ext``."""
    if w_ext is None:
        w_ext = default_extended_window(w, np.sqrt(params.sigma2))
    if np.any(w.lower < w_ext.lower) or np.any(w.upper > w_ext.upper):
        raise ValueError("the extended window must contain the observation window")
    lines = sample_line_process(params, w_ext, rng, exact=exact)
    return simulate_on_lines(params, lines, w, rng, keep_latent=keep_latent)


def line_length_in(lines: LineSample, region: BoxWindow, directions_in=None) -> float:
    """Total length of the lines inside ``region``, optionally only for directions
    selected by the boolean callable ``directions_in``."""
    lengths = chord_length(lines.anchors, lines.directions, region)
    if directions_in is not None and len(lines):
        lengths = lengths * directions_in(lines.directions)
    return float(lengths.sum())
