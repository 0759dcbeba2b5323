"""Bayesian inference for planar (and spatial) line cluster processes by
Metropolis-within-Gibbs with a birth-death-move sampler for the hidden lines.

The target is the posterior of ``(rho_L, mu, kappa, alpha, sigma2)`` and the
lines hitting the extended window, given the points in the observation
window.  All Hastings ratios are evaluated in log space from cached
per-line window integrals ``c_j`` and the kernel matrix ``F[j, i]``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtri

from .geometry import (
    BoxWindow,
    anchor_through,
    angle_to_unit,
    as_unit,
    chord_length,
    clip_parameters,
    complement_basis,
    sample_lateral,
)
from .patterns import PointPattern
from .plcpp import direction_quadrature, sample_vmf, vmf_log_density, vmf_log_norm
from .summaries import directional_scan

MOVES = ("mu", "kappa", "sigma2", "birth", "death", "move", "shift")


class ChainDivergedError(RuntimeError):
    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass
class BayesConfig:
    """Priors, proposal tunings and run length.

    ``kappa_prior`` is ``None`` for a fixed ``kappa`` or a dict
    ``{"kind": "gamma", "shape": a, "rate": b}`` /
    ``{"kind": "uniform", "max": m}``.  ``sigma2_max`` defaults to a quarter
    of the window diameter, squared.  ``integral`` selects how window
    integrals are evaluated: ``"mc"`` draws one fixed set of normal offsets
    for the whole chain, ``"quadrature"`` uses normal midpoint quantiles.
    """

    a1: float = 1.0
    b1: float = 1e-3
    a2: float = 1.0
    b2: float = 1e-3
    kappa: float = 40.0
    kappa_prior: dict | None = None
    sigma2_max: float | None = None
    kappa0: float = 200.0
    kappa_step: float = 5.0
    sigma2_step: float | None = None
    mc_n: int = 64
    integral: str = "mc"
    iterations: int = 10_000
    burn_in: int = 1_000
    thin: int = 1
    seed: int | None = None
    bdm_per_sweep: int = 10
    shifts_per_sweep: int = 10
    shift_scale: float = 0.5
    include_data: bool = True
    init: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("a1", "b1", "a2", "b2", "kappa0", "kappa_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kappa_prior is None and not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")
        if self.kappa_prior is not None and self.kappa_prior.get("kind") not in ("gamma", "uniform"):
            raise ValueError("kappa_prior kind must be 'gamma' or 'uniform'")
        if self.sigma2_max is not None and not self.sigma2_max > 0:
            raise ValueError("sigma2_max must be positive")
        if self.sigma2_step is not None and not self.sigma2_step > 0:
            raise ValueError("sigma2_step must be positive")
        if self.mc_n < 1:
            raise ValueError("mc_n must be at least 1")
        if self.integral not in ("mc", "quadrature"):
            raise ValueError("integral must be 'mc' or 'quadrature'")
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ValueError("need iterations >= 1 and 0 <= burn_in < iterations")
        if self.thin < 1 or self.bdm_per_sweep < 0 or self.shifts_per_sweep < 0:
            raise ValueError("thin must be >= 1 and per-sweep move counts non-negative")
        if not self.shift_scale > 0:
            raise ValueError("shift_scale must be positive")

    @property
    def kappa_fixed(self) -> bool:
        return self.kappa_prior is None

    @classmethod
    def from_dict(cls, d: dict | None) -> "BayesConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown bayes settings: {sorted(unknown)}")
        return cls(**d)


# ----------------------------------------------------------------- kernels

def kernel(points, anchors, directions, sigma2: float) -> np.ndarray:
    """``F[j, i]``: isotropic (d-1)-dim normal density of the lateral offset
    of ``points[i]`` from line ``j``."""
    points = np.atleast_2d(points)
    anchors = np.atleast_2d(anchors)
    directions = np.atleast_2d(directions)
    d = points.shape[1]
    diff = points[None, :, :] - anchors[:, None, :]
    along = np.einsum("jid,jd->ji", diff, directions)
    lat2 = np.maximum(np.einsum("jid,jid->ji", diff, diff) - along * along, 0.0)
    return np.exp(-lat2 / (2 * sigma2)) / (2 * np.pi * sigma2) ** ((d - 1) / 2)


class WindowIntegrator:
    """Evaluates ``c = int_W f(p_{u-perp}(x - y) | sigma2) dx`` for lines.

    In line-aligned coordinates the integral is the expected chord length
    of ``W`` cut by the line shifted laterally by ``z ~ N(0, sigma2 I)``.
    The standard normal offsets are drawn once, so ``c`` is a deterministic
    function of the line and ``sigma2``.
    """

    def __init__(self, window: BoxWindow, mc_n: int = 64, mode: str = "mc", rng=None):
        self.window = window
        d = window.dim
        if mode == "mc":
            rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
            self.eps = rng.standard_normal((mc_n, d - 1))
        elif mode == "quadrature":
            q = ndtri((np.arange(mc_n) + 0.5) / mc_n)
            self.eps = q[:, None] if d == 2 else np.stack(np.meshgrid(q, q, indexing="ij"), -1).reshape(-1, 2)
        else:
            raise ValueError("mode must be 'mc' or 'quadrature'")
        self.mode = mode

    def _bases(self, directions: np.ndarray) -> np.ndarray:
        if directions.shape[1] == 2:
            # the rotation taking e_2 to u sends e_1 to (u_2, -u_1)
            return np.stack([directions[:, 1], -directions[:, 0]], axis=-1)[:, :, None]
        return np.array([complement_basis(u) for u in directions])

    def chords_many(self, anchors, directions, sigma2: float) -> np.ndarray:
        anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        offsets = np.einsum("me,kde->kmd", self.eps, self._bases(directions))
        shifted = anchors[:, None, :] + np.sqrt(sigma2) * offsets
        return chord_length(shifted, directions[:, None, :], self.window)

    def chords(self, anchor, direction, sigma2: float) -> np.ndarray:
        return self.chords_many(anchor, direction, sigma2)[0]

    def many(self, anchors, directions, sigma2: float) -> np.ndarray:
        return self.chords_many(anchors, directions, sigma2).mean(axis=1)

    def __call__(self, anchor, direction, sigma2: float) -> float:
        return float(self.many(anchor, direction, sigma2)[0])

    def with_se(self, anchor, direction, sigma2: float) -> tuple[float, float]:
        ch = self.chords(anchor, direction, sigma2)
        se = float(np.std(ch, ddof=1) / np.sqrt(ch.size)) if ch.size > 1 else float("nan")
        return float(ch.mean()), se


def window_kernel_integral(line, sigma2: float, w: BoxWindow, mc_n: int = 64, rng=None) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of the window integral of one line's kernel."""
    if mc_n < 1:
        raise ValueError("mc_n must be at least 1")
    return WindowIntegrator(w, mc_n, "mc", rng).with_se(line.anchor, line.direction, sigma2)


# ------------------------------------------------------------------- model

class Model:
    """Data, configuration and extended window, plus the ``I(mu, kappa)`` cache."""

    def __init__(self, data: PointPattern, config: BayesConfig, w_ext: BoxWindow, integrator=None):
        w = data.window
        if w_ext.dim != w.dim or np.any(w.lower < w_ext.lower) or np.any(w.upper > w_ext.upper):
            raise ValueError("the extended window must contain the observation window")
        self.data = data
        self.config = config
        self.w_ext = w_ext
        self.dim = w.dim
        self.sigma2_max = config.sigma2_max if config.sigma2_max is not None else (w.diameter / 4) ** 2
        self.sigma2_step = config.sigma2_step if config.sigma2_step is not None else 0.1 * self.sigma2_max
        if integrator is None:
            seed = np.random.SeedSequence(config.seed).spawn(2)[1]
            integrator = WindowIntegrator(w, config.mc_n, config.integral, np.random.default_rng(seed))
        self.integral = integrator
        self._faces = w_ext.face_measures()
        self._I_key = None
        self._I_val = None
        self.I_evaluations = 0

    @property
    def points(self) -> np.ndarray:
        return self.data.points if self.config.include_data else self.data.points[:0]

    def I(self, mu, kappa: float) -> float:
        """``I(mu, kappa)`` for ``w_ext``; recomputed only when its arguments change."""
        key = (np.asarray(mu, dtype=float).tobytes(), float(kappa))
        if key != self._I_key:
            nodes, weights = direction_quadrature(self.dim, kappa)
            dens = np.exp(vmf_log_density(nodes, mu, kappa))
            self._I_val = float(np.sum(weights * dens * (np.abs(nodes) @ self._faces)))
            self._I_key = key
            self.I_evaluations += 1
        return self._I_val

    def log_prior_kappa(self, kappa: float) -> float:
        pr = self.config.kappa_prior
        if pr is None:
            return 0.0
        if kappa <= 0:
            return -np.inf
        if pr["kind"] == "gamma":
            a, b = float(pr["shape"]), float(pr["rate"])
            return a * math.log(b) - gammaln(a) + (a - 1) * math.log(kappa) - b * kappa
        return -math.log(pr["max"]) if kappa <= pr["max"] else -np.inf

    def log_prior_sigma2(self, s2: float) -> float:
        return -math.log(self.sigma2_max) if 0 < s2 <= self.sigma2_max else -np.inf

    def log_prior(self, st: "McmcState") -> float:
        c = self.config
        lp = (c.a1 * math.log(c.b1) - gammaln(c.a1) + (c.a1 - 1) * math.log(st.alpha) - c.b1 * st.alpha
              + c.a2 * math.log(c.b2) - gammaln(c.a2) + (c.a2 - 1) * math.log(st.rho_L) - c.b2 * st.rho_L)
        # uniform prior on the sphere
        lp += vmf_log_norm(0.0, self.dim)
        return lp + self.log_prior_kappa(st.kappa) + self.log_prior_sigma2(st.sigma2)


def _row_sum(F: np.ndarray) -> np.ndarray:
    # fixed left-to-right order so that removing the last row restores earlier sums bit for bit
    acc = np.zeros(F.shape[1])
    for row in F:
        acc = acc + row
    return acc


@dataclass
class McmcState:
    rho_L: float
    mu: np.ndarray
    kappa: float
    alpha: float
    sigma2: float
    anchors: np.ndarray
    directions: np.ndarray
    c: np.ndarray = None
    F: np.ndarray = None
    s: np.ndarray = None

    @property
    def k(self) -> int:
        return self.anchors.shape[0]

    @classmethod
    def build(cls, model: Model, rho_L, mu, kappa, alpha, sigma2, anchors, directions) -> "McmcState":
        d = model.dim
        st = cls(float(rho_L), as_unit(mu), float(kappa), float(alpha), float(sigma2),
                 np.asarray(anchors, dtype=float).reshape(-1, d).copy(),
                 np.asarray(directions, dtype=float).reshape(-1, d).copy())
        if st.k < 1:
            raise ValueError("the state needs at least one line")
        st.refresh(model)
        return st

    def refresh(self, model: Model) -> None:
        self.c = model.integral.many(self.anchors, self.directions, self.sigma2)
        self.F = kernel(model.points, self.anchors, self.directions, self.sigma2)
        self.s = _row_sum(self.F)

    def copy(self) -> "McmcState":
        return McmcState(self.rho_L, self.mu.copy(), self.kappa, self.alpha, self.sigma2, self.anchors.copy(),
                         self.directions.copy(), self.c.copy(), self.F.copy(), self.s.copy())

    def cache_error(self, model: Model) -> float:
        """Largest relative deviation of the caches from a fresh evaluation."""
        fresh = self.copy()
        fresh.refresh(model)
        errs = [0.0]
        for a, b in ((self.c, fresh.c), (self.F, fresh.F), (self.s, fresh.s)):
            if a.size:
                errs.append(float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))))
        return max(errs)


# -------------------------------------------------------------- posterior

def log_unnormalized_posterior(state: McmcState, model: Model) -> float:
    """Log posterior up to a constant, evaluated from scratch (no caches)."""
    d = model.dim
    w = model.data.window
    pts = model.points
    c = model.integral.many(state.anchors, state.directions, state.sigma2)
    F = kernel(pts, state.anchors, state.directions, state.sigma2)
    lam = state.alpha * F.sum(axis=0)
    if model.config.include_data:
        if np.any(lam <= 0):
            return -np.inf
        ll = w.volume - state.alpha * c.sum() + np.sum(np.log(lam))
    else:
        ll = 0.0
    hits = clip_parameters(state.anchors, state.directions, model.w_ext.lower, model.w_ext.upper)
    if np.any(hits[0] > hits[1]) or np.any(state.directions[:, -1] == 0):
        return -np.inf
    lines = (-state.rho_L * model.I(state.mu, state.kappa)
             + state.k * (math.log(2) + (d / 2) * math.log(math.pi) - gammaln(d / 2) + math.log(state.rho_L))
             + np.sum(vmf_log_density(state.directions, state.mu, state.kappa)))
    return float(ll + lines + model.log_prior(state))


def _log_post_cached(state: McmcState, model: Model) -> float:
    d = model.dim
    ll = 0.0
    if model.config.include_data:
        with np.errstate(divide="ignore"):
            ll = model.data.window.volume - state.alpha * state.c.sum() + np.sum(np.log(state.alpha * state.s))
    lines = (-state.rho_L * model.I(state.mu, state.kappa)
             + state.k * (math.log(2) + (d / 2) * math.log(math.pi) - gammaln(d / 2) + math.log(state.rho_L))
             + np.sum(vmf_log_density(state.directions, state.mu, state.kappa)))
    return float(ll + lines + model.log_prior(state))


def _log_lik_birth(alpha: float, s: np.ndarray, c_new: float, f_new: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(f_new > 0, np.log1p(f_new / s), 0.0)
    return float(-alpha * c_new + np.sum(terms))


def _log_lik_swap(alpha: float, s_red: np.ndarray, c_new: float, f_new: np.ndarray, c_old: float,
                  f_old: np.ndarray) -> float:
    # direct form of a ratio of two birth likelihood terms; stays finite when s_red has zeros
    with np.errstate(divide="ignore"):
        return float(-alpha * (c_new - c_old) + np.sum(np.log(s_red + f_new) - np.log(s_red + f_old)))


def log_r_birth(state: McmcState, model: Model, anchor, direction, *, s=None, k=None,
                c_new=None, f_new=None) -> float:
    """log Hastings ratio for adding the line ``(anchor, direction)``.

    ``s`` and ``k`` default to the state's kernel sums and line count; death
    and move ratios pass the values of the state with one line removed.
    """
    s = state.s if s is None else s
    k = state.k if k is None else k
    hit = clip_parameters(anchor, direction, model.w_ext.lower, model.w_ext.upper)
    if direction[-1] == 0 or hit[0] > hit[1]:
        return -np.inf
    out = math.log(state.rho_L) + math.log(float(np.abs(direction) @ model._faces)) - math.log(k + 1)
    if model.config.include_data:
        if c_new is None:
            c_new = model.integral(anchor, direction, state.sigma2)
        if f_new is None:
            f_new = kernel(model.points, anchor, direction, state.sigma2)[0]
        out += _log_lik_birth(state.alpha, s, c_new, f_new)
    return float(out)


def log_r_death(state: McmcState, model: Model, j: int) -> float:
    """log Hastings ratio for deleting line ``j`` (requires ``k > 1``)."""
    keep = np.arange(state.k) != j
    s_red = _row_sum(state.F[keep])
    return -log_r_birth(state, model, state.anchors[j], state.directions[j], s=s_red, k=state.k - 1,
                        c_new=state.c[j], f_new=state.F[j])


def log_r_move(state: McmcState, model: Model, j: int, anchor, direction, c_new=None, f_new=None) -> float:
    """log ratio of the birth ratios of the new and the old line ``j`` on the
    state without line ``j``."""
    keep = np.arange(state.k) != j
    hit = clip_parameters(anchor, direction, model.w_ext.lower, model.w_ext.upper)
    if direction[-1] == 0 or hit[0] > hit[1]:
        return -np.inf
    out = math.log(float(np.abs(direction) @ model._faces)) - math.log(float(np.abs(state.directions[j]) @ model._faces))
    if model.config.include_data:
        if c_new is None:
            c_new = model.integral(anchor, direction, state.sigma2)
        if f_new is None:
            f_new = kernel(model.points, anchor, direction, state.sigma2)[0]
        s_red = _row_sum(state.F[keep])
        out += _log_lik_swap(state.alpha, s_red, c_new, f_new, state.c[j], state.F[j])
    return float(out)


def log_r_shift(state: McmcState, model: Model, j: int, anchor, direction, c_new=None, f_new=None) -> float:
    """log ratio for replacing line ``j`` by a symmetric random-walk proposal.

    The proposal is symmetric in ``dy du`` while the posterior is a density
    w.r.t. ``|u_d| dy du``, hence the ``|u_d|`` Jacobian.
    """
    hit = clip_parameters(anchor, direction, model.w_ext.lower, model.w_ext.upper)
    if direction[-1] == 0 or hit[0] > hit[1]:
        return -np.inf
    out = (vmf_log_density(direction, state.mu, state.kappa) - vmf_log_density(state.directions[j], state.mu, state.kappa)
           + math.log(abs(direction[-1])) - math.log(abs(state.directions[j][-1])))
    if model.config.include_data:
        if c_new is None:
            c_new = model.integral(anchor, direction, state.sigma2)
        if f_new is None:
            f_new = kernel(model.points, anchor, direction, state.sigma2)[0]
        keep = np.arange(state.k) != j
        out += _log_lik_swap(state.alpha, _row_sum(state.F[keep]), c_new, f_new, state.c[j], state.F[j])
    return float(out)


def shift_proposal(state: McmcState, model: Model, j: int, rng: np.random.Generator):
    """Local perturbation of line ``j``: normal step of the anchor within ``H``
    and a von Mises-Fisher step of the direction, both scaled by ``sigma``."""
    sigma = math.sqrt(state.sigma2) * model.config.shift_scale
    y = state.anchors[j].copy()
    y[:-1] += sigma * rng.standard_normal(model.dim - 1)
    ang = 2 * sigma / (0.5 * model.data.window.diameter)
    u = sample_vmf(state.directions[j], 1.0 / ang**2, rng)
    return y, u


def mh_shift_line(state: McmcState, model: Model, rng: np.random.Generator, counters=None) -> McmcState:
    j = int(rng.integers(state.k))
    y, u = shift_proposal(state, model, j, rng)
    c_new = f_new = None
    if u[-1] != 0 and model.config.include_data:
        c_new = model.integral(y, u, state.sigma2)
        f_new = kernel(model.points, y, u, state.sigma2)[0]
    ok = _accept(log_r_shift(state, model, j, y, u, c_new, f_new), rng)
    if ok:
        state.anchors[j], state.directions[j] = y, u
        if c_new is None:
            c_new = model.integral(y, u, state.sigma2)
            f_new = kernel(model.points, y, u, state.sigma2)[0]
        state.c[j] = c_new
        state.F[j] = f_new
        state.s = _row_sum(state.F)
    if counters is not None:
        counters.add("shift", ok)
    return state


def log_r_mu(state: McmcState, model: Model, mu_new) -> float:
    I0 = model.I(state.mu, state.kappa)
    I1 = model.I(mu_new, state.kappa)
    dirs = state.directions
    return float(state.rho_L * (I0 - I1) + state.kappa * np.sum(dirs @ mu_new - dirs @ state.mu))


def log_r_kappa(state: McmcState, model: Model, kappa_new: float) -> float:
    if not kappa_new > 0:
        return -np.inf
    lp = model.log_prior_kappa(kappa_new) - model.log_prior_kappa(state.kappa)
    if not np.isfinite(lp):
        return -np.inf
    dI = model.I(state.mu, state.kappa) - model.I(state.mu, kappa_new)
    dl = np.sum(vmf_log_density(state.directions, state.mu, kappa_new)
                - vmf_log_density(state.directions, state.mu, state.kappa))
    return float(lp + state.rho_L * dI + dl)


def log_r_sigma2(state: McmcState, model: Model, sigma2_new: float, c_new=None, F_new=None) -> float:
    if not sigma2_new > 0:
        return -np.inf
    lp = model.log_prior_sigma2(sigma2_new) - model.log_prior_sigma2(state.sigma2)
    if not np.isfinite(lp) or not model.config.include_data:
        return float(lp)
    if c_new is None:
        c_new = model.integral.many(state.anchors, state.directions, sigma2_new)
    if F_new is None:
        F_new = kernel(model.points, state.anchors, state.directions, sigma2_new)
    s_new = _row_sum(F_new)
    with np.errstate(divide="ignore"):
        return float(lp + state.alpha * (state.c.sum() - c_new.sum()) + np.sum(np.log(s_new) - np.log(state.s)))


# ----------------------------------------------------------------- updates

class Counters:
    def __init__(self):
        self.accepted = dict.fromkeys(MOVES, 0)
        self.proposed = dict.fromkeys(MOVES, 0)
        self.null = 0

    def add(self, move: str, ok: bool):
        self.proposed[move] += 1
        self.accepted[move] += int(ok)

    def rates(self) -> dict:
        return {m: (self.accepted[m] / self.proposed[m] if self.proposed[m] else float("nan")) for m in MOVES}


def _accept(log_r: float, rng: np.random.Generator) -> bool:
    # always draw, so the stream position does not depend on the ratio
    u = rng.uniform()
    return bool(log_r >= 0 or (log_r > -np.inf and math.log(u) < log_r))


def gibbs_update_alpha(state: McmcState, model: Model, rng: np.random.Generator) -> McmcState:
    cfg = model.config
    if cfg.include_data:
        shape, rate = cfg.a1 + model.data.n, cfg.b1 + state.c.sum()
    else:
        shape, rate = cfg.a1, cfg.b1
    state.alpha = float(rng.gamma(shape, 1.0 / rate))
    return state


def gibbs_update_rho_L(state: McmcState, model: Model, rng: np.random.Generator) -> McmcState:
    cfg = model.config
    state.rho_L = float(rng.gamma(cfg.a2 + state.k, 1.0 / (cfg.b2 + model.I(state.mu, state.kappa))))
    return state


def mh_update_mu(state: McmcState, model: Model, rng: np.random.Generator, counters=None) -> McmcState:
    prop = sample_vmf(state.mu, model.config.kappa0, rng)
    ok = _accept(log_r_mu(state, model, prop), rng)
    if ok:
        state.mu = prop
    if counters is not None:
        counters.add("mu", ok)
    return state


def mh_update_kappa(state: McmcState, model: Model, rng: np.random.Generator, counters=None) -> McmcState:
    if model.config.kappa_fixed:
        return state
    prop = state.kappa + model.config.kappa_step * rng.standard_normal()
    ok = _accept(log_r_kappa(state, model, prop), rng)
    if ok:
        state.kappa = float(prop)
    if counters is not None:
        counters.add("kappa", ok)
    return state


def mh_update_sigma2(state: McmcState, model: Model, rng: np.random.Generator, counters=None) -> McmcState:
    prop = state.sigma2 + model.sigma2_step * rng.standard_normal()
    c_new = F_new = None
    if 0 < prop <= model.sigma2_max and model.config.include_data:
        c_new = model.integral.many(state.anchors, state.directions, prop)
        F_new = kernel(model.points, state.anchors, state.directions, prop)
    ok = _accept(log_r_sigma2(state, model, prop, c_new, F_new), rng)
    if ok:
        state.sigma2 = float(prop)
        if c_new is not None:
            state.c, state.F, state.s = c_new, F_new, _row_sum(F_new)
        else:
            state.refresh(model)
    if counters is not None:
        counters.add("sigma2", ok)
    return state


def propose_line(state: McmcState, model: Model, rng: np.random.Generator):
    """Birth proposal: ``u`` from the rose, ``y`` uniform on ``J_u`` of ``w_ext``."""
    u = sample_vmf(state.mu, state.kappa, rng)
    if u[-1] == 0:
        return None, u
    return sample_lateral(u, model.w_ext, rng), u


def birth_death_move(state: McmcState, model: Model, rng: np.random.Generator, counters=None) -> McmcState:
    kind = ("birth", "death", "move")[int(rng.integers(3))]
    if kind == "birth":
        y, u = propose_line(state, model, rng)
        if y is None:
            ok = _accept(-np.inf, rng)
        else:
            c_new = model.integral(y, u, state.sigma2)
            f_new = kernel(model.points, y, u, state.sigma2)[0]
            ok = _accept(log_r_birth(state, model, y, u, c_new=c_new, f_new=f_new), rng)
            if ok:
                state.anchors = np.vstack([state.anchors, y])
                state.directions = np.vstack([state.directions, u])
                state.c = np.append(state.c, c_new)
                state.F = np.vstack([state.F, f_new[None, :]])
                state.s = _row_sum(state.F)
    elif kind == "death":
        if state.k == 1:
            if counters is not None:
                counters.null += 1
            return state
        j = int(rng.integers(state.k))
        ok = _accept(log_r_death(state, model, j), rng)
        if ok:
            keep = np.arange(state.k) != j
            state.anchors, state.directions = state.anchors[keep], state.directions[keep]
            state.c, state.F = state.c[keep], state.F[keep]
            state.s = _row_sum(state.F)
    else:
        j = int(rng.integers(state.k))
        y, u = propose_line(state, model, rng)
        if y is None:
            ok = _accept(-np.inf, rng)
        else:
            c_new = model.integral(y, u, state.sigma2)
            f_new = kernel(model.points, y, u, state.sigma2)[0]
            ok = _accept(log_r_move(state, model, j, y, u, c_new, f_new), rng)
            if ok:
                state.anchors[j], state.directions[j] = y, u
                state.c[j] = c_new
                state.F[j] = f_new
                state.s = _row_sum(state.F)
    if counters is not None:
        counters.add(kind, ok)
    return state


# ------------------------------------------------------------------ chains

@dataclass
class McmcTrace:
    iterations: np.ndarray
    rho_L: np.ndarray
    mu: np.ndarray
    kappa: np.ndarray
    alpha: np.ndarray
    sigma2: np.ndarray
    k: np.ndarray
    log_post: np.ndarray
    lines: list
    acceptance: dict
    null_moves: int = 0

    @property
    def phi_deg(self) -> np.ndarray:
        """Direction angle of ``mu`` in degrees (planar chains)."""
        return np.degrees(np.arctan2(self.mu[:, 1], self.mu[:, 0]))

    @property
    def rho(self) -> np.ndarray:
        return self.alpha * self.rho_L

    def columns(self) -> list[str]:
        mu_cols = ["phi"] if self.mu.shape[1] == 2 else ["mu_x", "mu_y", "mu_z"]
        return ["iteration", "rho_L", *mu_cols, "kappa", "alpha", "sigma2", "k", "log_post"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns()) + "\n")
        mu_part = self.phi_deg[:, None] if self.mu.shape[1] == 2 else self.mu
        for r in range(self.iterations.shape[0]):
            row = [str(int(self.iterations[r])), repr(float(self.rho_L[r]))]
            row += [repr(float(v)) for v in mu_part[r]]
            row += [repr(float(self.kappa[r])), repr(float(self.alpha[r])), repr(float(self.sigma2[r])),
                    str(int(self.k[r])), repr(float(self.log_post[r]))]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def axial_mean_deg(phi_deg) -> float:
    """Mean of undirected angles (period 180 degrees), in ``[0, 180)``."""
    a = np.radians(2 * np.asarray(phi_deg, dtype=float))
    return float(np.degrees(np.arctan2(np.sin(a).mean(), np.cos(a).mean())) / 2 % 180)


def initial_direction(data: PointPattern, sigma: float, n_angles: int = 180) -> np.ndarray:
    """Planar start for ``mu``: the angle maximising the directional K scan.

    Angles avoid 0 and 180 degrees so the direction is never parallel to ``H``.
    """
    if data.dim != 2 or data.n < 2:
        return np.eye(data.dim)[-1]
    phis = (np.arange(n_angles) + 0.5) * np.pi / n_angles
    t = 0.1 * data.window.diameter
    scan = directional_scan(data, phis, 2 * sigma, t)
    return angle_to_unit(phis[int(np.argmax(scan.values))])


def _nn_distance(points: np.ndarray) -> float:
    from scipy.spatial import cKDTree

    if points.shape[0] < 2:
        return 0.0
    dist, _ = cKDTree(points).query(points, k=2)
    return float(np.median(dist[:, 1]))


def initial_state(model: Model, rng: np.random.Generator) -> McmcState:
    """Greedy start: lines with direction ``mu0`` through the points with the
    most neighbours along ``mu0``, until every point is within three ``sigma``
    of a line (and at least ``k0`` lines are placed when ``rho_L`` is given)."""
    cfg = model.config
    init = cfg.init
    data = model.data
    pts = data.points
    sigma2 = float(init.get("sigma2", min((0.5 * _nn_distance(pts)) ** 2 or 0.25 * model.sigma2_max,
                                          0.25 * model.sigma2_max)))
    sigma = math.sqrt(sigma2)
    if "mu" in init:
        mu = as_unit(init["mu"])
    elif "phi" in init:
        mu = angle_to_unit(math.radians(init["phi"]))
    else:
        mu = initial_direction(data, sigma)
    kappa = float(init.get("kappa", cfg.kappa if cfg.kappa_fixed else 1.0))
    I0 = model.I(mu, kappa)
    k0 = max(1, round(init["rho_L"] * I0)) if "rho_L" in init else 1
    anchors = []
    if pts.shape[0]:
        diff = pts[:, None, :] - pts[None, :, :]
        along = diff @ mu
        lat2 = np.einsum("ijd,ijd->ij", diff, diff) - along**2
        score = np.sum((lat2 <= (2 * sigma) ** 2), axis=1)
        covered = np.zeros(pts.shape[0], dtype=bool)
        order = np.lexsort((np.arange(pts.shape[0]), -score))
        for i in order:
            if covered[i]:
                continue
            anchors.append(anchor_through(pts[i], mu))
            covered |= lat2[i] <= (3 * sigma) ** 2
        while len(anchors) < k0:
            anchors.append(sample_lateral(mu, model.w_ext, rng))
    else:
        anchors = list(sample_lateral(mu, model.w_ext, rng, size=k0))
    anchors = np.array(anchors)
    dirs = np.tile(mu, (anchors.shape[0], 1))
    k = anchors.shape[0]
    rho_L = float(init.get("rho_L", k / I0))
    c = model.integral.many(anchors, dirs, sigma2)
    alpha = float(init.get("alpha", data.n / c.sum() if data.n and c.sum() > 0 else cfg.a1 / cfg.b1))
    return McmcState.build(model, rho_L, mu, kappa, alpha, sigma2, anchors, dirs)


def sweep(state: McmcState, model: Model, rng: np.random.Generator, counters: Counters) -> McmcState:
    gibbs_update_alpha(state, model, rng)
    gibbs_update_rho_L(state, model, rng)
    mh_update_mu(state, model, rng, counters)
    mh_update_kappa(state, model, rng, counters)
    mh_update_sigma2(state, model, rng, counters)
    for _ in range(model.config.bdm_per_sweep):
        birth_death_move(state, model, rng, counters)
    for _ in range(model.config.shifts_per_sweep):
        mh_shift_line(state, model, rng, counters)
    return state


def run_chain(data: PointPattern, config: BayesConfig, w_ext: BoxWindow, rng=None,
              state: McmcState | None = None, model: Model | None = None, progress=None) -> McmcTrace:
    """Run the sampler and record every ``thin``-th sweep after burn-in."""
    if config.include_data and data.n < 1:
        raise ValueError("the sampler needs at least one data point")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0])
    model = model or Model(data, config, w_ext)
    state = state or initial_state(model, rng)
    counters = Counters()
    rec = {key: [] for key in ("it", "rho_L", "mu", "kappa", "alpha", "sigma2", "k", "lp")}
    lines = []
    for it in range(1, config.iterations + 1):
        sweep(state, model, rng, counters)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            lp = _log_post_cached(state, model)
            if math.isnan(lp):
                raise ChainDivergedError(f"log posterior is NaN at iteration {it}", {
                    "iteration": it, "rho_L": state.rho_L, "mu": state.mu.tolist(), "kappa": state.kappa,
                    "alpha": state.alpha, "sigma2": state.sigma2, "k": state.k})
            for key, v in zip(rec, (it, state.rho_L, state.mu.copy(), state.kappa, state.alpha, state.sigma2,
                                    state.k, lp)):
                rec[key].append(v)
            lines.append((state.anchors.copy(), state.directions.copy()))
        if progress is not None:
            progress(it, state)
    return McmcTrace(
        iterations=np.array(rec["it"], dtype=int),
        rho_L=np.array(rec["rho_L"]),
        mu=np.array(rec["mu"]).reshape(-1, model.dim),
        kappa=np.array(rec["kappa"]),
        alpha=np.array(rec["alpha"]),
        sigma2=np.array(rec["sigma2"]),
        k=np.array(rec["k"], dtype=int),
        log_post=np.array(rec["lp"]),
        lines=lines,
        acceptance=counters.rates(),
        null_moves=counters.null,
    )


# ------------------------------------------------------------------ raster

def _cells(w: BoxWindow, resolution):
    nx, ny = (resolution, resolution) if np.ndim(resolution) == 0 else map(int, resolution)
    xs = np.linspace(w.lower[0], w.upper[0], nx + 1)
    ys = np.linspace(w.lower[1], w.upper[1], ny + 1)
    lo = np.stack(np.meshgrid(xs[:-1], ys[:-1], indexing="ij"), -1)
    hi = np.stack(np.meshgrid(xs[1:], ys[1:], indexing="ij"), -1)
    return nx, ny, lo, hi


def line_density_raster(samples, w: BoxWindow, resolution=100) -> np.ndarray:
    """Fraction of samples in which some line crosses each pixel.

    ``samples`` is a sequence of ``(points, directions)`` array pairs; each
    line is ``{points[j] + s directions[j]}`` (any direction is allowed).
    Returns ``grid[ix, iy]`` with ``ix`` along the first axis.
    """
    if w.dim != 2:
        raise ValueError("rasters are planar")
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    nx, ny, lo, hi = _cells(w, resolution)
    acc = np.zeros((nx, ny))
    for pts, dirs in samples:
        hit = np.zeros((nx, ny), dtype=bool)
        for y, u in zip(np.atleast_2d(pts), np.atleast_2d(dirs)):
            s_lo, s_hi = clip_parameters(y, np.asarray(u, dtype=float), lo, hi)
            hit |= s_lo <= s_hi
        acc += hit
    return acc / len(samples)


def ridge_recall(raster: np.ndarray, w: BoxWindow, anchors, directions, threshold: float = 0.5,
                 tolerance: int = 1) -> tuple[float, np.ndarray]:
    """Share of the given lines that lie on a ridge of ``raster``.

    A line counts as recovered when, at pixel-spaced points along its chord
    in ``w``, the raster maximum within ``tolerance`` pixels reaches
    ``threshold`` for at least half of the chord.
    """
    nx, ny = raster.shape
    step = min(w.sides[0] / nx, w.sides[1] / ny)
    recovered = []
    for y, u in zip(np.atleast_2d(anchors), np.atleast_2d(directions)):
        s_lo, s_hi = clip_parameters(y, u, w.lower, w.upper)
        if not s_lo < s_hi:
            recovered.append(False)
            continue
        m = max(int((s_hi - s_lo) / step), 1)
        s = s_lo + (np.arange(m) + 0.5) * (s_hi - s_lo) / m
        p = y + s[:, None] * u
        ix = np.clip(((p[:, 0] - w.lower[0]) / w.sides[0] * nx).astype(int), 0, nx - 1)
        iy = np.clip(((p[:, 1] - w.lower[1]) / w.sides[1] * ny).astype(int), 0, ny - 1)
        vals = []
        for a, b in zip(ix, iy):
            vals.append(raster[max(a - tolerance, 0):a + tolerance + 1, max(b - tolerance, 0):b + tolerance + 1].max())
        recovered.append(np.mean(np.array(vals) >= threshold) >= 0.5)
    rec = np.array(recovered, dtype=bool)
    return (float(rec.mean()) if rec.size else float("nan")), rec


def equally_spaced(trace: McmcTrace, count: int = 100) -> list:
    """``count`` equally spaced recorded line configurations."""
    n = len(trace.lines)
    if n == 0:
        raise ValueError("trace holds no line samples")
    idx = np.unique(np.linspace(0, n - 1, min(count, n)).round().astype(int))
    return [trace.lines[i] for i in idx]


def raster_to_csv(raster: np.ndarray, w: BoxWindow) -> str:
    nx, ny = raster.shape
    xs = w.lower[0] + (np.arange(nx) + 0.5) * w.sides[0] / nx
    ys = w.lower[1] + (np.arange(ny) + 0.5) * w.sides[1] / ny
    buf = io.StringIO()
    buf.write("x,y,value\n")
    for i in range(nx):
        for j in range(ny):
            buf.write(f"{float(xs[i])!r},{float(ys[j])!r},{float(raster[i, j])!r}\n")
    return buf.getvalue()


def raster_to_pgm(raster: np.ndarray) -> bytes:
    """Binary greyscale image, top row = largest second coordinate."""
    img = np.round(255 * np.clip(raster, 0, 1)).astype(np.uint8).T[::-1]
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    return header + img.tobytes()
