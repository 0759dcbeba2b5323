"""Moment fitting of the degenerate line cluster process through its planar
projection, which is a Thomas-type cluster process."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import kstest

from .geometry import BoxWindow
from .patterns import PointPattern
from .summaries import InsufficientPointsError, isotropic_k


class FitError(RuntimeError):
    """The contrast minimisation failed; ``best`` holds the best iterate seen."""

    def __init__(self, message: str, best: dict | None = None, trace: list | None = None):
        super().__init__(message)
        self.best = best
        self.trace = trace or []


def project_pattern(p: PointPattern, axis: int = 2) -> tuple[PointPattern, tuple[float, float]]:
    """Drop coordinate ``axis`` (0-based) of a spatial pattern.

    Returns the planar pattern in the remaining face of the window and the
    dropped interval ``I``.
    """
    if p.dim != 3:
        raise ValueError("projection needs a spatial (3-d) pattern")
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    keep = [i for i in range(3) if i != axis]
    w = p.window
    face = BoxWindow(w.lower[keep], w.upper[keep])
    return PointPattern(p.points[:, keep], face), (float(w.lower[axis]), float(w.upper[axis]))


def thomas_k_theoretical(rho_L: float, sigma2: float, r):
    """Planar K of the projected process: ``pi r^2 + (1 - exp(-r^2 / 4 sigma2)) / rho_L``."""
    r = np.asarray(r, dtype=float)
    return np.pi * r * r - np.expm1(-r * r / (4 * sigma2)) / rho_L


@dataclass
class ContrastConfig:
    q: float = 0.25
    p: float = 2.0
    r_min: float | None = None
    r_max: float | None = None
    n_r: int = 128
    restarts: int = 5
    seed: int = 0
    min_points: int = 10
    xatol: float = 1e-8
    max_iter: int = 4000

    @classmethod
    def from_dict(cls, d: dict | None) -> "ContrastConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown contrast settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ThomasFit:
    rho_L_hat: float
    sigma2_hat: float
    alpha_hat: float
    contrast_value: float
    r_range: tuple[float, float]
    exponents: tuple[float, float]
    n_points: int
    area: float
    I_length: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.rho_L_hat > 0 and self.sigma2_hat > 0 and self.alpha_hat > 0):
            raise ValueError("fitted parameters must be positive")
        if not np.isfinite(self.contrast_value):
            raise ValueError("contrast value is not finite")

    def k_curve(self, r):
        return thomas_k_theoretical(self.rho_L_hat, self.sigma2_hat, r)

    @property
    def mean_per_parent(self) -> float:
        return self.alpha_hat * self.I_length

    def to_json(self) -> str:
        d = asdict(self)
        d["r_range"] = list(self.r_range)
        d["exponents"] = {"q": self.exponents[0], "p": self.exponents[1]}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def contrast(r, k_hat, k_model, q: float = 0.25, p: float = 2.0) -> float:
    """Trapezoidal ``int |k_hat^q - k_model^q|^p dr``."""
    diff = np.abs(np.power(np.maximum(k_hat, 0.0), q) - np.power(k_model, q)) ** p
    return float(np.sum(0.5 * (diff[1:] + diff[:-1]) * np.diff(r)))


def _start_points(r, k_hat, n: int, rng: np.random.Generator):
    r_hi = r[-1]
    excess = k_hat[-1] - np.pi * r_hi * r_hi
    rho0 = 1.0 / max(excess, 1e-3 * np.pi * r_hi * r_hi)
    # scale at which half the excess is reached
    ex = k_hat - np.pi * r * r
    half = np.flatnonzero(ex >= 0.5 * max(excess, 0))
    r_half = r[half[0]] if half.size else 0.25 * r_hi
    s20 = max(r_half, r[0]) ** 2 / (4 * np.log(2))
    base = np.log([rho0, s20])
    starts = [base]
    starts += [base + rng.normal(scale=1.0, size=2) for _ in range(max(n - 1, 0))]
    return starts


def min_contrast(r, k_hat, q: float = 0.25, p: float = 2.0, restarts: int = 5, seed: int = 0,
                 xatol: float = 1e-8, max_iter: int = 4000):
    """Minimise the contrast over ``(rho_L, sigma2)`` with Nelder-Mead in log space.

    Returns ``(rho_L, sigma2, contrast, diagnostics)``; raises
    :class:`FitError` if no restart converges.
    """
    r = np.asarray(r, dtype=float)
    k_hat = np.asarray(k_hat, dtype=float)
    # scale the contrast so the simplex tolerance is meaningful at any unit
    scale = contrast(r, k_hat, np.pi * r * r + 1e-300, q, p) or 1.0
    trace: list[dict] = []

    def obj(theta):
        rho, s2 = np.exp(theta)
        if not (np.isfinite(rho) and np.isfinite(s2)) or rho <= 0 or s2 <= 0:
            return np.inf
        val = contrast(r, k_hat, thomas_k_theoretical(rho, s2, r), q, p) / scale
        return val if np.isfinite(val) else np.inf

    rng = np.random.default_rng(seed)
    results = []
    for k, x0 in enumerate(_start_points(r, k_hat, restarts, rng)):
        res = minimize(obj, x0, method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": 1e-14, "maxiter": max_iter, "maxfev": 4 * max_iter})
        trace.append({"restart": k, "start": np.exp(x0).tolist(), "end": np.exp(res.x).tolist(),
                      "contrast": float(res.fun * scale), "converged": bool(res.success), "nit": int(res.nit)})
        results.append(res)
    ok = [res for res in results if res.success and np.isfinite(res.fun)]
    pool = ok or [res for res in results if np.isfinite(res.fun)]
    best = min(pool, key=lambda res: (res.fun, *res.x)) if pool else None
    if not ok:
        info = None if best is None else {"rho_L": float(np.exp(best.x[0])), "sigma2": float(np.exp(best.x[1])),
                                          "contrast": float(best.fun * scale)}
        raise FitError("minimum contrast search did not converge", best=info, trace=trace)
    rho, s2 = np.exp(best.x)
    return float(rho), float(s2), float(best.fun * scale), {"restarts": trace}


def default_r_range(window: BoxWindow) -> tuple[float, float]:
    side = float(window.sides.min())
    return 0.01 * side, 0.25 * side


def min_contrast_fit(p2d: PointPattern, I_length: float, config: ContrastConfig | dict | None = None) -> ThomasFit:
    """Fit the projected process to a planar pattern by minimum contrast on K.

    ``I_length`` is the length of the interval that was projected out; it
    converts the fitted cluster size into the on-line intensity ``alpha``.
    """
    cfg = config if isinstance(config, ContrastConfig) else ContrastConfig.from_dict(config)
    if p2d.dim != 2:
        raise ValueError("minimum contrast fitting needs a planar pattern")
    if p2d.n < cfg.min_points:
        raise InsufficientPointsError(f"need at least {cfg.min_points} points, got {p2d.n}")
    if not I_length > 0:
        raise ValueError("I_length must be positive")
    lo, hi = default_r_range(p2d.window)
    lo = cfg.r_min if cfg.r_min is not None else lo
    hi = cfg.r_max if cfg.r_max is not None else hi
    if not 0 <= lo < hi:
        raise ValueError(f"invalid r range [{lo}, {hi}]")
    r = np.linspace(lo, hi, cfg.n_r)
    k_hat = isotropic_k(p2d, r).values
    rho, s2, val, diag = min_contrast(r, k_hat, cfg.q, cfg.p, cfg.restarts, cfg.seed, cfg.xatol, cfg.max_iter)
    alpha = p2d.intensity / (rho * I_length)
    return ThomasFit(rho, s2, alpha, val, (float(lo), float(hi)), (cfg.q, cfg.p), p2d.n,
                     float(p2d.window.volume), float(I_length), diag)


def uniformity_check(coords, interval) -> dict:
    """Kolmogorov-Smirnov test of ``coords`` against the uniform law on ``interval``,
    with the empirical CDF for plotting."""
    x = np.sort(np.asarray(coords, dtype=float).ravel())
    if x.size == 0:
        raise InsufficientPointsError("need at least one coordinate")
    a, b = map(float, interval)
    if not b > a:
        raise ValueError("interval must have positive length")
    res = kstest(x, "uniform", args=(a, b - a))
    return {
        "statistic": float(res.statistic),
        "p_value": float(res.pvalue),
        "n": int(x.size),
        "ecdf_x": x,
        "ecdf_y": np.arange(1, x.size + 1) / x.size,
    }


def simulate_thomas(rho_L: float, sigma2: float, mean_per_parent: float, window: BoxWindow,
                    rng: np.random.Generator, margin: float | None = None) -> PointPattern:
    """Planar Thomas process: Poisson(``rho_L``) parents, Poisson cluster sizes,
    isotropic normal displacements with variance ``sigma2`` per axis."""
    sigma = np.sqrt(sigma2)
    big = window.inflate(5 * sigma if margin is None else margin)
    n_par = rng.poisson(rho_L * big.volume)
    parents = big.lower + rng.uniform(size=(n_par, window.dim)) * big.sides
    sizes = rng.poisson(mean_per_parent, size=n_par)
    pts = np.repeat(parents, sizes, axis=0) + rng.normal(scale=sigma, size=(sizes.sum(), window.dim))
    return PointPattern(pts[window.contains(pts)], window)
