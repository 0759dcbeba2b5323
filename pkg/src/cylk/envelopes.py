"""Global rank envelope tests: extreme-rank p-value intervals and extreme rank
length envelopes."""
from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .patterns import PointPattern
from .summaries import SummaryCurve


class GridMismatchError(ValueError):
    pass


@dataclass
class EnvelopeResult:
    args: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    data: np.ndarray
    p_lower: float
    p_upper: float
    data_rank: float
    level: float
    n_sims: int
    p_erl: float
    threshold: float

    @property
    def rejected(self) -> bool:
        """Test decision at ``level`` (data curve excluded from the envelope)."""
        return bool(self.p_erl < self.threshold)

    @property
    def outside(self) -> np.ndarray:
        return (self.data < self.lower) | (self.data > self.upper)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("arg,lower,upper,data\n")
        for row in zip(self.args, self.lower, self.upper, self.data):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "p_lower": self.p_lower,
            "p_upper": self.p_upper,
            "data_rank": self.data_rank,
            "level": self.level,
            "n_sims": self.n_sims,
            "p_erl": self.p_erl,
            "erl_threshold": self.threshold,
            "rejected": self.rejected,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def extreme_ranks(curves: np.ndarray) -> np.ndarray:
    """Extreme rank of each row: the smallest two-sided pointwise mid-rank.

    Row ``i`` gets ``min_r min(R_i(r), N + 1 - R_i(r))`` where ``R_i(r)`` is
    its average (mid) rank among the ``N`` curves at grid point ``r``.
    """
    curves = np.asarray(curves, dtype=float)
    n = curves.shape[0]
    lo = rankdata(curves, method="average", axis=0)
    return np.minimum(lo, n + 1 - lo).min(axis=1)


def erl_measure(curves: np.ndarray) -> np.ndarray:
    """Extreme rank length ordering of the rows, as a depth in ``(0, 1]``.

    Each row's pointwise two-sided mid-ranks are sorted increasingly and the
    rows are ordered lexicographically on these vectors, which refines the
    extreme-rank ordering (ties broken by how often the extreme rank is
    attained, and so on).  The measure of a row is the fraction of rows
    that are at most as deep as it, so small values mean extreme curves.
    """
    curves = np.asarray(curves, dtype=float)
    n = curves.shape[0]
    lo = rankdata(curves, method="average", axis=0)
    vec = np.sort(np.minimum(lo, n + 1 - lo), axis=1)
    order = np.lexsort(vec.T[::-1])
    sorted_vec = vec[order]
    new_block = np.ones(n, dtype=bool)
    new_block[1:] = np.any(sorted_vec[1:] != sorted_vec[:-1], axis=1)
    block_id = np.cumsum(new_block) - 1
    block_end = np.flatnonzero(np.append(new_block[1:], True))
    depth = np.empty(n)
    depth[order] = (block_end[block_id] + 1) / n
    return depth


def minimum_sims(level: float) -> int:
    return int(math.ceil(1.0 / (1.0 - level) - 1 - 1e-9))


def _as_matrix(data, sims):
    if isinstance(data, SummaryCurve):
        args, d = data.args, data.values
    else:
        d = np.asarray(data, dtype=float)
        args = np.arange(d.shape[0], dtype=float)
    rows = []
    for k, s in enumerate(sims):
        if isinstance(s, SummaryCurve):
            if s.args.shape != args.shape or not np.array_equal(s.args, args):
                raise GridMismatchError(f"simulation {k} is on a different argument grid")
            rows.append(s.values)
        else:
            s = np.asarray(s, dtype=float)
            if s.shape != d.shape:
                raise GridMismatchError(f"simulation {k} has {s.shape[0]} values, data has {d.shape[0]}")
            rows.append(s)
    return args, d, np.array(rows).reshape(len(rows), d.shape[0])


def rank_envelope(data, sims, level: float = 0.95) -> EnvelopeResult:
    """Global rank envelope of ``sims`` and test of ``data`` against it.

    The p-interval comes from the extreme ranks:
    ``p_lower = (1 + #{sims strictly more extreme}) / (s + 1)`` and
    ``p_upper = (1 + #{sims at least as extreme}) / (s + 1)``.
    The envelope and the test decision use the extreme rank length
    refinement of that ordering: curves are dropped from the most extreme
    end while at most ``(1 - level) (s + 1)`` of them are strictly more
    extreme than the critical depth, and the envelope is the pointwise range
    of the curves that remain.
    """
    args, d, s = _as_matrix(data, sims)
    n_sims = s.shape[0]
    need = minimum_sims(level)
    if n_sims < need:
        raise ValueError(f"level {level} needs at least {need} simulations, got {n_sims}")
    allc = np.vstack([d[None, :], s])
    ranks = extreme_ranks(allc)
    r0, rs = ranks[0], ranks[1:]
    p_lo = (1 + np.sum(rs < r0)) / (n_sims + 1)
    p_hi = (1 + np.sum(rs <= r0)) / (n_sims + 1)
    depth = erl_measure(allc)
    alpha_n = (1 - level) * (n_sims + 1) + 1e-9
    crit = max(e for e in np.unique(depth) if np.sum(depth < e) <= alpha_n)
    inside = allc[depth >= crit]
    return EnvelopeResult(
        args=args,
        lower=inside.min(axis=0),
        upper=inside.max(axis=0),
        data=d,
        p_lower=float(p_lo),
        p_upper=float(p_hi),
        data_rank=float(r0),
        level=level,
        n_sims=n_sims,
        p_erl=float(depth[0]),
        threshold=float(crit),
    )


def binomial_pattern(n: int, window, rng: np.random.Generator) -> PointPattern:
    """``n`` independent uniform points in the window."""
    pts = window.lower + rng.uniform(size=(n, window.dim)) * window.sides
    return PointPattern(pts, window)


def simulate_curves(simulate, statistic, n_sims: int, seed, threads: int = 1) -> np.ndarray:
    """Evaluate ``statistic(simulate(rng))`` for ``n_sims`` independent streams.

    Simulation ``k`` always uses the ``k``-th child of ``seed``, so the
    result does not depend on ``threads``.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(n_sims)

    def one(k):
        return np.asarray(statistic(simulate(np.random.default_rng(children[k]))), dtype=float)

    if threads <= 1:
        return np.array([one(k) for k in range(n_sims)])
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return np.array(list(ex.map(one, range(n_sims))))


def csr_envelope_pipeline(p: PointPattern, statistic, s: int = 999, seed=None, level: float = 0.95,
                          threads: int = 1) -> EnvelopeResult:
    """Rank envelope test of ``statistic`` on ``p`` against ``s`` binomial (fixed-n) CSR patterns.

    ``statistic`` maps a pattern to a :class:`SummaryCurve` or a value vector.
    """
    data = statistic(p)
    sims = simulate_curves(
        lambda rng: binomial_pattern(p.n, p.window, rng),
        lambda q: _values(statistic(q)),
        s,
        seed,
        threads,
    )
    return rank_envelope(data, sims, level)


def _values(c):
    return c.values if isinstance(c, SummaryCurve) else c
