"""Brute-force and Monte Carlo oracles used to validate the pricing machinery.

Two exact values on a non-recombining binary tree (state = full path prefix,
so no distributional shortcuts can hide a bug): the Bermudan window-max value
and the delayed-claim formulation that should coincide with it node for node.
Plus direct Monte Carlo estimates of the excursion quantities behind the
closed forms, an unbiased estimator of E[exp(max X on [0,a])] via exact
Brownian-bridge cell maxima, and the scaled-increment statistic whose mean is
E|W_a|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .paths import ModelParams, RngStream, TwoPointIncrements, tau0_candidate_mask

MAX_TREE_DEPTH = 22

# mc_exp_window_max internals: fixed block partition and per-block streams so
# results depend only on (seed, n_paths); path_id space offset avoids colliding
# with per-path streams under the same seed
_BLOCK = 4096
_BLOCK_ID_BASE = 1 << 48
# bridge-crossing prune: cells with crossing probability below exp(-2*_PRUNE)
# are dropped; total leak over 1e10 cells is ~1e-7 events
_PRUNE = 20.0


@dataclass(frozen=True)
class TreeSpec:
    """Non-recombining binary tree: depth levels, window m, two-point law."""

    depth: int
    m: int
    increments: TwoPointIncrements

    def __post_init__(self):
        if not 1 <= self.depth <= MAX_TREE_DEPTH:
            raise ValueError(
                f"depth must lie in [1, {MAX_TREE_DEPTH}] (2^depth states), got {self.depth}"
            )
        if not 0 <= self.m <= self.depth:
            raise ValueError(f"m must lie in [0, depth], got {self.m}")

    @classmethod
    def from_grid(cls, depth: int, m: int, h: float, drift: float = -0.5) -> "TreeSpec":
        return cls(depth=depth, m=m, increments=TwoPointIncrements.from_grid(h, drift))


def _tree_levels(ts: TreeSpec):
    """Forward pass: per level k, window maxima z[k] (2^k,) and, for k >= m,
    the left window endpoint price s_left[k].  Node 2i+0 is the up child."""
    inc = np.array([ts.increments.up, ts.increments.down])
    m = ts.m
    x = np.zeros(1)
    buf = np.ones((1, 1))  # last min(k, m)+1 prices, buf[:, -1] is the current price
    z = [np.ones(1)]
    s_left = {m: buf[:, 0].copy()} if m == 0 else {}
    for k in range(1, ts.depth + 1):
        x = np.repeat(x, 2) + np.tile(inc, x.size)
        s = np.exp(x)
        keep = min(k, m)
        if keep == 0:
            buf = s[:, None]
        else:
            buf = np.concatenate(
                [np.repeat(buf[:, -keep:], 2, axis=0), s[:, None]], axis=1
            )
        z.append(buf.max(axis=1))
        if k >= m:
            s_left[k] = buf[:, 0].copy()
    return z, s_left


def _children_mean(v: np.ndarray) -> np.ndarray:
    return 0.5 * (v[0::2] + v[1::2])


def exact_small_value(ts: TreeSpec) -> float:
    """Exact Bermudan value of the window-max payoff by full-tree backward
    induction: V = max(z, mean of children), forced exercise at the horizon."""
    z, _ = _tree_levels(ts)
    v = z[ts.depth]
    for k in range(ts.depth - 1, -1, -1):
        v = np.maximum(z[k], _children_mean(v))
    return float(v[0])


def exact_foresight_value(ts: TreeSpec) -> float:
    """Exact value of claiming the price from m steps back, decisions on the
    full path; post-horizon decisions collapse to the best of the last m+1
    prices, so the terminal value is the window max.  Coincides with
    exact_small_value bit for bit."""
    z, s_left = _tree_levels(ts)
    v = z[ts.depth]
    for k in range(ts.depth - 1, -1, -1):
        cont = _children_mean(v)
        v = np.maximum(s_left[k], cont) if k >= ts.m else cont
    return float(v[0])


@dataclass(frozen=True)
class ExcursionStats:
    """Monte Carlo estimates, each as (value, standard error)."""

    p_mark_first: tuple[float, float]
    xbar_at_stop: tuple[float, float]
    exp_window_max: tuple[float, float]
    p_depth_below_q: tuple[float, float] | None
    n_paths: int
    seed: int


def mc_excursion_stats(p, h: float, n_paths: int, seed: int, q: float | None = None,
                       max_steps: int = 2_000_000) -> ExcursionStats:
    """Simulate X with drift c and an independent Exp(eta) mark; stop each path
    at the first renewal (grid detection) or the mark, whichever comes first.

    Estimates P[mark first], E[running max at the stop], E[exp(max X on
    [0, a])] (bridge-corrected, see mc_exp_window_max), and, when q is given,
    P(depth Y < q | renewal first).  Requires m = a/h >= 50 so grid bias stays
    below the Monte Carlo noise this is meant to be compared at.
    """
    m = int(round(p.a / h))
    if abs(m * h - p.a) > 1e-9 * max(1.0, p.a):
        raise ValueError(f"a = {p.a} is not an integer multiple of h = {h}")
    if m < 50:
        raise ValueError(f"need m = a/h >= 50 for tolerable grid bias, got {m}")
    if q is not None and q >= 0.0:
        raise ValueError(f"depth threshold q must be negative, got {q}")

    sh = math.sqrt(h)
    dh = p.c * h
    chunk = max(4 * m, 1024)
    mark_first = np.empty(n_paths, dtype=bool)
    xbar_stop = np.empty(n_paths)
    depth_below = []
    for i in range(n_paths):
        gen = RngStream(seed, i).generator()
        alpha = gen.exponential(1.0 / p.eta) if p.eta > 0.0 else math.inf
        x = np.zeros(1)
        tau0 = None
        while tau0 is None:
            if x.size - 1 > max_steps:
                raise RuntimeError(f"path {i} undecided after {max_steps} steps")
            lo = max(x.size - 1 - m, 0)  # overlap so windows straddle the seam
            dx = gen.standard_normal(chunk) * sh + dh
            grown = np.concatenate([x, x[-1] + np.cumsum(dx)])
            mask = tau0_candidate_mask(grown[None, lo:], m)[0]
            local = x.size - lo  # first index of the fresh segment
            hits = np.flatnonzero(mask[local:])
            if hits.size:
                tau0 = x.size + int(hits[0])
            x = grown
            if tau0 is None and alpha < (x.size - 1) * h:
                break
        if tau0 is not None and tau0 * h <= alpha:
            mark_first[i] = False
            xbar_stop[i] = x[: tau0 + 1].max()
            if q is not None:
                depth_below.append(x[tau0] - xbar_stop[i] < q)
        else:
            mark_first[i] = True
            k_alpha = min(int(alpha / h), x.size - 1)
            xbar_stop[i] = x[: k_alpha + 1].max()

    pm = mark_first.mean()
    pm_se = math.sqrt(pm * (1.0 - pm) / n_paths)
    xb = xbar_stop.mean()
    xb_se = xbar_stop.std(ddof=1) / math.sqrt(n_paths)
    cond = None
    if q is not None and depth_below:
        arr = np.asarray(depth_below)
        pc = arr.mean()
        cond = (float(pc), math.sqrt(pc * (1.0 - pc) / arr.size))
    wm = mc_exp_window_max(p.a, h, n_paths, seed, drift=p.c)
    return ExcursionStats(
        p_mark_first=(float(pm), pm_se),
        xbar_at_stop=(float(xb), xb_se),
        exp_window_max=wm,
        p_depth_below_q=cond,
        n_paths=n_paths,
        seed=seed,
    )


def mc_exp_window_max(a: float, h: float, n_paths: int, seed: int,
                      drift: float = -0.5, bridge: bool = True) -> tuple[float, float]:
    """Monte Carlo E[exp(max of X on [0, a])] with X = W + drift*t.

    With bridge=True each grid cell's interior maximum is drawn from its exact
    Brownian-bridge law (a cell crosses level G + d with probability
    exp(-2(G+d-x_l)(G+d-x_r)/h)), so the estimator is unbiased for the
    continuous-time maximum at any h.  bridge=False keeps the grid-point max,
    which is biased low by about 0.5826*sqrt(h) in the max itself.
    """
    n_steps = int(round(a / h))
    if n_steps < 1 or abs(n_steps * h - a) > 1e-9 * max(1.0, a):
        raise ValueError(f"a = {a} is not a positive integer multiple of h = {h}")
    if n_paths < 2:
        raise ValueError("need n_paths >= 2 for a standard error")
    f32 = np.float32
    sh = f32(math.sqrt(h))
    dh = f32(drift * h)
    prune = f32(_PRUNE * h)
    half_h = f32(0.5 * h)
    two_h = f32(2.0 * h)
    vals = np.empty(n_paths)
    for b, lo in enumerate(range(0, n_paths, _BLOCK)):
        bn = min(_BLOCK, n_paths - lo)
        gen = RngStream(seed, _BLOCK_ID_BASE + b).generator()
        x = gen.standard_normal((n_steps, bn), dtype=f32)
        # in-place scaled cumulative sum down the step axis
        r = x[0]
        r *= sh
        r += dh
        for k in range(1, n_steps):
            r = x[k]
            r *= sh
            r += dh
            r += x[k - 1]
        g = np.maximum(x.max(axis=0), f32(0.0))  # include the t=0 level
        np.subtract(g[None, :], x, out=x)  # x now holds y = G - X >= 0
        y = x
        if bridge:
            exc = np.zeros(bn, dtype=f32)
            empty = np.empty(0, dtype=np.intp)
            rows_l, cols_l = [empty], [empty]
            w = 1000
            for j in range(0, n_steps - 1, w):
                hi = min(j + w, n_steps - 1)
                rr, cc = np.nonzero(y[j:hi] * y[j + 1 : hi + 1] < prune)
                rows_l.append(rr + j)
                cols_l.append(cc)
            rows = np.concatenate(rows_l)
            cols = np.concatenate(cols_l)
            # exact crossing test and excess for candidate cells (interior)
            yl = y[rows, cols]
            yr = y[rows + 1, cols]
            e = gen.standard_exponential(rows.size, dtype=f32)
            up = 0.5 * (np.sqrt((yl - yr) ** 2 + two_h * e) - (yl + yr))
            np.maximum.at(exc, cols, np.where(e * half_h > yl * yr, up, f32(0.0)))
            # first cell: left endpoint is X_0 = 0, so its y is G itself
            fc = np.flatnonzero(g * y[0] < prune)
            if fc.size:
                e0 = gen.standard_exponential(fc.size, dtype=f32)
                gl, gr = g[fc], y[0][fc]
                up0 = 0.5 * (np.sqrt((gl - gr) ** 2 + two_h * e0) - (gl + gr))
                np.maximum.at(exc, fc, np.where(e0 * half_h > gl * gr, up0, f32(0.0)))
            vals[lo : lo + bn] = np.exp((g + exc).astype(np.float64))
        else:
            vals[lo : lo + bn] = np.exp(g.astype(np.float64))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths))


def nonsemimartingale_demo(n: int, a: float, n_paths: int, seed: int) -> tuple[float, float]:
    """Mean and SE of the scaled increment sum n^{-1/2} sum_j |W(ja/n) -
    W((j-1)a/n)|, whose expectation is E|W_a| = sqrt(2a/pi) for every n.  The
    integrand sup norm is n^{-1/2}, so the product blowing up to a finite mean
    is the point of the demo."""
    if n < 1 or n_paths < 2:
        raise ValueError("need n >= 1 and n_paths >= 2")
    sigma = math.sqrt(a / n)
    stats = np.empty(n_paths)
    scale = sigma / math.sqrt(n)
    for i in range(n_paths):
        gen = RngStream(seed, i).generator()
        stats[i] = np.abs(gen.standard_normal(n)).sum() * scale
    return float(stats.mean()), float(stats.std(ddof=1) / math.sqrt(n_paths))
