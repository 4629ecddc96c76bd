"""Simulation lower and upper bounds for the finite-horizon Bermudan problem.

The reward process is binned per step into equal-frequency quantile cells and
pretended Markovian on the cells: transition counts and mean cell rewards come
from a pilot set of paths, and backward induction on the cells yields an
exercise rule (lower bound, evaluated on fresh paths) and an approximate value
function whose compensated martingale gives a dual upper bound (fresh outer
paths with one-step sub-simulations from the true window state).

Two reward modes share the machinery: the production mode simulates Gaussian
increments under drift +1/2 and prices the ratio G = Z/S (the change of
numeraire that makes E[Z_tau] = E-tilde[G_tau]), while a two-point increment
law prices the window max Z itself under its own measure, which is what the
binary-tree oracle computes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import NumericalDegeneracyError
from .paths import (
    ModelParams,
    RngStream,
    TwoPointIncrements,
    run_in_blocks,
    simulate_log_paths,
    window_max_rows,
    window_prev_max_rows,
)

SIM_BLOCK = 8192
UB_BLOCK = 256
# sub-simulation streams live in their own path_id plane
_SUB_ID_BASE = 1 << 32


class DegenerateBinningError(NumericalDegeneracyError):
    """A step with dispersed rewards collapsed into a single occupied bin."""


@dataclass(frozen=True)
class BoundEstimate:
    kind: str
    mean: float
    se: float
    n: int
    seed: int


@dataclass
class BinModel:
    """Per-step binning of the reward process plus the backward induction.

    edges[k] are interior cell boundaries (cell j is (edges[j-1], edges[j]],
    open-ended at the extremes), counts[k] the pilot transition counts into
    step k+1's cells, payoff/value/continuation the per-cell reward mean and
    induction results with empty cells inheriting their nearest occupied
    neighbor.
    """

    mp: ModelParams
    num_bins: int
    samples_per_bin: int
    seed: int
    increments: TwoPointIncrements | None
    edges: list[np.ndarray]
    payoff: list[np.ndarray]
    counts: list[np.ndarray]
    occupied: list[np.ndarray]
    value: list[np.ndarray]
    continuation: list[np.ndarray]

    @property
    def ratio_mode(self) -> bool:
        return self.increments is None

    def assign(self, k: int, r: np.ndarray) -> np.ndarray:
        """Cell index of reward values at step k (values equal to an interior
        edge fall in the cell below it)."""
        return np.searchsorted(self.edges[k], r, side="left")


def _reward_rows(mp: ModelParams, seed: int, lo: int, hi: int,
                 increments: TwoPointIncrements | None) -> np.ndarray:
    x = simulate_log_paths(mp, seed, hi - lo, first_path_id=lo, increments=increments)
    s = np.exp(x)
    z = window_max_rows(s, mp.m)
    return z / s if increments is None else z


def _fill_nearest(vals: np.ndarray, occ: np.ndarray) -> np.ndarray:
    """Empty cells take the value of the nearest occupied cell (ties go low)."""
    if occ.all():
        return vals
    occ_idx = np.flatnonzero(occ)
    holes = np.flatnonzero(~occ)
    pos = np.searchsorted(occ_idx, holes)
    left = occ_idx[np.clip(pos - 1, 0, occ_idx.size - 1)]
    right = occ_idx[np.clip(pos, 0, occ_idx.size - 1)]
    nearest = np.where(holes - left <= right - holes, left, right)
    out = vals.copy()
    out[holes] = vals[nearest]
    return out


def build_bin_model(mp: ModelParams, num_bins: int, samples_per_bin: int, seed: int,
                    increments: TwoPointIncrements | None = None,
                    n_threads: int = 1) -> BinModel:
    """Pilot-simulate num_bins * samples_per_bin paths, bin the reward per step
    by equal-frequency quantiles (duplicate edges merged, so steps with atoms
    carry fewer cells), count transitions, and run the backward induction."""
    if num_bins < 2:
        raise ValueError(f"num_bins must be >= 2, got {num_bins}")
    if samples_per_bin < 1:
        raise ValueError(f"samples_per_bin must be >= 1, got {samples_per_bin}")
    if increments is None and mp.drift != 0.5:
        raise ValueError("ratio-mode binning requires the numeraire drift +1/2")
    n_pilot = num_bins * samples_per_bin
    n_cols = mp.n_steps + 1
    r = np.empty((n_pilot, n_cols))

    def pilot_block(lo: int, hi: int):
        r[lo:hi] = _reward_rows(mp, seed, lo, hi, increments)

    run_in_blocks(n_pilot, SIM_BLOCK, n_threads, pilot_block)

    levels = np.linspace(0.0, 1.0, num_bins + 1)
    qs = np.quantile(r, levels, axis=0)
    edges = [np.unique(qs[1:-1, k]) for k in range(n_cols)]
    bins = np.empty((n_pilot, n_cols), dtype=np.int64)
    payoff, occupied, sizes = [], [], []
    for k in range(n_cols):
        b = np.searchsorted(edges[k], r[:, k], side="left")
        bins[:, k] = b
        nb = edges[k].size + 1
        cnt = np.bincount(b, minlength=nb)
        occ = cnt > 0
        if occ.sum() == 1 and np.unique(r[:, k]).size > 1:
            raise DegenerateBinningError(
                f"step {k}: dispersed rewards collapsed into one occupied cell"
            )
        with np.errstate(invalid="ignore"):
            pay = np.bincount(b, weights=r[:, k], minlength=nb) / cnt
        payoff.append(_fill_nearest(np.where(occ, pay, 0.0), occ))
        occupied.append(occ)
        sizes.append(nb)

    counts = []
    for k in range(mp.n_steps):
        flat = bins[:, k] * sizes[k + 1] + bins[:, k + 1]
        counts.append(
            np.bincount(flat, minlength=sizes[k] * sizes[k + 1])
            .reshape(sizes[k], sizes[k + 1])
        )

    value = [np.empty(0)] * n_cols
    continuation = [np.empty(0)] * n_cols
    value[-1] = payoff[-1].copy()
    continuation[-1] = payoff[-1].copy()
    for k in range(mp.n_steps - 1, -1, -1):
        c = counts[k]
        rowsum = c.sum(axis=1)
        with np.errstate(invalid="ignore"):
            cont = (c @ value[k + 1]) / rowsum
        cont = _fill_nearest(np.where(occupied[k], cont, 0.0), occupied[k])
        continuation[k] = cont
        value[k] = np.maximum(payoff[k], cont)

    return BinModel(
        mp=mp, num_bins=num_bins, samples_per_bin=samples_per_bin, seed=seed,
        increments=increments, edges=edges, payoff=payoff, counts=counts,
        occupied=occupied, value=value, continuation=continuation,
    )


def _check_mp(bm: BinModel, mp: ModelParams):
    if mp != bm.mp:
        raise ValueError(f"model params {mp} do not match the bin model's {bm.mp}")


def lower_bound(bm: BinModel, mp: ModelParams, n_paths: int, seed: int,
                n_threads: int = 1) -> BoundEstimate:
    """Evaluate the binned exercise rule on fresh paths: stop at the first step
    whose reward is at least the cell continuation (ties stop), forced stop at
    the horizon.  A valid lower bound whatever the rule's quality.

    Use a seed disjoint from the pilot's.
    """
    _check_mp(bm, mp)
    if n_paths < 2:
        raise ValueError("need n_paths >= 2 for a standard error")
    n = mp.n_steps
    payoffs = np.empty(n_paths)

    def block(lo: int, hi: int):
        r = _reward_rows(mp, seed, lo, hi, bm.increments)
        stop = np.empty((hi - lo, n + 1), dtype=bool)
        for k in range(n):
            stop[:, k] = r[:, k] >= bm.continuation[k][bm.assign(k, r[:, k])]
        stop[:, n] = True
        first = stop.argmax(axis=1)
        payoffs[lo:hi] = r[np.arange(hi - lo), first]

    run_in_blocks(n_paths, SIM_BLOCK, n_threads, block)
    mean = float(payoffs.mean())
    se = float(payoffs.std(ddof=1) / math.sqrt(n_paths))
    return BoundEstimate(kind="lower", mean=mean, se=se, n=n_paths, seed=seed)


def upper_bound(bm: BinModel, mp: ModelParams, n_outer: int, n_sub: int, seed: int,
                n_threads: int = 1) -> BoundEstimate:
    """Dual upper bound: compensate the approximate value function along fresh
    outer paths, estimating each step's conditional mean by n_sub one-step
    sub-simulations from the true window state (the last m prices carried on
    the outer path), and average the pathwise max of reward minus martingale.

    Sub-simulation noise biases the estimate high, so it stays an upper bound
    in expectation.  Use a seed disjoint from the pilot's and lower bound's.
    """
    _check_mp(bm, mp)
    if n_outer < 2 or n_sub < 1:
        raise ValueError("need n_outer >= 2 and n_sub >= 1")
    n, m = mp.n_steps, mp.m
    inc = bm.increments
    sh = math.sqrt(mp.h)
    dh = mp.drift * mp.h
    payoffs = np.empty(n_outer)

    def block(lo: int, hi: int):
        bn = hi - lo
        x = simulate_log_paths(mp, seed, bn, first_path_id=lo, increments=inc)
        s = np.exp(x)
        z = window_max_rows(s, m)
        r = z / s if inc is None else z
        wl = window_prev_max_rows(s, m)
        sub = np.empty((bn, n, n_sub))
        for i in range(bn):
            gen = RngStream(seed, _SUB_ID_BASE + lo + i).generator()
            if inc is None:
                sub[i] = gen.standard_normal((n, n_sub)) * sh + dh
            else:
                sub[i] = np.where(gen.random((n, n_sub)) < inc.p_up, inc.up, inc.down)
        mart = np.zeros(bn)
        best = r[:, 0].copy()
        for k in range(1, n + 1):
            s_new = s[:, k - 1 : k] * np.exp(sub[:, k - 1, :])
            z_new = np.maximum(wl[:, k : k + 1], s_new)
            r_new = z_new / s_new if inc is None else z_new
            v_sub = bm.value[k][bm.assign(k, r_new.ravel())].reshape(bn, n_sub)
            v_real = bm.value[k][bm.assign(k, r[:, k])]
            mart += v_real - v_sub.mean(axis=1)
            np.maximum(best, r[:, k] - mart, out=best)
        payoffs[lo:hi] = best

    run_in_blocks(n_outer, UB_BLOCK, n_threads, block)
    mean = float(payoffs.mean())
    se = float(payoffs.std(ddof=1) / math.sqrt(n_outer))
    return BoundEstimate(kind="upper", mean=mean, se=se, n=n_outer, seed=seed)
