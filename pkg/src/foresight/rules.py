"""Explicit exercise rules evaluated by simulation under the physical drift.

A fixed-window lookback only needs a decision when the running window max is
about to slide out of the window: at such renewal times (the left edge of the
window attains the max) the holder either locks the expiring max in or lets
it go.  The rules compare the depth of the current log price below the
expiring max with an analytic threshold that depends on the time to go:

  variant 1: stop when depth < q*(eta = 1 / time-to-go), the optimal
      threshold of the stationary problem whose mark rate matches the
      remaining time.
  variant 2: variant 1 shifted by -(q*(1/a) + log lambda(a)), discounting the
      continuation by what a fresh window is worth, which prices the renewal
      structure of repeated windows rather than a single terminal mark.

Declining a decision forgets the expiring max: the running max restarts at
the current price, so the next decision comes no sooner than m steps later,
when the restarted max is itself about to expire.  Both rules reduce to
"never stop early" when the window has zero length, and then the horizon
payoff has mean one by the martingale property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .analytic import FormulaParams, lambda_max, optimal_threshold
from .paths import ModelParams, run_in_blocks, simulate_log_paths, tau0_candidate_mask

SIM_BLOCK = 8192


class QStarTable:
    """Optimal thresholds q*(eta) for a fixed window length, solved on a
    log-spaced rate grid and monotone-interpolated in log eta.  Queries
    outside the grid fall back to a direct solve."""

    def __init__(self, a: float, eta_lo: float, eta_hi: float, n: int = 256):
        if a <= 0:
            raise ValueError(f"window length must be positive, got {a}")
        if not 0 < eta_lo < eta_hi:
            raise ValueError(f"need 0 < eta_lo < eta_hi, got [{eta_lo}, {eta_hi}]")
        if n < 4:
            raise ValueError(f"need at least 4 grid points, got {n}")
        self.a = a
        self.eta_lo = eta_lo
        self.eta_hi = eta_hi
        grid = np.geomspace(eta_lo, eta_hi, n)
        qs = [optimal_threshold(FormulaParams(a=a, eta=e)).q_star for e in grid]
        self._interp = PchipInterpolator(np.log(grid), np.asarray(qs))

    def q(self, eta: float) -> float:
        if self.eta_lo <= eta <= self.eta_hi:
            return float(self._interp(math.log(eta)))
        return optimal_threshold(FormulaParams(a=self.a, eta=eta)).q_star


def threshold(variant: int, time_to_go: float, a: float,
              table: QStarTable | None = None) -> float:
    """Depth threshold for one decision: stop when the log price sits more
    than this far below the expiring window max.  Variant 2's offset can push
    the threshold above zero near the horizon, in which case every decision
    stops.  A zero-length window makes the depth identically zero and the
    threshold degenerates to 0 (never stop early)."""
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant}")
    if time_to_go <= 0:
        raise ValueError(f"time to go must be positive, got {time_to_go}")
    if a == 0.0:
        return 0.0
    q = table.q(1.0 / time_to_go) if table is not None else (
        optimal_threshold(FormulaParams(a=a, eta=1.0 / time_to_go)).q_star
    )
    if variant == 1:
        return q
    q_a = table.q(1.0 / a) if table is not None else (
        optimal_threshold(FormulaParams(a=a, eta=1.0 / a)).q_star
    )
    return q - q_a - math.log(lambda_max(a))


@dataclass(frozen=True)
class RuleConfig:
    variant: int
    mp: ModelParams
    n_paths: int
    seed: int
    # size of the q*(eta) memoization grid spanning [1/T, 1/h]
    eta_grid: int = 256

    def __post_init__(self):
        if self.variant not in (1, 2):
            raise ValueError(f"variant must be 1 or 2, got {self.variant}")
        if self.mp.drift != -0.5:
            raise ValueError("rules are evaluated under the physical drift -1/2")
        if self.n_paths < 2:
            raise ValueError("need n_paths >= 2 for a standard error")


@dataclass(frozen=True)
class RuleEstimate:
    mean: float
    se: float
    n: int
    seed: int
    variant: int
    avg_renewals: float
    horizon_frac: float


def decision_thresholds(cfg: RuleConfig) -> np.ndarray:
    """Threshold per grid step: -inf outside [m, n_steps-1], where no decision
    can occur (the horizon pays the window max regardless)."""
    mp = cfg.mp
    n, m = mp.n_steps, mp.m
    thr = np.full(n + 1, -np.inf)
    if m == 0:
        thr[:n] = 0.0
        return thr
    if m < n:
        table = QStarTable(mp.a, 1.0 / mp.horizon, 1.0 / mp.h, cfg.eta_grid)
        for k in range(m, n):
            thr[k] = threshold(cfg.variant, mp.horizon - k * mp.h, mp.a, table)
    return thr


def run_rule(cfg: RuleConfig, n_threads: int = 1) -> RuleEstimate:
    """Simulate the rule: walk each path's renewal times, stopping at the
    first one whose depth is below the threshold (payoff = the expiring max);
    declining restarts the running max at the current price, so the walk
    resumes at least m steps later; paths with no stop collect the window max
    at the horizon."""
    mp = cfg.mp
    n, m = mp.n_steps, mp.m
    thr = decision_thresholds(cfg)
    payoffs = np.empty(cfg.n_paths)
    renewals = np.empty(cfg.n_paths, dtype=np.int64)
    at_horizon = np.empty(cfg.n_paths, dtype=bool)

    def block(lo: int, hi: int):
        bn = hi - lo
        x = simulate_log_paths(mp, cfg.seed, bn, first_path_id=lo)
        if m == 0:
            # depth is identically zero, threshold 0: no decision ever stops
            payoffs[lo:hi] = np.exp(x[:, n])
            renewals[lo:hi] = n
            at_horizon[lo:hi] = True
            return
        cand = tau0_candidate_mask(x, m)
        # nxt[i, j]: smallest candidate step >= j, or n + 1 when none remain
        nxt = np.full((bn, n + 2), n + 1, dtype=np.int64)
        for j in range(n, -1, -1):
            nxt[:, j] = np.where(cand[:, j], j, nxt[:, j + 1])
        horizon_pay = np.exp(x[:, n - m :].max(axis=1))
        pay = np.empty(bn)
        ren = np.zeros(bn, dtype=np.int64)
        hor = np.zeros(bn, dtype=bool)
        sigma = np.full(bn, m, dtype=np.int64)
        active = np.ones(bn, dtype=bool)
        rows = np.arange(bn)
        while active.any():
            idx = rows[active]
            k = nxt[idx, sigma[idx]]
            # a candidate at the horizon itself is a forced exercise: the
            # expiring max and the window max coincide there
            at_h = k >= n
            h_idx = idx[at_h]
            pay[h_idx] = horizon_pay[h_idx]
            hor[h_idx] = True
            active[h_idx] = False
            d_idx = idx[~at_h]
            kd = k[~at_h]
            y = x[d_idx, kd] - x[d_idx, kd - m]
            s = y < thr[kd]
            stop_idx = d_idx[s]
            pay[stop_idx] = np.exp(x[stop_idx, kd[s] - m])
            active[stop_idx] = False
            cont_idx = d_idx[~s]
            ren[cont_idx] += 1
            sigma[cont_idx] = np.minimum(kd[~s] + m, n + 1)
        payoffs[lo:hi] = pay
        renewals[lo:hi] = ren
        at_horizon[lo:hi] = hor

    run_in_blocks(cfg.n_paths, SIM_BLOCK, n_threads, block)
    mean = float(payoffs.mean())
    se = float(payoffs.std(ddof=1) / math.sqrt(cfg.n_paths))
    return RuleEstimate(
        mean=mean, se=se, n=cfg.n_paths, seed=cfg.seed, variant=cfg.variant,
        avg_renewals=float(renewals.mean()),
        horizon_frac=float(at_horizon.mean()),
    )
