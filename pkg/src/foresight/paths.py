"""Discrete-grid simulation of the log price and its trailing-window maxima.

The grid has step h and n_steps steps; log prices X_0 = 0, X_k = X_{k-1} +
increment, with Gaussian increments N(drift*h, h) by default or an explicit
two-point law.  Prices before time zero count as 1, so the window payoff at
step k is z_k = max(S_j : max(0, k-m) <= j <= k, plus the sentinel 1 while
k < m).

Randomness is counter-based: every path owns a Philox stream keyed by
(seed, path_id), so per-path draws are identical no matter how the work is
batched or threaded.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class ModelParams:
    """Grid step h, number of steps, window length in steps m, and drift."""

    h: float
    n_steps: int
    m: int
    drift: float = -0.5

    def __post_init__(self):
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError(f"step h must be positive, got {self.h}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not 0 <= self.m <= self.n_steps:
            raise ValueError(f"m must lie in [0, n_steps], got {self.m}")

    @property
    def a(self) -> float:
        return self.m * self.h

    @property
    def horizon(self) -> float:
        return self.n_steps * self.h


@dataclass(frozen=True)
class TwoPointIncrements:
    """Two-point increment law: up with probability p_up, else down."""

    up: float
    down: float
    p_up: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p_up < 1.0:
            raise ValueError(f"p_up must lie in (0, 1), got {self.p_up}")

    @classmethod
    def from_grid(cls, h: float, drift: float = -0.5) -> "TwoPointIncrements":
        """Matches mean drift*h exactly and variance h exactly at p_up = 1/2."""
        sh = math.sqrt(h)
        return cls(up=sh + drift * h, down=-sh + drift * h)


@dataclass(frozen=True)
class RngStream:
    """Counter-based Gaussian/uniform source keyed by (seed, path_id).

    The draw sequence depends only on the key and the starting counter, never
    on thread count or evaluation order.
    """

    seed: int
    path_id: int
    counter: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.path_id], dtype=np.uint64)
        bg = np.random.Philox(counter=self.counter, key=key)
        return np.random.Generator(bg)


@dataclass
class PathGrid:
    """One simulated path: log prices x, prices s, window maxima z, ratios g."""

    mp: ModelParams
    x: np.ndarray
    s: np.ndarray = field(init=False)
    z: np.ndarray = field(init=False)
    g: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.x.shape != (self.mp.n_steps + 1,):
            raise ValueError(
                f"x must have shape ({self.mp.n_steps + 1},), got {self.x.shape}"
            )
        self.s = np.exp(self.x)
        self.z = rolling_window_max(self.s, self.mp.m, sentinel=1.0)
        self.g = self.z / self.s


def simulate_path(mp: ModelParams, rng: RngStream) -> PathGrid:
    """Draw one path of X from the stream: X_0 = 0, increments N(drift*h, h)."""
    gen = rng.generator()
    dx = gen.standard_normal(mp.n_steps) * math.sqrt(mp.h) + mp.drift * mp.h
    x = np.empty(mp.n_steps + 1)
    x[0] = 0.0
    np.cumsum(dx, out=x[1:])
    return PathGrid(mp=mp, x=x)


def rolling_window_max(values: np.ndarray, m: int, sentinel: float | None = None):
    """Trailing max over the last m+1 entries, O(n) via a monotonic deque.

    Near the start the window is truncated; if sentinel is given it
    participates exactly while the window would extend before index 0.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError("rolling_window_max expects a 1-d array")
    if m < 0:
        raise ValueError(f"window size m must be >= 0, got {m}")
    n = values.size
    out = np.empty(n)
    dq: deque[int] = deque()  # indices, values decreasing
    for k in range(n):
        while dq and values[dq[-1]] <= values[k]:
            dq.pop()
        dq.append(k)
        if dq[0] < k - m:
            dq.popleft()
        best = values[dq[0]]
        if sentinel is not None and k < m and sentinel > best:
            best = sentinel
        out[k] = best
    return out


def detect_tau0(pg: PathGrid, m: int, start_index: int = 0):
    """First renewal index at or after start_index: smallest k >= start_index + m
    with X_{k-m} >= X_j for all j in [k-m, k].  None if the grid ends first."""
    if start_index < 0:
        raise ValueError(f"start_index must be >= 0, got {start_index}")
    x = pg.x
    n = x.size - 1
    first = max(start_index + m, m)
    if first > n:
        return None
    mask = tau0_candidate_mask(x[None, :], m)[0]
    hits = np.flatnonzero(mask[first:])
    if hits.size == 0:
        return None
    return int(first + hits[0])


# ---------------------------------------------------------------------------
# batch helpers: same conventions as the single-path ops, vectorized over rows


def simulate_log_paths(
    mp: ModelParams,
    seed: int,
    n_paths: int,
    first_path_id: int = 0,
    increments: TwoPointIncrements | None = None,
) -> np.ndarray:
    """(n_paths, n_steps+1) log-price rows; row i comes from the stream
    (seed, first_path_id + i) regardless of how calls are batched."""
    n = mp.n_steps
    x = np.empty((n_paths, n + 1))
    x[:, 0] = 0.0
    sh = math.sqrt(mp.h)
    dh = mp.drift * mp.h
    for i in range(n_paths):
        gen = RngStream(seed, first_path_id + i).generator()
        if increments is None:
            dx = gen.standard_normal(n) * sh + dh
        else:
            dx = np.where(gen.random(n) < increments.p_up, increments.up, increments.down)
        np.cumsum(dx, out=x[i, 1:])
    return x


def window_max_rows(s: np.ndarray, m: int, sentinel: float = 1.0) -> np.ndarray:
    """Row-wise z: trailing max of the last m+1 prices with the pre-grid
    sentinel, same convention as PathGrid.z."""
    if m == 0:
        return s.copy()
    pad = np.full((s.shape[0], m), sentinel)
    padded = np.concatenate([pad, s], axis=1)
    return sliding_window_view(padded, m + 1, axis=1).max(axis=-1)


def window_prev_max_rows(s: np.ndarray, m: int, sentinel: float = 1.0) -> np.ndarray:
    """Row-wise max over the m prices strictly before each step (sentinel while
    the window leaves the grid); column k covers indices [k-m, k-1].  Used to
    roll a window forward by one candidate price."""
    if m == 0:
        return np.full(s.shape, -np.inf)
    pad = np.full((s.shape[0], m), sentinel)
    padded = np.concatenate([pad, s], axis=1)
    return sliding_window_view(padded[:, :-1], m, axis=1).max(axis=-1)


def tau0_candidate_mask(x: np.ndarray, m: int) -> np.ndarray:
    """Boolean rows: column k (k >= m) marks X_{k-m} attaining the window max
    over [k-m, k].  Columns before m are False."""
    n_cols = x.shape[1]
    out = np.zeros(x.shape, dtype=bool)
    if m >= n_cols:
        return out
    w = sliding_window_view(x, m + 1, axis=1).max(axis=-1)
    out[:, m:] = x[:, : n_cols - m] >= w
    return out


def run_in_blocks(total: int, block_size: int, n_threads: int, worker) -> None:
    """Call worker(lo, hi) over [0, total) in fixed-size blocks, optionally on
    a thread pool.  Workers must write only to disjoint index ranges of
    preallocated arrays; block boundaries are independent of n_threads, so
    results are identical at any thread count."""
    spans = [(lo, min(lo + block_size, total)) for lo in range(0, total, block_size)]
    if n_threads <= 1 or len(spans) <= 1:
        for lo, hi in spans:
            worker(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        for f in [pool.submit(worker, lo, hi) for lo, hi in spans]:
            f.result()
