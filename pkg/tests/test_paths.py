"""Path simulation layer: window-max kernels against naive references,
counter-based stream invariance, and distributional sanity of the increments.
"""

import math

import numpy as np
import pytest

from foresight import (
    ModelParams,
    PathGrid,
    RngStream,
    TwoPointIncrements,
    detect_tau0,
    rolling_window_max,
    simulate_path,
)
from foresight.paths import (
    run_in_blocks,
    simulate_log_paths,
    tau0_candidate_mask,
    window_max_rows,
    window_prev_max_rows,
)


def naive_window_max(values, m, sentinel=None):
    out = np.empty(values.size)
    for k in range(values.size):
        w = list(values[max(0, k - m): k + 1])
        if sentinel is not None and k < m:
            w.append(sentinel)
        out[k] = max(w)
    return out


def test_rolling_window_max_matches_naive():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(1, 40))
        m = int(rng.integers(0, n + 3))
        v = rng.standard_normal(n)
        np.testing.assert_array_equal(rolling_window_max(v, m), naive_window_max(v, m))
        np.testing.assert_array_equal(
            rolling_window_max(v, m, sentinel=0.25),
            naive_window_max(v, m, sentinel=0.25),
        )


def test_rolling_window_max_validation():
    with pytest.raises(ValueError):
        rolling_window_max(np.zeros((2, 2)), 1)
    with pytest.raises(ValueError):
        rolling_window_max(np.zeros(3), -1)


def test_window_max_rows_matches_single():
    rng = np.random.default_rng(2)
    s = np.exp(rng.standard_normal((20, 15)) * 0.3)
    for m in (0, 1, 3, 14):
        rows = window_max_rows(s, m, sentinel=1.0)
        for i in range(s.shape[0]):
            np.testing.assert_array_equal(
                rows[i], rolling_window_max(s[i], m, sentinel=1.0)
            )


def test_window_prev_max_rows_matches_naive():
    rng = np.random.default_rng(3)
    s = np.exp(rng.standard_normal((10, 12)) * 0.3)
    for m in (1, 2, 5):
        rows = window_prev_max_rows(s, m, sentinel=1.0)
        for i in range(s.shape[0]):
            for k in range(s.shape[1]):
                w = list(s[i, max(0, k - m): k])
                w += [1.0] * (m - k if k < m else 0)
                assert rows[i, k] == max(w)
    assert np.all(window_prev_max_rows(s, 0) == -np.inf)


def test_tau0_candidate_mask_matches_naive():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((15, 18))
    for m in (1, 3, 6):
        mask = tau0_candidate_mask(x, m)
        for i in range(x.shape[0]):
            for k in range(x.shape[1]):
                expect = k >= m and x[i, k - m] >= x[i, k - m: k + 1].max()
                assert mask[i, k] == expect
    assert not tau0_candidate_mask(x, x.shape[1]).any()


def test_detect_tau0_known_path():
    # X falls from the start: index m is the first time X_{k-m} tops its window
    mp = ModelParams(h=0.25, n_steps=8, m=3)
    pg = PathGrid(mp=mp, x=-np.arange(9.0))
    assert detect_tau0(pg, 3) == 3
    assert detect_tau0(pg, 3, start_index=2) == 5
    # X rises throughout: the left edge never attains the window max
    pg_up = PathGrid(mp=mp, x=np.arange(9.0))
    assert detect_tau0(pg_up, 3) is None
    with pytest.raises(ValueError):
        detect_tau0(pg, 3, start_index=-1)


def test_detect_tau0_matches_mask():
    mp = ModelParams(h=0.1, n_steps=40, m=4)
    for pid in range(20):
        pg = simulate_path(mp, RngStream(seed=6, path_id=pid))
        mask = tau0_candidate_mask(pg.x[None, :], 4)[0]
        hits = np.flatnonzero(mask)
        expect = int(hits[0]) if hits.size else None
        assert detect_tau0(pg, 4) == expect


def test_stream_batching_invariance():
    # identical paths no matter how the batch is split or offset
    mp = ModelParams(h=0.02, n_steps=25, m=5)
    whole = simulate_log_paths(mp, seed=9, n_paths=8)
    parts = np.vstack([
        simulate_log_paths(mp, seed=9, n_paths=3),
        simulate_log_paths(mp, seed=9, n_paths=5, first_path_id=3),
    ])
    np.testing.assert_array_equal(whole, parts)
    inc = TwoPointIncrements.from_grid(mp.h)
    whole2 = simulate_log_paths(mp, seed=9, n_paths=6, increments=inc)
    parts2 = np.vstack([
        simulate_log_paths(mp, seed=9, n_paths=2, increments=inc),
        simulate_log_paths(mp, seed=9, n_paths=4, first_path_id=2, increments=inc),
    ])
    np.testing.assert_array_equal(whole2, parts2)
    # and a different seed actually changes the draws
    assert not np.array_equal(whole, simulate_log_paths(mp, seed=10, n_paths=8))


def test_simulate_path_matches_batch():
    mp = ModelParams(h=0.05, n_steps=12, m=2)
    batch = simulate_log_paths(mp, seed=11, n_paths=4)
    for pid in range(4):
        pg = simulate_path(mp, RngStream(seed=11, path_id=pid))
        np.testing.assert_array_equal(pg.x, batch[pid])


def test_run_in_blocks_thread_invariance():
    def fill(out):
        def worker(lo, hi):
            out[lo:hi] = np.arange(lo, hi) * 1.5
        return worker

    for total, block in ((1000, 64), (37, 8), (5, 100)):  # includes ragged tail
        a = np.empty(total)
        b = np.empty(total)
        run_in_blocks(total, block, 1, fill(a))
        run_in_blocks(total, block, 4, fill(b))
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a, np.arange(total) * 1.5)


def test_model_params():
    mp = ModelParams(h=0.004, n_steps=250, m=10)
    assert mp.a == pytest.approx(0.04)
    assert mp.horizon == pytest.approx(1.0)
    for bad in ({"h": 0.0}, {"h": -1.0}, {"n_steps": 0}, {"m": -1}, {"m": 251}):
        kwargs = {"h": 0.004, "n_steps": 250, "m": 10, **bad}
        with pytest.raises(ValueError):
            ModelParams(**kwargs)


def test_two_point_increments():
    inc = TwoPointIncrements.from_grid(0.01, drift=-0.5)
    assert 0.5 * (inc.up + inc.down) == pytest.approx(-0.5 * 0.01)
    assert inc.up - inc.down == pytest.approx(2 * math.sqrt(0.01))
    assert 0.5 * (inc.up**2 + inc.down**2) - (0.5 * (inc.up + inc.down)) ** 2 == (
        pytest.approx(0.01)
    )
    with pytest.raises(ValueError):
        TwoPointIncrements(up=0.1, down=-0.1, p_up=1.0)


def test_path_grid_contracts():
    mp = ModelParams(h=0.02, n_steps=30, m=6)
    pg = simulate_path(mp, RngStream(seed=13, path_id=0))
    assert pg.x[0] == 0.0
    np.testing.assert_array_equal(pg.s, np.exp(pg.x))
    np.testing.assert_array_equal(pg.g, pg.z / pg.s)
    assert np.all(pg.g >= 1.0)  # the window always contains the current price
    # g == 1 exactly where the current price is the whole window's max
    peaks = np.flatnonzero(pg.g == 1.0)
    assert peaks.size >= 1
    for k in peaks:
        assert pg.z[k] == pg.s[k]
    with pytest.raises(ValueError):
        PathGrid(mp=mp, x=np.zeros(7))


def test_terminal_distribution_moments():
    # X_N ~ N(drift * T, T): check the mean and the exp martingale at drift -1/2
    mp = ModelParams(h=0.01, n_steps=25, m=0)
    x = simulate_log_paths(mp, seed=14, n_paths=20_000)
    xt = x[:, -1]
    t = mp.horizon
    assert abs(xt.mean() - (-0.5 * t)) < 3 * xt.std(ddof=1) / math.sqrt(xt.size)
    ex = np.exp(xt)
    assert abs(ex.mean() - 1.0) < 3 * ex.std(ddof=1) / math.sqrt(ex.size)
