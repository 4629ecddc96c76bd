"""Command-line front end: formula evaluation, bound and rule experiments,
an oracle validation battery, and CSV emission.

Every experiment is deterministic given (config, seed): paths are keyed by
(seed, path_id) counter streams, phase seeds are derived from the base seed
(pilot = seed, lower bound = seed+1, upper bound = seed+2), and output files
carry the effective configuration as comment lines.  Thread count and output
path are deliberately not echoed so identical configs produce byte-identical
files at any parallelism.  Output files carry no timestamps for the same
reason.

Exit codes: 0 success, 2 invalid input, 3 numerical degeneracy, 4 validation
failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .analytic import (
    FormulaParams,
    NumericalDegeneracyError,
    a_quantities,
    excursion_rates,
    lambda_max,
    optimal_threshold,
    psi,
    rule_value,
)
from .bounds import build_bin_model, lower_bound, upper_bound
from .oracle import (
    TreeSpec,
    exact_foresight_value,
    exact_small_value,
    mc_excursion_stats,
    mc_exp_window_max,
    nonsemimartingale_demo,
)
from .paths import ModelParams, TwoPointIncrements
from .rules import RuleConfig, run_rule

SE_NOTE = "note: standard errors are absolute; multiply by 1e4 to read them in basis points"


@dataclass(frozen=True)
class RunConfig:
    """Effective experiment configuration after merging defaults, preset,
    config file, and command-line flags (later sources win).  The defaults
    are the publication-scale sizes; the desk preset divides the path counts
    by five and keeps the binning and sub-simulation sizes."""

    preset: str = "paper"
    h: float = 1.0 / 2500.0
    n_steps: int = 250
    a_over_h: tuple[int, ...] = tuple(range(1, 21))
    seed: int = 12345
    threads: int = 1
    out: str | None = None
    bins: int = 200
    samples_per_bin: int = 200
    lb_paths: int = 50_000
    ub_paths: int = 10_000
    ub_sub: int = 50
    rule_paths: int = 50_000


_PRESETS = {
    "paper": {},
    "desk": {"lb_paths": 10_000, "ub_paths": 2_000, "rule_paths": 10_000},
}


def _parse_int_list(s) -> tuple[int, ...]:
    if isinstance(s, tuple):
        return s
    vals = tuple(int(t) for t in str(s).split(",") if t.strip())
    if not vals:
        raise ValueError(f"empty integer list: {s!r}")
    return vals


_FIELD_PARSERS = {
    "preset": str,
    "h": float,
    "n_steps": int,
    "a_over_h": _parse_int_list,
    "seed": int,
    "threads": int,
    "out": str,
    "bins": int,
    "samples_per_bin": int,
    "lb_paths": int,
    "ub_paths": int,
    "ub_sub": int,
    "rule_paths": int,
}


def _load_config_file(path: str) -> dict[str, str]:
    """Flat key = value lines; # starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line is not key=value: {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if key not in _FIELD_PARSERS:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = val.strip()
    return out


def resolve_run_config(ns: argparse.Namespace) -> RunConfig:
    file_vals = _load_config_file(ns.config) if getattr(ns, "config", None) else {}
    preset = getattr(ns, "preset", None) or file_vals.get("preset") or "paper"
    if preset not in _PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    vals = {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
    vals.update(_PRESETS[preset])
    for key, raw in file_vals.items():
        vals[key] = _FIELD_PARSERS[key](raw)
    for key, parse in _FIELD_PARSERS.items():
        arg = getattr(ns, key, None)
        if arg is not None:
            vals[key] = parse(arg)
    vals["preset"] = preset
    rc = RunConfig(**vals)
    if rc.threads < 1:
        raise ValueError(f"threads must be >= 1, got {rc.threads}")
    return rc


def _fmt_cfg(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# threads and out are execution details, not part of the experiment identity;
# echoing them would break byte-identical output across thread counts
_ECHO_EXCLUDE = ("threads", "out")


def _config_comments(rc: RunConfig, used: tuple[str, ...]) -> list[str]:
    return [f"# {name} = {_fmt_cfg(getattr(rc, name))}" for name in used
            if name not in _ECHO_EXCLUDE]


def _emit(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_formulas(ns: argparse.Namespace) -> int:
    p = FormulaParams(a=ns.a, eta=ns.eta)
    r = excursion_rates(p)
    lines = [
        f"beta = {r.beta!r}",
        f"nu = {r.nu!r}",
        f"nu_a = {r.nu_a!r}",
        f"nu_alpha = {r.nu_alpha!r}",
    ]
    if ns.q is not None:
        psi0, psi1 = psi(ns.q, p)
        a0, a_minus, a_plus = a_quantities(ns.q, p)
        lines += [
            f"psi0 = {psi0!r}",
            f"psi1 = {psi1!r}",
            f"A0 = {a0!r}",
            f"A_minus = {a_minus!r}",
            f"A_plus = {a_plus!r}",
            f"K = {rule_value(ns.q, p)!r}",
        ]
    if p.eta > 0.0:
        sol = optimal_threshold(p)
        lines += [f"q_star = {sol.q_star!r}", f"k_star = {sol.k_star!r}"]
    lines.append(f"lambda = {lambda_max(p.a)!r}")
    _emit(lines, None)
    return 0


def cmd_qstar(ns: argparse.Namespace) -> int:
    etas = tuple(float(t) for t in str(ns.eta).split(",") if t.strip())
    if not etas:
        raise ValueError(f"no eta values in {ns.eta!r}")
    if len(etas) == 1:
        sol = optimal_threshold(FormulaParams(a=ns.a, eta=etas[0]))
        _emit([f"q_star = {sol.q_star!r}", f"k_star = {sol.k_star!r}"], ns.out)
        return 0
    lines = ["eta,q_star,k_star"]
    for eta in etas:
        sol = optimal_threshold(FormulaParams(a=ns.a, eta=eta))
        lines.append(f"{eta:g},{sol.q_star:.12g},{sol.k_star:.12g}")
    _emit(lines, ns.out)
    return 0


_BOUNDS_FIELDS = ("preset", "h", "n_steps", "a_over_h", "seed",
                  "bins", "samples_per_bin", "lb_paths", "ub_paths", "ub_sub")
BOUNDS_HEADER = "a_over_h,lower,lower_se,upper,upper_se,gap_pct"


def cmd_bounds(ns: argparse.Namespace) -> int:
    rc = resolve_run_config(ns)
    lines = _config_comments(rc, _BOUNDS_FIELDS)
    lines.append(f"# {SE_NOTE}")
    lines.append(BOUNDS_HEADER)
    for m in rc.a_over_h:
        mp = ModelParams(h=rc.h, n_steps=rc.n_steps, m=m, drift=0.5)
        bm = build_bin_model(mp, rc.bins, rc.samples_per_bin, rc.seed,
                             n_threads=rc.threads)
        lb = lower_bound(bm, mp, rc.lb_paths, rc.seed + 1, n_threads=rc.threads)
        ub = upper_bound(bm, mp, rc.ub_paths, rc.ub_sub, rc.seed + 2,
                         n_threads=rc.threads)
        gap = 100.0 * (ub.mean - lb.mean) / lb.mean
        lines.append(f"{m},{lb.mean:.6f},{lb.se:.6f},{ub.mean:.6f},{ub.se:.6f},{gap:.4f}")
    _emit(lines, rc.out)
    return 0


_RULES_FIELDS = ("preset", "h", "n_steps", "a_over_h", "seed", "rule_paths")
RULES_HEADER = "a_over_h,rule1,rule1_se,rule2,rule2_se"
FIG1_HEADER = "a_over_h,rule_value,lower_bound,upper_bound"


def _read_bounds_csv(path: str) -> dict[int, tuple[str, str]]:
    rows: dict[int, tuple[str, str]] = {}
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != BOUNDS_HEADER:
        raise ValueError(f"{path} does not start with the header {BOUNDS_HEADER!r}")
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ValueError(f"malformed bounds row: {ln!r}")
        rows[int(parts[0])] = (parts[1], parts[3])
    return rows


def cmd_rules(ns: argparse.Namespace) -> int:
    rc = resolve_run_config(ns)
    # resolve the series-file inputs before simulating anything so a bad flag
    # combination or bounds file fails fast instead of after the full run
    bmap = None
    if ns.fig1_out:
        if not ns.bounds_csv:
            raise ValueError("--fig1-out needs --bounds-csv for the bound columns")
        bmap = _read_bounds_csv(ns.bounds_csv)
        for m in rc.a_over_h:
            if m not in bmap:
                raise ValueError(f"a_over_h={m} missing from {ns.bounds_csv}")
    lines = _config_comments(rc, _RULES_FIELDS)
    lines.append(f"# {SE_NOTE}")
    lines.append(RULES_HEADER)
    rule2 = {}
    for m in rc.a_over_h:
        mp = ModelParams(h=rc.h, n_steps=rc.n_steps, m=m, drift=-0.5)
        # both variants on common paths: differences are better resolved
        r1 = run_rule(RuleConfig(1, mp, rc.rule_paths, rc.seed), rc.threads)
        r2 = run_rule(RuleConfig(2, mp, rc.rule_paths, rc.seed), rc.threads)
        lines.append(f"{m},{r1.mean:.6f},{r1.se:.6f},{r2.mean:.6f},{r2.se:.6f}")
        rule2[m] = r2
    _emit(lines, rc.out)
    if bmap is not None:
        series = _config_comments(rc, _RULES_FIELDS)
        series.append("# rule_value is the variant-2 estimate; bounds joined from "
                      "the bounds CSV on a_over_h")
        series.append(FIG1_HEADER)
        for m in rc.a_over_h:
            lo, up = bmap[m]
            series.append(f"{m},{rule2[m].mean:.6f},{lo},{up}")
        _emit(series, ns.fig1_out)
    return 0


def cmd_demo_prop0(ns: argparse.Namespace) -> int:
    mean, se = nonsemimartingale_demo(ns.n, ns.a, ns.paths, ns.seed)
    target = math.sqrt(2.0 / math.pi)
    lines = [
        f"mean = {mean!r}",
        f"se = {se!r}",
        f"target = {target!r}",
        f"z = {(mean - target) / se!r}",
    ]
    _emit(lines, None)
    return 0


def _validate_checks(seed: int, threads: int):
    """Yield (name, callable) oracle checks; each callable returns a detail
    string and raises AssertionError on failure."""

    def closed_form_identities():
        worst = 0.0
        for a in np.geomspace(1e-3, 4.0, 5):
            for eta in (0.0, 0.01, 1.0, 100.0):
                p = FormulaParams(a=float(a), eta=eta)
                r = excursion_rates(p)
                worst = max(worst, abs(r.nu - (r.nu_a + r.nu_alpha)) / r.nu)
                assert r.nu > 1.0, f"nu = {r.nu} not > 1 at a={a}, eta={eta}"
                if eta == 0.0:
                    assert r.nu_alpha == 0.0
                psi0, psi1 = psi(0.0, p)
                worst = max(worst, abs(psi0 - r.nu_a * math.exp(-eta * a))
                            / max(psi0, 1e-300))
                assert psi1 == 0.0, f"psi1(0) = {psi1} at a={a}, eta={eta}"
        assert worst <= 1e-10, f"worst relative identity error {worst:.3e}"
        return f"worst rel err {worst:.2e} over 20 (a, eta) pairs"

    def threshold_fixed_points():
        worst = 0.0
        for a in (0.004, 0.04):
            for eta in (1.0, 100.0, 5000.0):
                sol = optimal_threshold(FormulaParams(a=a, eta=eta))
                worst = max(worst, abs(sol.k_star - math.exp(-sol.q_star)))
        assert worst <= 1e-6, f"worst |K(q*) - exp(-q*)| = {worst:.3e}"
        return f"worst fixed-point gap {worst:.2e} over 6 cases"

    def tree_equivalence():
        n = 0
        for depth in (4, 8, 10):
            for m in (0, 1, 3, depth):
                ts = TreeSpec.from_grid(depth, m, h=0.01)
                v_small = exact_small_value(ts)
                v_fore = exact_foresight_value(ts)
                assert v_small == v_fore, (
                    f"depth={depth}, m={m}: {v_small!r} != {v_fore!r}")
                n += 1
        return f"{n} instances bit-exact"

    def tree_bound_bracket():
        h = 0.01
        ts = TreeSpec.from_grid(10, 3, h=h)
        exact = exact_small_value(ts)
        mp = ModelParams(h=h, n_steps=10, m=3, drift=-0.5)
        inc = TwoPointIncrements.from_grid(h, -0.5)
        bm = build_bin_model(mp, 40, 50, seed, increments=inc, n_threads=threads)
        lb = lower_bound(bm, mp, 4000, seed + 1, n_threads=threads)
        ub = upper_bound(bm, mp, 400, 20, seed + 2, n_threads=threads)
        lo, hi = lb.mean - 4 * lb.se, ub.mean + 4 * ub.se
        assert lo <= exact <= hi, f"exact {exact:.6f} outside [{lo:.6f}, {hi:.6f}]"
        return f"exact {exact:.6f} in [{lo:.6f}, {hi:.6f}]"

    def excursion_statistics():
        p = FormulaParams(a=0.1, eta=5.0)
        q = -0.3
        # h fine enough that excursion-boundary grid bias sits well inside
        # the Monte Carlo noise at this path count
        st = mc_excursion_stats(p, h=2.5e-4, n_paths=3000, seed=seed + 3, q=q)
        r = excursion_rates(p)
        pm = (r.nu_alpha + (1.0 - math.exp(-p.eta * p.a)) * r.nu_a) / r.nu
        d_pm = abs(st.p_mark_first[0] - pm) / st.p_mark_first[1]
        assert d_pm <= 3.0, f"P[mark first] off by {d_pm:.2f} SE"
        psi0, _ = psi(q, p)
        cond = psi0 / (r.nu_a * math.exp(-p.eta * p.a))
        d_c = abs(st.p_depth_below_q[0] - cond) / st.p_depth_below_q[1]
        assert d_c <= 3.0, f"P[depth < q | renewal first] off by {d_c:.2f} SE"
        lam = lambda_max(p.a)
        d_l = abs(st.exp_window_max[0] - lam) / st.exp_window_max[1]
        assert d_l <= 3.0, f"E[exp window max] off by {d_l:.2f} SE"
        return (f"mark-first {d_pm:.2f} SE, depth-law {d_c:.2f} SE, "
                f"window-max mean {d_l:.2f} SE")

    def window_max_mean():
        est, se_ = mc_exp_window_max(1.0, 1e-3, 20_000, seed + 4)
        lam = lambda_max(1.0)
        d = abs(est - lam) / se_
        assert d <= 3.0, f"estimate {est:.5f} vs {lam:.5f} is {d:.2f} SE off"
        return f"estimate {est:.5f} vs analytic {lam:.5f} ({d:.2f} SE)"

    def accumulated_variation():
        mean, se_ = nonsemimartingale_demo(10_000, 1.0, 2000, seed + 5)
        target = math.sqrt(2.0 / math.pi)
        d = abs(mean - target) / se_
        assert d <= 3.0, f"mean {mean:.5f} vs {target:.5f} is {d:.2f} SE off"
        return f"mean {mean:.5f} vs sqrt(2/pi) {target:.5f} ({d:.2f} SE)"

    def zero_window_martingale():
        mp = ModelParams(h=1.0 / 2500.0, n_steps=250, m=0, drift=-0.5)
        details = []
        for variant in (1, 2):
            est = run_rule(RuleConfig(variant, mp, 4000, seed + 6), threads)
            d = abs(est.mean - 1.0) / est.se
            assert d <= 3.0, f"rule {variant} mean {est.mean:.4f} is {d:.2f} SE from 1"
            details.append(f"rule{variant} {d:.2f} SE")
        mq = ModelParams(h=1.0 / 2500.0, n_steps=250, m=0, drift=0.5)
        bm = build_bin_model(mq, 50, 40, seed + 7, n_threads=threads)
        lb = lower_bound(bm, mq, 2000, seed + 8, n_threads=threads)
        assert lb.mean == 1.0 and lb.se == 0.0, f"ratio payoff not constant: {lb}"
        details.append("lower bound exactly 1")
        return ", ".join(details)

    yield "closed-form identities", closed_form_identities
    yield "threshold fixed points", threshold_fixed_points
    yield "tree value equivalence", tree_equivalence
    yield "tree value in simulated bracket", tree_bound_bracket
    yield "excursion statistics vs closed form", excursion_statistics
    yield "window-max mean vs closed form", window_max_mean
    yield "accumulated-variation demo", accumulated_variation
    yield "zero-window martingale checks", zero_window_martingale


def cmd_validate(ns: argparse.Namespace) -> int:
    seed = ns.seed if ns.seed is not None else 12345
    threads = ns.threads if ns.threads is not None else 1
    failures = 0
    for name, fn in _validate_checks(seed, threads):
        try:
            detail = fn()
            print(f"PASS  {name:<38} {detail}")
        except Exception as e:  # a failed oracle is a report, not a crash
            failures += 1
            print(f"FAIL  {name:<38} {e}")
    print(f"{'FAIL' if failures else 'PASS'}: {failures} of 8 checks failed"
          if failures else "PASS: all 8 checks passed")
    return 4 if failures else 0


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="flat key=value config file; flags here override it")
    p.add_argument("--preset", choices=tuple(_PRESETS), default=None,
                   help="size preset: paper (default) or desk (path counts / 5)")
    p.add_argument("--h", type=float, default=None, help="grid step")
    p.add_argument("--n-steps", type=int, default=None, help="number of grid steps")
    p.add_argument("--m", "--a-over-h", dest="a_over_h", default=None,
                   help="comma-separated window sizes, in steps")
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (results are identical at any count)")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--bins", type=int, default=None, help="cells per step")
    p.add_argument("--samples-per-bin", type=int, default=None,
                   help="pilot paths per cell")
    p.add_argument("--lb-paths", type=int, default=None, help="lower-bound paths")
    p.add_argument("--ub-paths", type=int, default=None, help="upper-bound outer paths")
    p.add_argument("--ub-sub", type=int, default=None,
                   help="sub-simulations per step for the upper bound")
    p.add_argument("--rule-paths", type=int, default=None, help="rule evaluation paths")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="foresight",
        description="Value of a-ahead foresight: fixed-window lookback pricing "
                    "via closed forms, simulated bounds, and explicit rules.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("formulas", help="print the closed-form quantities")
    f.add_argument("--a", type=float, required=True, help="window length")
    f.add_argument("--eta", type=float, required=True, help="mark rate")
    f.add_argument("--q", type=float, default=None,
                   help="depth threshold for the psi/A/K lines")
    f.set_defaults(func=cmd_formulas)

    q = sub.add_parser("qstar", help="solve the optimal depth threshold")
    q.add_argument("--a", type=float, required=True, help="window length")
    q.add_argument("--eta", required=True,
                   help="mark rate, or comma-separated rates for CSV output")
    q.add_argument("--out", default=None, help="output file (default: stdout)")
    q.set_defaults(func=cmd_qstar)

    b = sub.add_parser("bounds", help="simulated lower/upper bounds per window size")
    _add_run_flags(b)
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("rules", help="simulate both explicit rules per window size")
    _add_run_flags(r)
    r.add_argument("--fig1-out", default=None,
                   help="also write a rule-vs-bounds series file")
    r.add_argument("--bounds-csv", default=None,
                   help="bounds CSV to join for the series file")
    r.set_defaults(func=cmd_rules)

    v = sub.add_parser("validate", help="run the oracle cross-check battery")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--threads", type=int, default=None)
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("demo-prop0",
                       help="accumulated-variation statistic of the window max "
                            "(mean tends to sqrt(2/pi))")
    d.add_argument("--n", type=int, default=10_000, help="grid steps per path")
    d.add_argument("--a", type=float, default=1.0, help="window length")
    d.add_argument("--paths", type=int, default=10_000)
    d.add_argument("--seed", type=int, default=12345)
    d.set_defaults(func=cmd_demo_prop0)

    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except NumericalDegeneracyError as e:
        print(f"numerical degeneracy: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
