"""Command line front end: solve, verify, kv and norms subcommands.

All commands read a JSON scenario configuration and write CSV artifacts into
an output directory.  Output is deterministic for a given configuration and
seed: canonical index order, shortest round-trip float formatting, LF line
endings.  Exit codes: 0 success, 1 invalid configuration, 2 verification
failure, 3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .chaos import ChaosSeries, DirectionH, WeightSequence
from .multiindex import MultiIndex, TruncationBox
from .operators import ConfigError, EvolutionProblem, estimate_Ck, load_scenario
from .oracle import (
    classify_moment_regime,
    closed_form_moment,
    mc_ito,
    solve_deterministic_h,
    wick_space_noise_norm,
)
from .propagator import (
    ResourceCapError,
    default_weights,
    kv_recursion,
    mean_and_moments,
    solution_norm_sq,
    solve,
    u_h_pairing,
    weighted_norm_trajectory,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_CAP = 3

COEFF_ROW_BUDGET = 400_000


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(c) for c in row) + "\n")


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<config>", f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("<config>", f"invalid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("<config>", "top level must be an object")
    return cfg


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.order is not None:
        cfg["chaos_order"] = args.order
    if args.modes is not None:
        cfg["chaos_modes"] = args.modes
    return cfg


def _solved_with_weights(scenario):
    sol = solve(scenario.problem)
    c_values = [
        estimate_Ck(scenario.problem, k)
        for k in range(1, scenario.problem.box.modes + 1)
    ]
    if scenario.weights_kind == "derived":
        weights = default_weights(c_values)
    else:
        weights = WeightSequence.constant(scenario.weights_value)
    sol.c_values = c_values
    sol.weights = weights
    sol.r_exponent = scenario.r_exponent
    return sol


def _coeff_rows(sol):
    times = sol.times
    dim = sol.problem.space.dim
    indices = sol.indices()
    total = len(times) * len(indices) * dim
    stride = max(1, math.ceil(total / COEFF_ROW_BUDGET))
    picks = sorted(set(range(0, len(times), stride)) | {len(times) - 1})
    rows = []
    for alpha in indices:
        traj = sol.trajectories[alpha]
        name = alpha.to_string()
        for j in picks:
            for d in range(dim):
                v = complex(traj[j, d])
                rows.append((name, times[j], d, v.real, v.imag))
    return rows


def _stats_rows(sol):
    space = sol.problem.space
    mean, m2 = mean_and_moments(sol)
    w = space.weight_array()
    weighted = weighted_norm_trajectory(sol, sol.weights, sol.r_exponent)
    rows = []
    for j, t in enumerate(sol.times):
        mean_norm = math.sqrt(float(np.sum(w * np.abs(mean[j]) ** 2)))
        m2_norm = float(np.sum(w * m2[j]))
        rows.append((t, mean_norm, m2_norm, weighted[j]))
    return rows


def run_solve(config_path, out_dir, args) -> int:
    cfg = _apply_overrides(_load_config(config_path), args)
    scenario = load_scenario(cfg)
    sol = _solved_with_weights(scenario)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "coeffs.csv", ("alpha", "t", "component", "re", "im"),
               _coeff_rows(sol))
    _write_csv(out / "stats.csv",
               ("t", "mean_norm", "second_moment_norm", "weighted_norm"),
               _stats_rows(sol))
    _write_csv(out / "weights.csv", ("k", "C_k", "q_k"),
               [(k + 1, c, sol.weights.q(k + 1))
                for k, c in enumerate(sol.c_values)])
    norm = math.sqrt(solution_norm_sq(sol, sol.weights, sol.r_exponent))
    print(
        f"solved {len(sol.trajectories)} coefficients to order "
        f"{sol.problem.box.order}; weighted norm {norm:.6e} "
        f"(r = {sol.r_exponent})"
    )
    return EXIT_OK


def _pairing_tail(sol, h: DirectionH):
    """Measured truncation tail of the exponential pairing.

    Sup-norm of the top-level contribution, extrapolated geometrically from
    the ratio of the last two level contributions.
    """
    space = sol.problem.space
    w = space.weight_array()
    by_level = {}
    for alpha in sol.indices():
        coeff = h.power(alpha)
        if coeff == 0.0:
            continue
        term = sol.trajectories[alpha] * (coeff / math.sqrt(alpha.factorial()))
        lvl = alpha.order
        by_level[lvl] = by_level.get(lvl, 0.0) + term
    tops = sorted(by_level)
    if len(tops) < 2:
        return 0.0
    def sup(traj):
        return float(np.max(np.sqrt(np.sum(w * np.abs(traj) ** 2, axis=1))))
    last = sup(by_level[tops[-1]])
    prev = sup(by_level[tops[-2]])
    ratio = min(0.9, last / prev) if prev > 0 else 0.5
    return last * ratio / (1.0 - ratio) + last


def _verify_rows(scenario, sol, out: Path):
    """Scenario-appropriate oracle comparisons; returns report rows."""
    problem = scenario.problem
    space = problem.space
    w = space.weight_array()
    rows = []

    def add(quantity, chaos_value, oracle_value, tol, passed):
        rows.append((quantity, chaos_value, oracle_value, tol, int(passed)))

    mean, m2 = mean_and_moments(sol)

    # mean dynamics: the mean must solve the unperturbed equation
    det0 = solve_deterministic_h(problem, DirectionH.zero(problem.box.modes))
    scale = max(1.0, float(np.max(np.abs(det0))))
    diff = float(np.max(np.abs(mean - det0))) / scale
    add("mean_vs_deterministic", diff, 0.0, 1e-10, diff <= 1e-10)

    # exponential pairing against the perturbed deterministic solve
    directions = [DirectionH((0.3,) + (0.0,) * (problem.box.modes - 1))]
    if problem.box.modes > 1:
        spread = [0.2 / math.sqrt(problem.box.modes)] * problem.box.modes
        directions.append(DirectionH(tuple(spread)))
    for h in directions:
        pair = u_h_pairing(sol, h)
        det = solve_deterministic_h(problem, h)
        denom = max(float(np.max(np.abs(det))), 1e-30)
        diff = float(np.max(np.abs(pair - det))) / denom
        tol = 1e-6 + _pairing_tail(sol, h) / denom
        label = ",".join(f"{c:g}" for c in h.coords)
        add(f"uh_pairing[h={label}]", diff, 0.0, tol, diff <= tol)

    if scenario.equation == "ode" and scenario.noise_kind == "single-gaussian":
        # closed form: coefficients e^{a t} (sigma t)^n / sqrt(n!)
        a0 = problem.A.value
        T = problem.T
        for n in range(problem.box.order + 1):
            alpha = MultiIndex.unit(1, n) if n else MultiIndex.zero()
            got = float(np.real(sol.coeff_trajectory(alpha)[-1, 0]))
            want = math.exp(a0 * T) * (scenario.sigma * T) ** n / math.sqrt(math.factorial(n))
            rel = abs(got - want) / abs(want)
            add(f"coefficient[n={n}]", got, want, 1e-6, rel <= 1e-6)

    if scenario.equation == "heat" and scenario.noise_kind == "single-gaussian":
        y = scenario.grid.freqs()
        u0h = problem.u0.coeff(MultiIndex.zero())
        T = problem.T
        for d in range(space.dim):
            yy = float(y[d])
            if yy <= 0.0 or abs(u0h[d]) < 1e-8:
                continue
            if scenario.m_order == 1 and scenario.sigma == 1.0:
                if yy**2 * T**2 > 3.0:
                    continue
                want = wick_space_noise_norm(T, yy, 1, u0h[d])
                got = float(m2[-1, d])
                rel = abs(got - want) / want
                add(f"wick_space_mode[y={yy:g}]", got, want, 0.02, rel <= 0.02)
            elif scenario.m_order == 2:
                x = scenario.sigma**2 * yy**4 * T**2
                if x > 4.6:
                    continue
                growth = float(m2[-1, d]) / (abs(u0h[d]) ** 2 * math.exp(-2 * yy**2 * T))
                want = math.exp(x)
                rel = abs(growth - want) / want
                add(f"degenerate_growth[y={yy:g}]", growth, want, 0.05, rel <= 0.05)
        if scenario.m_order == 2:
            # weighted norm must stay finite and truncation-stable
            lower = solve(_reduced_problem(problem, problem.box.order - 2))
            v_hi = solution_norm_sq(sol, sol.weights, sol.r_exponent)
            v_lo = solution_norm_sq(lower, sol.weights, sol.r_exponent)
            rel = abs(v_hi - v_lo) / v_hi
            add("weighted_norm_stability", v_hi, v_lo, 0.005, rel <= 0.005)

    if scenario.noise_kind == "time-white" and scenario.equation == "heat":
        y = scenario.grid.freqs()
        u0h = problem.u0.coeff(MultiIndex.zero())
        T = problem.T
        sig = scenario.sigma
        m = scenario.m_order
        for d in range(space.dim):
            yy = float(y[d])
            if yy < 0.0 or abs(u0h[d]) < 1e-8:
                continue
            if sig**2 * abs(yy) ** (2 * m) * T > 3.0:
                continue
            want = closed_form_moment(m, sig, yy, T, u0h[d])
            got = float(m2[-1, d])
            rel = abs(got - want) / want
            add(f"per_mode_moment[y={yy:g}]", got, want, 0.02, rel <= 0.02)
        regime = classify_moment_regime(m, sig)
        chaos_regime = _chaos_regime(scenario, sol, m2)
        add("moment_regime", chaos_regime, regime, "", chaos_regime == regime)

        mc = mc_ito(problem, paths=scenario.mc_paths, dt=scenario.mc_dt,
                    seed=scenario.seed)
        _write_csv(out / "mc.csv", ("t", "mean", "mean_se", "m2", "m2_se"),
                   [(mc.times[i],
                     math.sqrt(float(np.sum(w * np.abs(mc.mean[i]) ** 2))),
                     math.sqrt(float(np.sum(w * mc.mean_se[i] ** 2))),
                     mc.m2_norm[i], mc.m2_norm_se[i])
                    for i in range(len(mc.times))])
        mean_diff = math.sqrt(float(np.sum(w * np.abs(mean[-1] - mc.mean[-1]) ** 2)))
        mean_tol = 3.0 * math.sqrt(float(np.sum(w * mc.mean_se[-1] ** 2))) + 1e-12
        add("mc_mean_norm", mean_diff, 0.0, mean_tol, mean_diff <= mean_tol)
        if m == 0:
            chaos_norm = float(np.sum(w * m2[-1]))
            tol = 3.0 * float(mc.m2_norm_se[-1]) + 1e-12
            diff = abs(chaos_norm - float(mc.m2_norm[-1]))
            add("mc_m2_norm", chaos_norm, float(mc.m2_norm[-1]), tol, diff <= tol)
        else:
            # per-mode where the ensemble has genuine variance (the modulus of
            # a first-order mode is nearly deterministic, so high modes would
            # compare a vanishing standard error against the Euler bias)
            for d in range(space.dim):
                yy = float(y[d])
                if abs(yy) > 1.26 or abs(u0h[d]) < 1e-8:
                    continue
                se = float(mc.m2_se[-1, d])
                tol = 3.0 * se + 1e-12
                diff = abs(float(m2[-1, d]) - float(mc.m2[-1, d]))
                add(f"mc_m2_mode[y={yy:g}]", float(m2[-1, d]),
                    float(mc.m2[-1, d]), tol, diff <= tol)

    return rows


def _reduced_problem(problem, order):
    box = TruncationBox(max(order, 0), problem.box.modes)
    u0 = ChaosSeries(problem.space, box)
    for alpha, vec in problem.u0.items():
        if box.contains(alpha):
            u0.set_coeff(alpha, vec)
    return EvolutionProblem(problem.space, problem.A, problem.M, problem.noise,
                            u0, problem.T, problem.nt, box, f=problem.f)


def _chaos_regime(scenario, sol, m2) -> str:
    """Regime inferred from the measured per-mode growth of the chaos moment."""
    y = scenario.grid.freqs()
    u0h = scenario.problem.u0.coeff(MultiIndex.zero())
    T = scenario.problem.T
    sam = []
    for d in range(scenario.problem.space.dim):
        yy = float(y[d])
        if yy <= 0.0 or abs(u0h[d]) < 1e-8:
            continue
        if scenario.sigma**2 * yy ** (2 * scenario.m_order) * T > 3.0:
            continue
        g = float(m2[-1, d]) / abs(u0h[d]) ** 2
        sam.append((yy, g))
    sam.sort()
    if len(sam) < 2:
        return "unresolved"
    (y1, g1), (y2, g2) = sam[0], sam[-1]
    slope = (math.log(g2) - math.log(g1)) / ((y2**2 - y1**2) * T)
    # growth rate of the moment envelope in y^2; positive means divergent
    if slope > 0.05:
        return "divergent"
    if slope < -0.05:
        return "integrable"
    return "boundary"


def run_verify(config_path, out_dir, args) -> int:
    cfg = _apply_overrides(_load_config(config_path), args)
    scenario = load_scenario(cfg)
    sol = _solved_with_weights(scenario)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = _verify_rows(scenario, sol, out)
    _write_csv(out / "report.csv",
               ("quantity", "chaos_value", "oracle_value", "tolerance", "pass"),
               rows)
    failures = 0
    for quantity, chaos_value, oracle_value, tol, passed in rows:
        status = "PASS" if passed else "FAIL"
        if not passed:
            failures += 1
        print(f"{status} {quantity}: chaos={_fmt(chaos_value)} "
              f"oracle={_fmt(oracle_value)} tol={_fmt(tol)}")
    print(f"verify: {len(rows) - failures}/{len(rows)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_VERIFY


def run_kv(config_path, out_dir, args) -> int:
    cfg = _apply_overrides(_load_config(config_path), args)
    scenario = load_scenario(cfg)
    n_max = min(args.nmax, cfg["chaos_order"])
    sol = _solved_with_weights(scenario)
    result = kv_recursion(sol, sol.weights, n_max)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "kv.csv", ("level", "max_deviation", "max_relative_deviation"),
               [(n, result.deviations[n], result.relative_deviations[n])
                for n in range(len(result.deviations))])
    worst = max(result.relative_deviations)
    print(f"kv recursion to level {n_max}: max relative deviation {worst:.3e}")
    return EXIT_OK if worst <= 1e-8 else EXIT_VERIFY


def run_norms(config_path, out_dir, args) -> int:
    cfg = _apply_overrides(_load_config(config_path), args)
    scenario = load_scenario(cfg)
    sol = _solved_with_weights(scenario)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r_values = np.arange(args.r_min, args.r_max + 1e-9, args.r_step)
    rows = [(float(r), solution_norm_sq(sol, sol.weights, float(r)))
            for r in r_values]
    _write_csv(out / "norms.csv", ("r", "weighted_norm_sq"), rows)
    print(f"norm sweep over {len(rows)} exponents written")
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="wickprop",
        description="Chaos-propagator solver for linear stochastic evolution equations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve the propagator system and write coefficient/statistics CSVs"),
        ("verify", "run the scenario's oracles and write a comparison report"),
        ("kv", "check the weighted raising recursion level by level"),
        ("norms", "sweep the weighted norm over the exponent r"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--order", type=int, default=None, help="override chaos_order")
        p.add_argument("--modes", type=int, default=None, help="override chaos_modes")
        if name == "kv":
            p.add_argument("--nmax", type=int, default=4, help="deepest recursion level")
        if name == "norms":
            p.add_argument("--r-min", type=float, default=-4.0)
            p.add_argument("--r-max", type=float, default=0.0)
            p.add_argument("--r-step", type=float, default=0.5)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"solve": run_solve, "verify": run_verify,
                "kv": run_kv, "norms": run_norms}
    try:
        return handlers[args.command](args.config, args.out, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
