"""Command-line front end: run one scenario file and write CSV artifacts plus a summary.

Exit status: 0 success, 1 invalid scenario, 2 numerical failure (non-convergence,
singular system, failed check), 3 I/O failure.  ``summary.txt`` is written
whenever the output directory is usable.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time as _time
import warnings
from pathlib import Path

import numpy as np

from .grid import GridError
from .minimax import (
    MinimaxError,
    solve_least_favorable,
    solve_least_favorable_one_sided,
    verify_saddle_point,
)
from .model import ModelError
from .operators import SolveError
from .oracle import brute_force_projection, compare_with_oracle, monte_carlo_check, simulate_paths
from .scenario import Scenario, ScenarioError, load_scenario
from .solver import mse_frequency_form, solve_filter, truncation_sweep

__all__ = ["main", "run", "COMMANDS"]

COMMANDS = ("filter", "truncated", "minimax", "montecarlo", "oracle-check")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _write_csv(path: Path, header, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])


def _write_solution(out: Path, sol, h=None) -> None:
    h = sol.h if h is None else h
    _write_csv(out / "h.csv", ["lambda", "re_h", "im_h"], [sol.freq.nodes, h.real, h.imag])
    _write_csv(out / "c.csv", ["t", "c"], [sol.time.nodes, sol.c])
    _write_csv(out / "v.csv", ["t", "v"], [sol.v_times, sol.v])


class _Summary:
    def __init__(self):
        self.lines: list[str] = []

    def add(self, key, value):
        self.lines.append(f"{key} = {_fmt(value)}")

    def section(self, title):
        self.lines.append(f"[{title}]")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _solution_block(summ: _Summary, sol) -> None:
    summ.add("mse", sol.mse)
    summ.add("variance", sol.variance)
    summ.add("mse_frequency_form", mse_frequency_form(sol))
    summ.add("time_nodes", len(sol.time))
    summ.add("frequency_nodes", sol.freq.size)
    summ.add("observation_nodes", sol.v.size)
    for key in sorted(sol.diagnostics):
        summ.add(key, sol.diagnostics[key])


def _cmd_filter(sc: Scenario, out: Path, summ: _Summary, args) -> int:
    time, freq = sc.grids()
    sol = solve_filter(sc.model(), time, freq)
    _write_solution(out, sol)
    summ.section("filter")
    _solution_block(summ, sol)
    return EXIT_OK


def _cmd_truncated(sc: Scenario, out: Path, summ: _Summary, args) -> int:
    time, freq = sc.grids()
    model = sc.model()
    cuts = sc.truncation or (model.weight.support,)
    full, rows = truncation_sweep(model, time, freq, cuts)
    _write_solution(out, full)
    _write_csv(out / "truncated.csv", ["n_cut", "mse_n", "gap"], list(zip(*rows)))
    summ.section("truncated")
    summ.add("mse", full.mse)
    summ.add("weight_support", model.weight.support)
    for n_cut, mse_n, gap in rows:
        summ.add(f"mse_n[{_fmt(n_cut)}]", mse_n)
        summ.add(f"gap[{_fmt(n_cut)}]", gap)
    return EXIT_OK


def _cmd_minimax(sc: Scenario, out: Path, summ: _Summary, args) -> int:
    if not sc.has_minimax:
        raise ScenarioError(["scenario has no 'minimax' section"])
    time, freq = sc.grids()
    model = sc.model()
    cf, cg = sc.classes()
    opts = dict(damping=sc.damping, tol=sc.tol, max_iter=sc.max_iter, equations=sc.equations)
    if cf is not None and cg is not None:
        res = solve_least_favorable(cf, cg, time, freq, model.weight, **opts)
    elif cf is not None:
        res = solve_least_favorable_one_sided(model.noise, cf, "f", time, freq, model.weight,
                                              **opts)
    else:
        res = solve_least_favorable_one_sided(model.signal, cg, "g", time, freq, model.weight,
                                              **opts)
    _write_solution(out, res.solution, res.h0)
    _write_csv(out / "lf_densities.csv", ["lambda", "f0", "g0"], [freq.nodes, res.f0, res.g0])
    summ.section("minimax")
    summ.add("status", res.status)
    summ.add("converged", res.converged)
    summ.add("iterations", res.iterations)
    summ.add("equations", res.equations)
    summ.add("mse_least_favorable", res.mse)
    summ.add("mse_centers", res.center_mse)
    summ.add("gain_f", res.gains[0])
    summ.add("gain_g", res.gains[1])
    summ.add("alpha_f", res.alphas[0])
    summ.add("alpha_g", res.alphas[1])
    for key in sorted(res.residuals):
        summ.add(f"residual.{key}", res.residuals[key])
    if not res.converged:
        return EXIT_NUMERIC
    rep = verify_saddle_point(res, cf, cg, m=sc.saddle_samples, seed=args.seed)
    summ.section("saddle_audit")
    summ.add("passed", rep.passed)
    summ.add("samples", rep.samples)
    summ.add("max_violation", rep.max_violation)
    summ.add("tolerance", rep.tolerance)
    summ.add("density_violation", rep.density_violation)
    summ.add("filter_violation", rep.filter_violation)
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def _cmd_montecarlo(sc: Scenario, out: Path, summ: _Summary, args) -> int:
    time, freq = sc.grids()
    model = sc.model()
    sol = solve_filter(model, time, freq)
    batch = simulate_paths(model, time, freq, args.paths, args.seed)
    rep = monte_carlo_check(sol, batch)
    _write_solution(out, sol)
    summ.section("montecarlo")
    summ.add("seed", args.seed)
    summ.add("paths", rep.paths)
    summ.add("mse", rep.mse)
    summ.add("empirical_mse", rep.empirical)
    summ.add("standard_error", rep.standard_error)
    summ.add("allowance", rep.allowance)
    summ.add("passed", rep.passed)
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def _cmd_oracle(sc: Scenario, out: Path, summ: _Summary, args) -> int:
    time, freq = sc.grids()
    model = sc.model()
    sol = solve_filter(model, time, freq)
    orc = brute_force_projection(model, time, freq)
    cmp = compare_with_oracle(sol, orc)
    _write_solution(out, sol)
    summ.section("oracle_check")
    summ.add("mse_solver", sol.mse)
    summ.add("mse_oracle", orc.mse)
    summ.add("relative_gap", cmp.mse_gap)
    summ.add("coefficient_gap", cmp.weight_gap)
    summ.add("oracle_regularized", orc.regularized)
    summ.add("passed", cmp.passed)
    return EXIT_OK if cmp.passed else EXIT_NUMERIC


_DISPATCH = {
    "filter": _cmd_filter,
    "truncated": _cmd_truncated,
    "minimax": _cmd_minimax,
    "montecarlo": _cmd_montecarlo,
    "oracle-check": _cmd_oracle,
}


def run(command: str, scenario_path, out_dir=None, seed=None, paths=None) -> int:
    """Run one command on a scenario file and return the exit status."""
    summ = _Summary()
    summ.add("command", command)
    summ.add("scenario", scenario_path)
    status = EXIT_OK
    sc = None
    try:
        sc = load_scenario(scenario_path)
    except OSError as exc:
        summ.add("error", f"cannot read scenario: {exc}")
        status = EXIT_IO
    except ScenarioError as exc:
        summ.section("validation_errors")
        for e in exc.errors:
            summ.lines.append(e)
        status = EXIT_INVALID

    name = sc.name if sc is not None else Path(scenario_path).stem
    out = Path(out_dir) if out_dir is not None else Path("runs") / name / command
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO

    if sc is not None:
        args = argparse.Namespace(seed=sc.seed if seed is None else seed,
                                  paths=sc.paths if paths is None else paths)
        summ.add("name", sc.name)
        t0 = _time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                status = _DISPATCH[command](sc, out, summ, args)
            except ScenarioError as exc:
                summ.section("validation_errors")
                summ.lines.extend(exc.errors)
                status = EXIT_INVALID
            except (MinimaxError, ModelError, GridError) as exc:
                summ.add("error", exc)
                status = EXIT_INVALID
            except (SolveError, ArithmeticError, np.linalg.LinAlgError) as exc:
                summ.add("error", f"numerical failure: {exc}")
                status = EXIT_NUMERIC
            except OSError as exc:
                summ.add("error", f"I/O failure: {exc}")
                status = EXIT_IO
        if caught:
            summ.section("warnings")
            for w in caught:
                summ.lines.append(str(w.message))
        summ.section("timing")
        summ.add("seconds", round(_time.perf_counter() - t0, 3))
    summ.add("exit_status", status)
    try:
        (out / "summary.txt").write_text(summ.text())
    except OSError as exc:
        print(f"error: cannot write summary: {exc}", file=sys.stderr)
        return EXIT_IO
    return status


def _u64(text: str) -> int:
    val = int(text)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def _positive(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return val


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gapfilter",
        description="Optimal and minimax-robust filtering with missing observations.",
    )
    parser.add_argument("--command", required=True, choices=COMMANDS)
    parser.add_argument("--scenario", required=True, help="scenario YAML file")
    parser.add_argument("--out", help="output directory (default runs/<name>/<command>)")
    parser.add_argument("--seed", type=_u64, help="override run.seed")
    parser.add_argument("--paths", type=_positive, help="override run.paths")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    status = run(args.command, args.scenario, args.out, args.seed, args.paths)
    print(f"{args.command}: exit {status}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
