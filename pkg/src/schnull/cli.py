"""Experiment runner.

    schnull <subcommand> --config run.cfg [--set key=value ...] [--out DIR]
                         [--seed N] [--threads N]

Every run directory holds resolved.cfg (all keys, re-loadable), summary.json,
one or more CSV tables and plot.gp. Exit codes: 0 success, 2 invalid input,
3 numerical failure (non-finite values, Picard divergence, failed check),
4 an iterative solver did not converge.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional

import click
import numpy as np

from . import carleman, config, hum, identity, semilinear, weights
from .filtration import Tree, TreeTooLarge
from .grid import Grid
from .spde import NumericalError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_NOT_CONVERGED = 0, 2, 3, 4


@dataclass
class RunResult:
    summary: dict[str, Any]
    tables: dict[str, tuple[list[str], list[list[Any]]]] = field(default_factory=dict)
    plot: str = ""
    status: int = EXIT_OK


# -- shared setup ------------------------------------------------------------


def evaluator(cfg: config.RunConfig) -> weights.WeightEvaluator:
    p = weights.WeightParams(
        lam=cfg.lam, mu=cfg.mu, m=cfg.m, T=cfg.T, sigma_override=cfg.sigma,
        scaling=cfg.scaling, ell_magnitude=cfg.ell_magnitude,
    )
    return weights.WeightEvaluator.build(p, cfg.G0)


def grid_tree(cfg: config.RunConfig) -> tuple[Grid, Tree]:
    return Grid(cfg.N, cfg.bc), Tree(cfg.depth, cfg.T, cfg.substeps)


def initial_state(cfg: config.RunConfig, grid: Grid) -> np.ndarray:
    x = grid.x
    if cfg.initial == "sin2":
        return np.sin(np.pi * x) ** 2
    if cfg.initial == "bump":
        return np.exp(-50 * (x - 0.5) ** 2)
    if cfg.initial == "random":
        rng = np.random.default_rng([cfg.seed, 7])
        return grid.implicit_solve(rng.standard_normal(grid.n), 1e-4)
    return np.zeros(grid.n)


def lq_problem(cfg, grid, tree, ev, eps) -> hum.LQProblem:
    cw = hum.CostWeights.full() if cfg.cost == "full" else hum.CostWeights.state_only()
    return hum.LQProblem(grid, tree, ev, cfg.G0, eps, cw)


def _num(v: float) -> Any:
    """JSON-safe float: non-finite values become strings."""
    v = float(v)
    return v if math.isfinite(v) else str(v)


# -- pipelines ---------------------------------------------------------------


def run_weights(cfg: config.RunConfig) -> RunResult:
    ev = evaluator(cfg)
    inv = weights.check_invariants(ev)
    t = np.linspace(0.0, cfg.T, cfg.table_nt + 1)[:-1]
    x = np.linspace(0.0, 1.0, cfg.table_nx)
    ell, log_xi = ev.log_weights(t, x)
    g = weights.gamma(t, ev.params)
    rows = [[t[i], x[j], g[i], ell[i, j], log_xi[i, j]] for i in range(len(t)) for j in range(len(x))]
    failed = sorted(k for k, v in inv.items() if v > 0)
    summary = {
        "invariants": {k: _num(v) for k, v in inv.items()},
        "failed": failed,
        "sigma": ev.params.sigma,
        "sigma_mode": ev.params.sigma_mode,
        "alpha_max": _num(float(ev.alpha(x).max())),
    }
    plot = "\n".join([
        "set datafile separator ','",
        "set xlabel 't'; set ylabel 'x'",
        "splot 'weights.csv' every ::1 using 1:2:4 with dots title 'ell'",
    ])
    return RunResult(summary, {"weights.csv": (["t", "x", "gamma", "ell", "log_xi"], rows)}, plot,
                     EXIT_NUMERICAL if failed else EXIT_OK)


def run_identity(cfg: config.RunConfig) -> RunResult:
    names = [c.name for c in identity.LIBRARY] if cfg.identity_cases == "all" else cfg.identity_cases.split(",")
    grids = tuple(int(v) for v in cfg.identity_grids.split(","))
    cases, ref_rows = [], []
    worst_rel, worst_order, worst_div = 0.0, math.inf, 0.0
    for name in names:
        case = identity.case_by_name(name.strip())
        identity.check_clamped(case)
        an = identity.deterministic_identity_residual(case, grids[-1])
        res, orders = identity.refinement_order(case, grids)
        div = identity.divergence_check(case)
        for n, r in zip(grids, res):
            ref_rows.append([case.name, n, r])
        cases.append({
            "name": case.name,
            "analytic_residual": an.residual,
            "analytic_relative": an.relative,
            "term_scale": an.scale,
            "fd_residuals": res,
            "fd_orders": orders,
            "divergence_mismatch": div,
        })
        worst_rel = max(worst_rel, an.relative)
        worst_order = min([worst_order] + orders)
        worst_div = max(worst_div, div)
    ok = worst_rel <= 1e-9 and worst_order >= 1.9
    summary = {
        "cases": cases,
        "max_analytic_relative": worst_rel,
        "min_fd_order": worst_order,
        "max_divergence_mismatch": worst_div,
        "passed": ok,
    }
    plot = "\n".join([
        "set datafile separator ','",
        "set logscale xy; set xlabel 'n'; set ylabel 'max residual'",
        "plot 'identity_refinement.csv' every ::1 using 2:3 with linespoints title 'FD layer'",
    ])
    return RunResult(summary, {"identity_refinement.csv": (["case", "n", "residual"], ref_rows)}, plot,
                     EXIT_OK if ok else EXIT_NUMERICAL)


def run_carleman(cfg: config.RunConfig) -> RunResult:
    ev = evaluator(cfg)
    grid, tree = grid_tree(cfg)
    spec = carleman.InstanceSpec(which=cfg.estimate, smooth_dt=cfg.smooth_dt)
    ens = carleman.ensemble_ratio(cfg.ensemble, cfg.seed, grid, tree, ev, cfg.G0, spec, workers=cfg.threads)
    rows_d = [r.as_row() for r in ens.reports]
    header = list(rows_d[0].keys())
    rows = [[d[k] for k in header] for d in rows_d]
    mx = ens.max_log_ratio
    summary = {"max_log_ratio": _num(mx), "quantiles": {k: _num(v) for k, v in ens.quantiles().items()},
               "n": cfg.ensemble, "estimate": cfg.estimate}
    plot = "\n".join([
        "set datafile separator ','",
        f"set xlabel 'instance'; set ylabel 'log(LHS/RHS)'",
        f"plot 'carleman.csv' every ::1 using {header.index('index') + 1}:{header.index('log_ratio') + 1} with points title '{cfg.estimate}'",
    ])
    return RunResult(summary, {"carleman.csv": (header, rows)}, plot,
                     EXIT_OK if math.isfinite(mx) else EXIT_NUMERICAL)


def run_hum(cfg: config.RunConfig) -> RunResult:
    ev = evaluator(cfg)
    grid, tree = grid_tree(cfg)
    y0 = initial_state(cfg, grid)
    levels = hum.eps_schedule(
        lambda e: lq_problem(cfg, grid, tree, ev, e), y0, cfg.eps, cfg.eps_levels,
        tol=cfg.cg_tol, max_iter=cfg.cg_max_iter,
    )
    per_eps, it_rows = [], []
    prof_cols = []
    for k, lv in enumerate(levels):
        sol = lv.solution
        per_eps.append({
            "eps": lv.eps, "terminal_norm_sq": lv.terminal_norm_sq, "ratio": lv.ratio,
            "control_u_sq": lv.control_u_sq, "control_U_sq": lv.control_U_sq, "J": lv.J,
            "iterations": lv.iterations, "converged": lv.converged,
            "optimality_residual": _num(sol.optimality_residual),
        })
        for h in sol.history:
            it_rows.append([lv.eps, h["iteration"], h["J"], h["grad_norm"]])
        yT = sol.y.terminal
        prof_cols.append((yT.mean(axis=0), np.sqrt((yT**2).mean(axis=0))))
    prof_rows = [[grid.x[i]] + [c[j][i] for c in prof_cols for j in (0, 1)] for i in range(grid.n)]
    prof_header = ["x"] + [f"{name}_{k}" for k in range(len(levels)) for name in ("mean_yT", "rms_yT")]
    summary = {"levels": per_eps, "y0_norm_sq": grid.h * float(np.sum(y0**2))}
    plot = "\n".join([
        "set datafile separator ','",
        "set xlabel 'x'; set ylabel 'rms y(T)'",
        "plot " + ", ".join(f"'hum_terminal.csv' every ::1 using 1:{3 + 2 * k} with lines title 'eps_{k}'" for k in range(len(levels))),
    ])
    status = EXIT_OK if all(lv.converged for lv in levels) else EXIT_NOT_CONVERGED
    return RunResult(summary, {
        "hum_iterations.csv": (["eps", "iteration", "J", "grad_norm"], it_rows),
        "hum_terminal.csv": (prof_header, prof_rows),
    }, plot, status)


def run_semilinear(cfg: config.RunConfig) -> RunResult:
    ev = evaluator(cfg)
    grid, tree = grid_tree(cfg)
    y0 = initial_state(cfg, grid)
    kw = {"M": cfg.clamp_M} if cfg.nonlinearity == "clamped_ch" else {}
    nl = semilinear.builtin(cfg.nonlinearity, cfg.kappa, cfg.kappa1, **kw)
    cert = semilinear.certify(nl, np.random.default_rng([cfg.seed, 11]))
    prob = lq_problem(cfg, grid, tree, ev, cfg.eps)
    res = semilinear.picard_iterate(prob, y0, nl, max_iter=cfg.picard_max_iter, tol=cfg.picard_tol, lq_tol=cfg.cg_tol,
                                    lq_max_iter=cfg.cg_max_iter)
    rep, sol = res.report, res.solution
    U_star = semilinear.absorb_g(sol.U, nl, sol.y)
    gap = semilinear.trajectory_gap(sol.y, semilinear.resimulate(prob, y0, nl, sol.u, U_star))
    rows = []
    for k in range(rep.iterations):
        rows.append([k, rep.distances[k], rep.ratios[k - 1] if k >= 1 else "", rep.source_norms[k],
                     rep.terminal_norms[k], rep.cg_iterations[k]])
    summary = {
        "converged": rep.converged,
        "iterations": rep.iterations,
        "log_distances": [_num(d) for d in rep.distances],
        "ratios": [_num(r) for r in rep.ratios],
        "max_ratio": _num(rep.max_ratio),
        "asymptotic_ratio": _num(rep.asymptotic_ratio),
        "final_terminal_norm_sq": rep.final_terminal_norm_sq,
        "resimulation_gap": gap,
        "certificate": cert,
        "kappa": cfg.kappa,
        "kappa1": cfg.kappa1,
    }
    plot = "\n".join([
        "set datafile separator ','",
        "set xlabel 'iteration'; set ylabel 'log S-distance'",
        "plot 'picard.csv' every ::1 using 1:2 with linespoints title 'log d_k'",
    ])
    status = EXIT_OK if rep.converged and sol.converged else EXIT_NOT_CONVERGED
    header = ["iteration", "log_distance", "ratio", "log_source_norm", "terminal_norm_sq", "cg_iterations"]
    return RunResult(summary, {"picard.csv": (header, rows)}, plot, status)


PIPELINES: dict[str, Callable[[config.RunConfig], RunResult]] = {
    "weights": run_weights,
    "identity-check": run_identity,
    "carleman": run_carleman,
    "hum": run_hum,
    "semilinear": run_semilinear,
}

HEADLINE = {
    "hum": lambda s: s["levels"][0]["terminal_norm_sq"],
    "carleman": lambda s: s["max_log_ratio"],
    "semilinear": lambda s: s["max_ratio"],
}


def run_sweep(cfg: config.RunConfig, out: Optional[Path] = None) -> RunResult:
    """Run ``sweep_target`` once per value of ``sweep_key``. Without explicit
    values an eps sweep uses eps * 2^-k, k < eps_levels."""
    if cfg.sweep_values:
        values = [config.parse_value(cfg.sweep_key, v) for v in cfg.sweep_values.split(",")]
    elif cfg.sweep_key == "eps":
        values = [cfg.eps * 2.0**-k for k in range(cfg.eps_levels)]
    else:
        raise config.ConfigError("sweep_values is empty")
    rows, status, runs = [], EXIT_OK, []
    for i, v in enumerate(values):
        sub = replace(cfg, **{cfg.sweep_key: v})
        if cfg.sweep_target == "hum" and cfg.sweep_key == "eps":
            sub = replace(sub, eps_levels=1)
        res = PIPELINES[cfg.sweep_target](sub)
        if out is not None:
            write_run(out / f"point_{i:03d}", sub, res)
        status = max(status, res.status)
        rows.append([i, config.format_value(v), HEADLINE[cfg.sweep_target](res.summary), res.status])
        runs.append(res.summary)
    summary = {"target": cfg.sweep_target, "key": cfg.sweep_key, "values": [config.format_value(v) for v in values],
               "points": runs}
    plot = "\n".join([
        "set datafile separator ','",
        f"set xlabel '{cfg.sweep_key}'; set ylabel 'headline'; set logscale y",
        "plot 'sweep.csv' every ::1 using 2:3 with linespoints notitle",
    ])
    return RunResult(summary, {"sweep.csv": (["point", cfg.sweep_key, "headline", "status"], rows)}, plot, status)


# -- persistence -------------------------------------------------------------


def _csv_cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_run(out: Path, cfg: config.RunConfig, res: RunResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(cfg.dump())
    (out / "summary.json").write_text(json.dumps(_jsonable(res.summary), indent=2, sort_keys=True) + "\n")
    for name, (header, rows) in res.tables.items():
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_csv_cell(c) for c in row])
    (out / "plot.gp").write_text(res.plot + "\n")


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def run(subcommand: str, cfg: config.RunConfig, out: Path) -> int:
    """Execute one subcommand and persist its run directory; returns the exit code."""
    try:
        if subcommand == "sweep":
            res = run_sweep(cfg, out)
        else:
            res = PIPELINES[subcommand](cfg)
    except (config.ConfigError, weights.WeightError, TreeTooLarge, KeyError, ValueError) as e:
        click.echo(f"error: invalid input: {e}", err=True)
        return EXIT_INVALID
    except (NumericalError, semilinear.DivergenceError, FloatingPointError) as e:
        click.echo(f"error: numerical failure: {e}", err=True)
        return EXIT_NUMERICAL
    write_run(out, cfg, res)
    if res.status == EXIT_NOT_CONVERGED:
        click.echo("warning: solver did not converge; partial results written", err=True)
    elif res.status == EXIT_NUMERICAL:
        click.echo("error: a numerical check failed; see summary.json", err=True)
    return res.status


# -- click front end ---------------------------------------------------------


def _options(f):
    f = click.option("--threads", type=int, default=None, help="Worker threads for ensembles.")(f)
    f = click.option("--seed", type=int, default=None, help="Overrides the seed key.")(f)
    f = click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="Run directory.")(f)
    f = click.option("--set", "overrides", multiple=True, help="key=value override (repeatable).")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
                     help="key=value config file.")(f)
    return f


@click.group()
def main() -> None:
    """Null-control experiments for the stochastic fourth-order parabolic equation."""


def _make_command(name: str):
    @main.command(name)
    @_options
    def cmd(config_path, overrides, out, seed, threads):
        try:
            extra = list(overrides)
            if seed is not None:
                extra.append(f"seed={seed}")
            if threads is not None:
                extra.append(f"threads={threads}")
            cfg = config.load(config_path, extra)
        except (config.ConfigError, OSError) as e:
            click.echo(f"error: invalid configuration: {e}", err=True)
            sys.exit(EXIT_INVALID)
        sys.exit(run(name, cfg, out or Path("runs") / name))

    cmd.__doc__ = f"Run the {name} pipeline."
    return cmd


for _name in ("weights", "identity-check", "carleman", "hum", "semilinear", "sweep"):
    _make_command(_name)


if __name__ == "__main__":  # pragma: no cover
    main()
