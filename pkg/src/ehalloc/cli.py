"""Command-line interface.

Subcommands: stability, solve, simulate, threshold-search, sweep.
Exit codes: 0 success, 2 configuration schema error, 3 solver
non-convergence, 1 any other package error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import harness
from .dp import solve_average, solve_finite, table_to_csv
from .errors import EhallocError, NoConvergence, SchemaError
from .stability import check_a2, empirical_bound_fit, minimal_rho
from .structural import BinaryActionSet, solve_threshold_average


def _load_cfg(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.default_config()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "grid_points", None) is not None:
        n = args.grid_points
        cfg = dataclasses.replace(cfg, grids=dataclasses.replace(
            cfg.grids, cov_points=n, gain_bins=n, harvest_bins=n,
            battery_points=max(n, 2), action_points=max(n, 2)))
    if getattr(args, "feedback", None) is not None:
        fields = dict(part.split("=") for part in args.feedback.split(","))
        try:
            eta = float(fields.pop("eta"))
            eps = float(fields.pop("eps"))
        except KeyError as missing:
            raise SchemaError("feedback", "eta=<f>,eps=<f>", args.feedback) from missing
        if fields:
            raise SchemaError("feedback", "eta=<f>,eps=<f>", args.feedback)
        cfg = dataclasses.replace(cfg, feedback=harness.FeedbackConfig(
            eta=eta, epsilon=eps))
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--grid-points", type=int, dest="grid_points",
                   help="override every grid axis size")
    p.add_argument("--feedback", help="override feedback as eta=<f>,eps=<f>")


def _cmd_stability(args) -> int:
    cfg = _load_cfg(args)
    model = cfg.system_model()
    ch = cfg.dropout_channel()
    gain, harvest = cfg.gain_spec(), cfg.harvest_spec()
    b_max = cfg.battery.b_max
    rho = args.rho
    if rho is None:
        rho = min(minimal_rho(gain, harvest, b_max, ch, model), 1.0 - 1e-9)
    report = check_a2(gain, harvest, b_max, ch, rho, model)
    if args.fit and report.satisfied:
        report = empirical_bound_fit(model, gain, harvest, cfg.battery_obj(),
                                     ch, rho, n_runs=args.fit_runs,
                                     seed=cfg.seed)
    print(report.to_text())
    if args.out:
        import csv
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lhs_sup", "rho", "rho_bound", "satisfied",
                        "alpha_fit", "beta_fit", "max_residual"])
            w.writerow(report.to_csv_row())
    return 0


def _cmd_solve(args) -> int:
    cfg = _load_cfg(args)
    if args.average:
        cfg = dataclasses.replace(cfg, horizon="average")
    elif args.horizon is not None:
        cfg = dataclasses.replace(cfg, horizon=args.horizon)
    model, ch, fb = cfg.system_model(), cfg.dropout_channel(), cfg.feedback_channel()
    kind = args.solver
    if kind == "auto":
        kind = "dirac" if fb.is_perfect else "belief"
    grid = cfg.state_grid(with_belief=(kind == "belief"))
    if cfg.horizon == "average":
        rho, table, pol = solve_average(grid, model, ch, fb, kind=kind)
        print(f"average cost rho = {rho!r} "
              f"({len(table.spans)} sweeps, span {table.spans[-1]:.3e})")
        tables, pols = [table], pol
        first_pol = pol
    else:
        vs, pols = solve_finite(int(cfg.horizon), grid, model, ch, fb, kind=kind)
        v0 = vs[0].values[grid.ref_index(model, kind)]
        print(f"finite horizon T={cfg.horizon}: V_0 at reference state = {v0!r}")
        tables = vs
        first_pol = pols[0]
    if args.out:
        table_to_csv(args.out, grid, tables[0], first_pol)
    if args.policy_out:
        harness.save_policy(args.policy_out, pols, cfg)
    return 0


def _cmd_simulate(args) -> int:
    pol, cfg = harness.load_policy(args.policy)
    if args.config:
        cfg = _load_cfg(args)
    elif args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    res = harness.simulate(pol, cfg, n_runs=args.runs)
    print(f"mean cost {res.mean_cost!r} +/- {res.ci_half_width!r} "
          f"(mean energy {res.mean_energy!r}, {res.costs.size} runs)")
    if args.out:
        import csv
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", "cost", "mean_energy"])
            for i, (cst, en) in enumerate(zip(res.costs, res.energies)):
                w.writerow([i, repr(float(cst)), repr(float(en))])
    return 0


def _cmd_threshold_search(args) -> int:
    cfg = _load_cfg(args)
    model, ch, fb = cfg.system_model(), cfg.dropout_channel(), cfg.feedback_channel()
    acts = BinaryActionSet(args.e0, args.e1)
    grid = harness.build_grid(
        model, ch, cfg.gain_spec(), cfg.harvest_spec(), cfg.battery_obj(),
        cov_points=cfg.grids.cov_points, gain_bins=cfg.grids.gain_bins,
        harvest_bins=cfg.grids.harvest_bins,
        battery_points=cfg.grids.battery_points,
        trace_cap=cfg.grids.trace_cap, actions=np.array([acts.e0, acts.e1]))
    thr, rho, restart_rhos = solve_threshold_average(grid, model, ch, fb, acts)
    print(f"threshold policy average cost {rho!r} "
          f"(restarts: {[repr(r) for r in restart_rhos]})")
    if args.out:
        thr.to_csv(args.out)
    if args.policy_out:
        harness.save_policy(args.policy_out, thr, cfg)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    axis = args.axis or (cfg.sweep.axis if cfg.sweep else None)
    rows = harness.sweep(cfg, axis=axis)
    for row in rows:
        print(",".join(str(row[k]) for k in harness.CSV_HEADER))
    if args.out:
        harness.emit_csv(rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ehalloc",
        description="Transmission energy allocation for energy-harvesting "
                    "remote state estimation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stability", help="evaluate the stability condition")
    _add_common(p)
    p.add_argument("--rho", type=float, help="contraction factor (default: minimal feasible)")
    p.add_argument("--fit", action="store_true", help="also fit the empirical envelope")
    p.add_argument("--fit-runs", type=int, default=10000)
    p.set_defaults(fn=_cmd_stability)

    p = sub.add_parser("solve", help="solve for an energy allocation policy")
    _add_common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--horizon", type=int, help="finite horizon T")
    g.add_argument("--average", action="store_true", help="long-run average cost")
    p.add_argument("--solver", choices=["auto", "dirac", "belief", "subopt"],
                   default="auto")
    p.add_argument("--policy-out", dest="policy_out", help="JSON policy artifact")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo evaluation of a saved policy")
    _add_common(p)
    p.add_argument("--policy", required=True, help="JSON policy artifact")
    p.add_argument("--runs", type=int, help="override the number of runs")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("threshold-search", help="gradient search for a binary threshold policy")
    _add_common(p)
    p.add_argument("--e0", type=float, default=0.0)
    p.add_argument("--e1", type=float, default=1.0)
    p.add_argument("--policy-out", dest="policy_out")
    p.set_defaults(fn=_cmd_threshold_search)

    p = sub.add_parser("sweep", help="parameter sweep with per-point solve+simulate")
    _add_common(p)
    p.add_argument("--axis", choices=["b_max", "gain_mean", "horizon", "eta_eps"])
    p.set_defaults(fn=_cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NoConvergence as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except EhallocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
