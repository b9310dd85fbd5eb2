"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 regime/parameter error,
3 a tolerance check failed.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import asymptotics as asy
from . import exact
from . import experiments as ex
from .errors import CapExceeded, DivergenceError, ParameterError, RejectionBudgetExceeded
from .model import Regime
from .montecarlo import SimConfig, estimate, sample_coupled
from .specfile import ExperimentSpec, SpecError, load_spec

EXIT_OK, EXIT_USAGE, EXIT_PARAM, EXIT_TOLERANCE = 0, 1, 2, 3

DEFAULT_SPECS = {
    "figure1": "figure1-desk",
    "figure2": "figure2-desk",
    "convergence": "convergence",
    "coupling-study": "coupling",
}
PLOT_AXES = {
    "figure1": ("mu", ("sim_mean", "prediction", "exact_mean")),
    "figure2": ("mu", ("sim_mean", "prediction")),
    "convergence": ("theta", ("dev_mean_series", "dev_deficit", "dev_reciprocal_sum")),
    "coupling-study": ("theta", ("sep_estimate", "sep_bound", "mean_abs_diff")),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, help="master seed (u64)")
    g.add_argument("--out", help="output file (default: stdout)")
    g.add_argument("--spec", help="spec file or bundled spec name")
    g.add_argument("--replicates", type=int)
    g.add_argument("--tolerance", type=float)
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--plot-script", help="also write a matplotlib script rendering the CSV")
    g.add_argument("--lam", type=float, nargs="+")
    g.add_argument("--mu", type=float, nargs="+")
    g.add_argument("--theta", type=float, nargs="+")
    g.add_argument("--m", type=int, nargs="+")
    g.add_argument("--a", type=float, nargs="+")
    return g


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="logistic-bd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    g = [_global_flags()]
    sub.add_parser("exact", parents=g, help="exact mean extinction time and hitting quantities")
    sub.add_parser("asymptote", parents=g, help="asymptotic predictions")
    sub.add_parser("simulate", parents=g, help="Monte Carlo extinction times")
    couple = sub.add_parser("couple", parents=g, help="simulate the coupled pair")
    couple.add_argument("--horizon", type=int, default=100)
    sub.add_parser("figure1", parents=g, help="subcritical mean vs prediction")
    sub.add_parser("figure2", parents=g, help="critical mean vs prediction")
    law = sub.add_parser("limit-law", parents=g, help="KS test against a limit law")
    law.add_argument("--law", choices=ex.LAWS)
    sub.add_parser("convergence", parents=g, help="exact/asymptote ratios along theta")
    cs = sub.add_parser("coupling-study", parents=g, help="separation and |tau_theta - tau_0|")
    cs.add_argument("--horizon", type=int)
    return parser


def _spec_from_args(args) -> ExperimentSpec:
    if args.spec:
        spec = load_spec(args.spec)
    elif args.command in DEFAULT_SPECS and not args.lam:
        spec = load_spec(DEFAULT_SPECS[args.command])
    else:
        spec = ExperimentSpec(name=args.command)
    spec = spec.with_overrides(
        seed=args.seed,
        replicates=args.replicates,
        tolerance=args.tolerance,
        lam=tuple(args.lam) if args.lam else None,
        mu=tuple(args.mu) if args.mu else None,
        theta=tuple(args.theta) if args.theta else None,
        law=getattr(args, "law", None),
        horizon=getattr(args, "horizon", None),
    )
    if args.m or args.a:
        spec = spec.with_overrides(m=tuple(args.m or ()), a=tuple(args.a or ()))
    return spec


def _exact_table(spec: ExperimentSpec) -> ex.ResultTable:
    table = ex.ResultTable(spec.name)
    for point in spec.grid():
        p = point.params
        m = point.start()
        row = {"regime": str(p.regime), "lam": p.lam, "mu": p.mu, "theta": p.theta, "m": m}
        try:
            res = exact.expected_absorption(p, m)
            row.update(exact_mean=res.value, log_exact_mean=res.log_value,
                       truncation_index=res.truncation_index, tail_bound=res.tail_bound)
        except DivergenceError:
            row.update(exact_mean=ex.DIVERGENT, log_exact_mean=ex.DIVERGENT)
        if p.theta == 0:
            row["extinction_prob"] = exact.linear_extinction_prob(p, m)
        if m >= 1:
            row["q_upcross"] = float(exact.q_upcross(p, m))
        table.rows.append(row)
    return table


def _asymptote_table(spec: ExperimentSpec) -> ex.ResultTable:
    table = ex.ResultTable(spec.name)
    for point in spec.grid():
        p = point.params
        row = {"regime": str(p.regime), "lam": p.lam, "mu": p.mu, "theta": p.theta}
        m = point.m
        pred = asy.predict(p, a=point.a, m=m)
        row.update(prediction=pred.mean, log_prediction=pred.log_mean,
                   law=pred.law.value if pred.law else "none", shift=pred.shift, scale=pred.scale)
        if p.regime is Regime.SUPERCRITICAL:
            c = asy.constants(p)
            row.update(c1=c.c1, c2=c.c2)
        table.rows.append(row)
    return table


def _simulate_table(spec: ExperimentSpec) -> ex.ResultTable:
    table = ex.ResultTable(spec.name)
    for point in spec.grid():
        p = point.params
        m = point.start()
        cfg = SimConfig(p, m, seed=spec.seed, stream=point.index)
        rep = estimate(cfg, spec.replicates)
        row = {"regime": str(p.regime), "lam": p.lam, "mu": p.mu, "theta": p.theta, "m": m,
               "replicates": spec.replicates, "seed": spec.seed, "sim_mean": rep.mean,
               "sim_se": rep.std_error, "capped": rep.capped}
        row["exact_mean"] = ex._exact_or_divergent(p, m)
        table.rows.append(row)
    return table


def _couple_table(spec: ExperimentSpec) -> ex.ResultTable:
    table = ex.ResultTable(spec.name)
    for point in spec.grid():
        cfg = SimConfig(point.params, point.start(), seed=spec.seed, stream=point.index)
        for r in range(spec.replicates):
            s = sample_coupled(cfg, r)
            table.rows.append({"grid_index": point.index, "replicate": r, "kappa": s.kappa,
                               "tau_theta": s.tau_theta, "tau_0": s.tau_0, "steps": s.steps,
                               "linear_died": s.linear_died,
                               "dominance_violations": s.dominance_violations, "capped": s.capped})
    return table


def run(args) -> ex.ResultTable:
    spec = _spec_from_args(args)
    cmd = args.command
    if cmd == "exact":
        return _exact_table(spec)
    if cmd == "asymptote":
        return _asymptote_table(spec)
    if cmd == "simulate":
        return _simulate_table(spec)
    if cmd == "couple":
        return _couple_table(spec)
    if cmd == "figure1":
        return ex.run_figure1(spec)
    if cmd == "figure2":
        return ex.run_figure2(spec)
    if cmd == "limit-law":
        return ex.run_limit_law(spec)
    if cmd == "convergence":
        return ex.run_convergence(spec)
    return ex.run_coupling_study(spec)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        table = run(args)
    except SpecError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, DivergenceError, RejectionBudgetExceeded, CapExceeded) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARAM
    text = ex.render(table, args.format)
    out = args.out
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.plot_script:
        if not out or args.format != "csv":
            print("error: --plot-script needs --out with csv format", file=sys.stderr)
            return EXIT_USAGE
        x, ys = PLOT_AXES.get(args.command, ("m", [c for c in table.columns if c.endswith("mean")]))
        Path(args.plot_script).write_text(ex.plot_script(out, x, ys))
    for note in table.notes:
        print(f"note: {note}", file=sys.stderr)
    failed = [k for k, ok in table.checks.items() if not ok]
    if failed:
        print("tolerance check failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
