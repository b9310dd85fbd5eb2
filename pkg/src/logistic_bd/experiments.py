"""Experiment runners: figure reproductions, limit laws, convergence, coupling.

Each runner takes an :class:`ExperimentSpec` and returns a
:class:`ResultTable` whose rows are self-describing dicts (regime and all
inputs included).  Replicate seeds derive from ``(seed, grid index,
replicate index)`` so rows do not depend on execution order.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import asymptotics as asy
from .errors import DivergenceError, ParameterError, RegimeError
from .exact import excursion_stats, expected_absorption, reciprocal_sum, upcross_deficit
from .model import ModelParams, Regime, build_weights, carrying_capacity
from .montecarlo import (
    RNG_ALGORITHM,
    SimConfig,
    Welford,
    coupled_samples,
    estimate,
    ks_critical,
    ks_statistic,
    linear_ceiling,
    sample_linear_extinction,
    sample_path,
    separation_probability,
)
from .specfile import ExperimentSpec, GridPoint

DIVERGENT = "divergent"
CAPPED = "capped"
LAWS = ("subcritical-gumbel", "supercritical-exponential", "linear-ex1", "linear-ex2")


@dataclass
class ResultTable:
    name: str
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def columns(self) -> list:
        cols = []
        for row in self.rows:
            cols.extend(k for k in row if k not in cols)
        return cols

    def column(self, key) -> list:
        return [row[key] for row in self.rows]


def _check_grid(points, allowed, what):
    for p in points:
        if p.params.regime not in allowed:
            raise RegimeError(f"{what} needs {'/'.join(map(str, allowed))} parameters, got {p.params}")


def _base_row(point: GridPoint, spec: ExperimentSpec, m: int) -> dict:
    p = point.params
    a = point.scaled_start()
    return {
        "grid_index": point.index,
        "regime": str(p.regime),
        "lam": p.lam,
        "mu": p.mu,
        "theta": p.theta,
        "m": m,
        "a": a if a is not None else "",
        "replicates": spec.replicates,
        "seed": spec.seed,
    }


def _exact_or_divergent(params: ModelParams, m: int):
    try:
        return expected_absorption(params, m).value
    except DivergenceError:
        return DIVERGENT


def _simulate(point: GridPoint, spec: ExperimentSpec, m: int, reference_cdf=None, sampler=None):
    cfg = SimConfig(point.params, m, seed=spec.seed, stream=point.index)
    return estimate(cfg, spec.replicates, reference_cdf=reference_cdf, sampler=sampler)


def _decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# figures


def run_figure1(spec: ExperimentSpec) -> ResultTable:
    """Subcritical mean extinction time: simulation vs prediction vs exact series."""
    points = spec.grid()
    _check_grid(points, (Regime.SUBCRITICAL,), "figure1")
    tol = spec.tolerance if spec.tolerance is not None else 0.10
    table = ResultTable(spec.name)
    for point in points:
        m = point.start()
        a = m * point.params.theta
        rep = _simulate(point, spec, m)
        pred = asy.subcritical_mean(point.params, a)
        exact = expected_absorption(point.params, m).value
        row = _base_row(point, spec, m)
        row.update(
            sim_mean=rep.mean,
            sim_se=rep.std_error,
            capped=rep.capped,
            exact_mean=exact,
            prediction=pred,
            ratio_sim_prediction=rep.mean / pred,
            z_exact=(rep.mean - exact) / rep.std_error,
        )
        table.rows.append(row)
        table.checks[f"point{point.index}:prediction"] = abs(rep.mean - pred) / pred < tol
        table.checks[f"point{point.index}:exact"] = abs(rep.mean - exact) < 3 * rep.std_error
    return table


def run_figure2(spec: ExperimentSpec) -> ResultTable:
    """Critical mean extinction time against ``(pi/2)^(3/2) / sqrt(theta mu)``."""
    points = spec.grid()
    _check_grid(points, (Regime.CRITICAL,), "figure2")
    tol = spec.tolerance if spec.tolerance is not None else 0.10
    table = ResultTable(spec.name)
    for point in points:
        m = point.start()
        rep = _simulate(point, spec, m)
        pred = asy.critical_mean(point.params)
        row = _base_row(point, spec, m)
        row.update(
            sim_mean=rep.mean,
            sim_se=rep.std_error,
            capped=rep.capped,
            exact_mean=_exact_or_divergent(point.params, m),
            prediction=pred,
            ratio_sim_prediction=rep.mean / pred,
        )
        table.rows.append(row)
        table.checks[f"point{point.index}:prediction"] = abs(rep.mean - pred) / pred < tol
    return table


# ---------------------------------------------------------------------------
# limit laws


def run_limit_law(spec: ExperimentSpec, law: Optional[str] = None) -> ResultTable:
    """KS distance between standardized simulated extinction times and a limit law."""
    law = law or spec.law
    if law not in LAWS:
        raise ParameterError(f"law must be one of {LAWS}, got {law!r}")
    points = spec.grid()
    table = ResultTable(spec.name)
    crit = ks_critical(spec.replicates, 0.01)
    for point in points:
        p = point.params
        m = point.start()
        row = _base_row(point, spec, m)
        row["law"] = law
        if law == "subcritical-gumbel":
            _check_grid([point], (Regime.SUBCRITICAL,), law)
            if p.theta <= 0:
                raise ParameterError(f"{law} needs theta > 0")
            pred = asy.predict(p, a=point.scaled_start())
            rep = _simulate(point, spec, m, reference_cdf=pred.cdf)
            row.update(sampler="gillespie", shift=pred.shift, scale=pred.scale, ks=rep.ks)
            checked = rep.ks
        elif law == "supercritical-exponential":
            _check_grid([point], (Regime.SUPERCRITICAL,), law)
            if p.theta <= 0:
                raise ParameterError(f"{law} needs theta > 0")
            exact = expected_absorption(p, m).value
            asym = asy.supercritical_mean(p).value
            rep = _simulate(point, spec, m)
            ks_exact = ks_statistic(rep.support, lambda t: asy.exponential_cdf(t / exact))
            ks_asym = ks_statistic(rep.support, lambda t: asy.exponential_cdf(t / asym))
            row.update(sampler="gillespie", exact_mean=exact, asymptotic_mean=asym,
                       ks_exact_scale=ks_exact, ks_asymptotic_scale=ks_asym)
            checked = ks_exact
        else:
            regime = Regime.SUBCRITICAL if law == "linear-ex1" else Regime.CRITICAL
            _check_grid([point], (regime,), law)
            if p.theta != 0:
                raise ParameterError(f"{law} needs theta = 0")
            pred = asy.predict(p, m=m)
            if regime is Regime.CRITICAL:
                # expected jump count is infinite; sample through the branching property
                rep = _simulate(point, spec, m, reference_cdf=pred.cdf, sampler=sample_linear_extinction)
                row["sampler"] = "branching-max"
            else:
                rep = _simulate(point, spec, m, reference_cdf=pred.cdf)
                row["sampler"] = "gillespie"
            row.update(shift=pred.shift, scale=pred.scale, ks=rep.ks)
            checked = rep.ks
        row.update(sim_mean=rep.mean, sim_se=rep.std_error, ks_critical_1pct=crit)
        table.rows.append(row)
        table.checks[f"point{point.index}:ks"] = checked < crit
    return table


# ---------------------------------------------------------------------------
# exact convergence study


def weight_approx_error(params: ModelParams, T: Optional[float] = None) -> float:
    """``sup_{1 <= j <= T/theta} |pi_j / approx_j - 1|`` with ``T = 2 lam`` by default."""
    T = 2 * params.lam if T is None else T
    J = max(1, int(math.floor(T / params.theta)))
    t = build_weights(params, J)
    j = np.arange(1, J + 1)
    return float(np.max(np.abs(np.expm1(t.log_pi[1:] - asy.pi_approx(params, j).log))))


def run_convergence(spec: ExperimentSpec) -> ResultTable:
    """Exact-to-asymptote ratios along a decreasing theta grid (no simulation)."""
    points = spec.grid()
    _check_grid(points, (Regime.SUPERCRITICAL,), "convergence")
    if any(p.params.theta <= 0 for p in points):
        raise ParameterError("convergence needs theta > 0")
    table = ResultTable(spec.name)
    ordered = sorted(points, key=lambda p: (p.params.lam, p.params.mu, -p.params.theta))
    if [p.index for p in ordered] != [p.index for p in points]:
        table.notes.append("grid reordered by decreasing theta")
    for point in ordered:
        p = point.params
        c = carrying_capacity(p)
        m = point.m if point.m is not None else c
        asym = asy.supercritical_mean(p)
        E = expected_absorption(p, m)
        ex = excursion_stats(p)
        log_def = float(upcross_deficit(p, c, log=True))
        rs = reciprocal_sum(p)
        row = _base_row(point, spec, m)
        row.pop("replicates")
        row.pop("seed")
        row.update(
            carrying_capacity=c,
            log_exact_mean=E.log_value,
            log_asymptotic_mean=asym.log,
            dev_mean_series=math.expm1(E.log_value - asym.log),
            dev_mean_excursion=math.expm1(ex.log_mean_via_trials - asym.log),
            dev_mean_excursion_failures=math.expm1(ex.log_mean_via_failures - asym.log),
            dev_deficit=math.expm1(log_def - asy.upcross_deficit_asymptote(p).log),
            dev_reciprocal_sum=math.expm1(rs.log_value - asy.reciprocal_sum_asymptote(p).log),
            dev_excursion_mean=ex.excursion_mean / asy.excursion_mean_asymptote(p) - 1,
            weight_approx_sup_error=weight_approx_error(p),
        )
        table.rows.append(row)
    if len(table.rows) > 1:
        for key in ("dev_mean_series", "dev_mean_excursion", "dev_deficit", "dev_reciprocal_sum",
                    "weight_approx_sup_error"):
            groups = {}
            for row in table.rows:
                groups.setdefault((row["lam"], row["mu"]), []).append(abs(row[key]))
            table.checks[f"{key}:decreasing"] = all(_decreasing(v) for v in groups.values())
    return table


# ---------------------------------------------------------------------------
# coupling study


def run_coupling_study(spec: ExperimentSpec) -> ResultTable:
    """Separation probabilities against their bound and ``|tau_theta - tau_0|``."""
    points = spec.grid()
    horizon = spec.horizon or 100
    table = ResultTable(spec.name)
    ordered = sorted(points, key=lambda p: (p.params.lam, p.params.mu, p.start(), -p.params.theta))
    if [p.index for p in ordered] != [p.index for p in points]:
        table.notes.append("grid reordered by decreasing theta")
    for point in ordered:
        p = point.params
        m = point.start()
        cfg = SimConfig(p, m, seed=spec.seed, stream=point.index)
        sep = separation_probability(cfg, horizon, spec.replicates)
        ceiling = linear_ceiling(p) if p.regime is Regime.SUPERCRITICAL else None
        samples = coupled_samples(cfg, spec.replicates, ceiling=ceiling, follow_theta=False)
        acc = Welford()
        violations = 0
        capped = 0
        for s in samples:
            violations += s.dominance_violations
            capped += s.capped
            if s.linear_died and not s.capped:
                acc.add(abs(s.tau_theta - s.tau_0))
        row = _base_row(point, spec, m)
        row.update(
            horizon=horizon,
            sep_estimate=sep.estimate,
            sep_se=sep.std_error,
            sep_bound=sep.bound,
            conditioned_on_linear_extinction=acc.n,
            mean_abs_diff=acc.mean,
            mean_abs_diff_se=acc.std_error,
            dominance_violations=violations,
            capped=capped,
        )
        table.rows.append(row)
        table.checks[f"point{point.index}:bound"] = sep.consistent
        table.checks[f"point{point.index}:dominance"] = violations == 0
        if p.theta == 0:
            table.checks[f"point{point.index}:identical"] = acc.mean == 0.0
    groups = {}
    for row in table.rows:
        if row["theta"] > 0:
            groups.setdefault((row["lam"], row["mu"], row["m"]), []).append(row["mean_abs_diff"])
    if any(len(v) > 1 for v in groups.values()):
        table.checks["mean_abs_diff:decreasing"] = all(_decreasing(v) for v in groups.values())
    return table


# ---------------------------------------------------------------------------
# fluid limit and mean reduction


def fluid_deviation(params: ModelParams, a: float, t_max: float, seed: int = 0,
                    replicate: int = 0, stream: int = 0) -> float:
    """``sup_{t <= t_max} |theta X(t) - x(t)|`` along one simulated path.

    The path is piecewise constant and ``x`` monotone, so the supremum over
    each holding interval is attained at one of its endpoints.
    """
    m = int(round(a / params.theta))
    cfg = SimConfig(params, m, seed=seed, stream=stream)
    times, states = sample_path(cfg, t_max, replicate)
    ends = np.append(times[1:], t_max)
    level = params.theta * states
    left = np.abs(level - asy.fluid_solution(params, a, times))
    right = np.abs(level - asy.fluid_solution(params, a, ends))
    return float(max(left.max(), right.max()))


def fluid_study(params: ModelParams, a: float, thetas, t_max: float = 3.0, n: int = 50,
                seed: int = 0) -> ResultTable:
    table = ResultTable("fluid")
    for idx, th in enumerate(thetas):
        p = params.with_theta(th)
        devs = [fluid_deviation(p, a, t_max, seed, r, idx) for r in range(n)]
        table.rows.append({"theta": th, "m": int(round(a / th)), "replicates": n,
                           "median_sup_dev": float(np.median(devs))})
    table.checks["median_sup_dev:decreasing"] = _decreasing(table.column("median_sup_dev"))
    return table


def mean_reduction_study(params: ModelParams, a: float, thetas) -> ResultTable:
    """Exact ``E_m(tau_0) - E_m(tau_theta)`` at ``m = a/theta`` against its limit."""
    table = ResultTable("mean-reduction")
    limit = asy.mean_reduction(params, a)
    for th in thetas:
        p = params.with_theta(th)
        m = int(round(a / th))
        diff = expected_absorption(p.linear(), m).value - expected_absorption(p, m).value
        table.rows.append({"theta": th, "m": m, "reduction": diff, "limit": limit,
                           "deviation": abs(diff - limit)})
    table.checks["deviation:decreasing"] = _decreasing(table.column("deviation"))
    return table


# ---------------------------------------------------------------------------
# output


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return DIVERGENT if value > 0 else "-inf"
        return f"{value:.17g}"
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else format_cell(value)
    return value


def render(table: ResultTable, fmt: str = "csv", timestamp: Optional[str] = None) -> str:
    stamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    if fmt == "json":
        doc = {
            "generated": stamp,
            "name": table.name,
            "rng": RNG_ALGORITHM,
            "notes": table.notes,
            "checks": table.checks,
            "rows": [{k: _json_value(v) for k, v in row.items()} for row in table.rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt != "csv":
        raise ParameterError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    buf.write(f"# {table.name} generated {stamp}\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    cols = table.columns
    writer.writerow(cols)
    for row in table.rows:
        writer.writerow([format_cell(row.get(c, "")) for c in cols])
    return buf.getvalue()


def read_csv(path) -> list:
    """Rows of a CSV written by :func:`render` (the stamp line is skipped)."""
    lines = Path(path).read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    return list(csv.DictReader(body))


PLOT_TEMPLATE = '''"""Plot {csv} (generated by logistic_bd; needs matplotlib)."""
import csv

import matplotlib.pyplot as plt

with open({csv!r}) as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
x = [float(r[{x!r}]) for r in rows]
for key in {ys!r}:
    plt.plot(x, [float(r[key]) for r in rows], "o-", label=key)
plt.xlabel({x!r})
plt.legend()
plt.savefig({png!r})
'''


def plot_script(csv_path: str, x: str, ys) -> str:
    png = str(Path(csv_path).with_suffix(".png"))
    return PLOT_TEMPLATE.format(csv=str(csv_path), x=x, ys=list(ys), png=png)
