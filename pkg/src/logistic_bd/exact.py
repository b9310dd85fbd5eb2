"""Exact first-passage quantities computed from the pi/Pi weights.

Everything here is deterministic: hitting probabilities, conditional
crossing times, expected absorption times as convergent series with a
certified tail bound, and closed forms for the linear (``theta = 0``)
process.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ParameterError, RegimeError
from .model import (
    ModelParams,
    Regime,
    WeightTable,
    birth_rate,
    build_weights,
    carrying_capacity,
    death_rate,
)

EULER_GAMMA = 0.57721566490153286
DEFAULT_REL_TOL = 1e-10
MAX_TABLE = 10**8


@dataclass(frozen=True)
class HittingQuery:
    """Start ``start`` strictly between ``lower`` and ``upper``."""

    start: int
    upper: int
    lower: int = 0

    def __post_init__(self):
        if not 0 <= self.lower < self.start < self.upper:
            raise ParameterError(
                f"need 0 <= lower < start < upper, got {self.lower}, {self.start}, {self.upper}"
            )


@dataclass(frozen=True)
class SeriesResult:
    """Truncated positive series with a rigorous bound on the omitted tail.

    ``value`` is ``inf`` when the sum is finite but exceeds the float range;
    ``log_value`` is always usable.
    """

    value: float
    log_value: float
    truncation_index: int
    tail_bound: float

    def __float__(self) -> float:
        return self.value


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _table(params: ModelParams, J: int) -> WeightTable:
    return build_weights(params, max(int(J), 1))


def _require_convergent(params: ModelParams) -> None:
    if params.theta == 0 and params.lam >= params.mu:
        raise DivergenceError(
            f"expected extinction time is infinite for the linear {params.regime} process"
        )


# ---------------------------------------------------------------------------
# hitting probabilities


def upcross_deficit(params: ModelParams, i, log: bool = False):
    """``1 - Q_i = pi_i / Pi_{i+1}``: probability of hitting 0 before ``i + 1``."""
    i_arr = np.asarray(i)
    if np.any(i_arr < 1):
        raise ParameterError(f"i must be >= 1, got {i!r}")
    t = _table(params, int(i_arr.max()) + 1)
    out = t.log_pi[i_arr] - t.log_Pi[i_arr + 1]
    return out if log else np.exp(out)


def q_upcross(params: ModelParams, i):
    """``Q_i = Pi_i / Pi_{i+1}``: probability of reaching ``i + 1`` before 0."""
    i_arr = np.asarray(i)
    if np.any(i_arr < 1):
        raise ParameterError(f"i must be >= 1, got {i!r}")
    t = _table(params, int(i_arr.max()) + 1)
    return np.exp(t.log_Pi[i_arr] - t.log_Pi[i_arr + 1])


def _split_probabilities(params: ModelParams, q: HittingQuery) -> tuple[float, float]:
    t = _table(params, q.upper)
    below = t.log_span(q.lower, q.start)  # Pi_i - Pi_k
    above = t.log_span(q.start, q.upper)  # Pi_n - Pi_i
    # evaluate the smaller one directly, the other as its complement
    if below <= above:
        up = math.exp(below - np.logaddexp(below, above))
        return up, 1.0 - up
    down = math.exp(above - np.logaddexp(below, above))
    return 1.0 - down, down


def prob_up_before_down(params: ModelParams, q: HittingQuery) -> float:
    """``P_i(reach n before k) = (Pi_i - Pi_k) / (Pi_n - Pi_k)``."""
    return _split_probabilities(params, q)[0]


def prob_down_before_up(params: ModelParams, q: HittingQuery) -> float:
    return _split_probabilities(params, q)[1]


# ---------------------------------------------------------------------------
# conditional crossing times


def _log_lam(params, j):
    return np.log(birth_rate(params, np.asarray(j, dtype=float)))


def beta_up_all(params: ModelParams, k: int, v: int) -> np.ndarray:
    """``beta_i^k`` for ``i = k+1..v`` by the forward difference equation.

    ``beta_i^k`` is the mean time to step from ``i`` to ``i + 1`` given that
    ``i + 1`` is reached before ``k``.
    """
    if not 0 <= k < v:
        raise ParameterError(f"need 0 <= k < v, got k={k}, v={v}")
    t = _table(params, v + 1)
    # logD[j - k] = log(Pi_j - Pi_k), j = k..v+1
    logD = np.concatenate(([-math.inf], np.logaddexp.accumulate(t.log_pi[k : v + 1])))
    out = np.empty(v - k)
    prev = 0.0
    for n, i in enumerate(range(k + 1, v + 1)):
        lam_i = birth_rate(params, i)
        mu_i = death_rate(params, i)
        d_prev, d_cur, d_next = logD[i - 1 - k], logD[i - k], logD[i + 1 - k]
        cur = math.exp(d_cur - d_next) / lam_i + (mu_i / lam_i) * math.exp(d_prev - d_next) * prev
        out[n] = prev = cur
    return out


def beta_down_all(params: ModelParams, u: int, ceiling: int) -> np.ndarray:
    """``beta_k^{ceiling}`` for ``k = u+1..ceiling-1`` by the backward recursion.

    ``beta_k^{i+1}`` is the mean time to step from ``k`` to ``k - 1`` given
    that ``k - 1`` is reached before ``i + 1``.
    """
    i = ceiling - 1
    if not 0 <= u < i:
        raise ParameterError(f"need 0 <= u < ceiling - 1, got u={u}, ceiling={ceiling}")
    t = _table(params, ceiling)
    # logE[j - u] = log(Pi_{i+1} - Pi_j), j = u..i+1
    tail = np.logaddexp.accumulate(t.log_pi[u : i + 1][::-1])[::-1]
    logE = np.concatenate((tail, [-math.inf]))
    out = np.empty(i - u)
    nxt = 0.0
    for n, kk in zip(range(i - u - 1, -1, -1), range(i, u, -1)):
        lam_k = birth_rate(params, kk)
        mu_k = death_rate(params, kk)
        e_prev, e_cur, e_next = logE[kk - 1 - u], logE[kk - u], logE[kk + 1 - u]
        cur = math.exp(e_cur - e_prev) / mu_k + (lam_k / mu_k) * math.exp(e_next - e_prev) * nxt
        out[n] = nxt = cur
    return out


def beta_up(params: ModelParams, i: int, k: int, method: str = "recursion") -> float:
    if not 0 <= k < i:
        raise ParameterError(f"need 0 <= k < i, got i={i}, k={k}")
    if method == "closed":
        return _beta_up_closed(params, i, k)
    return float(beta_up_all(params, k, i)[-1])


def beta_down(params: ModelParams, k: int, ceiling: int, method: str = "recursion") -> float:
    if not 1 <= k < ceiling:
        raise ParameterError(f"need 1 <= k < ceiling, got k={k}, ceiling={ceiling}")
    if method == "closed":
        return _beta_down_closed(params, k, ceiling)
    return float(beta_down_all(params, k - 1, ceiling)[0])


def _beta_up_closed(params, i, k):
    t = _table(params, i + 1)
    j = np.arange(k + 1, i + 1)
    logD = np.array([t.log_span(k, jj) for jj in range(k, i + 2)])
    log_sum = np.logaddexp.reduce(2 * logD[j - k] - _log_lam(params, j) - t.log_pi[j])
    return math.exp(t.log_pi[i] - logD[i - k] - logD[i + 1 - k] + log_sum)


def _beta_down_closed(params, k, ceiling):
    i = ceiling - 1
    t = _table(params, ceiling)
    j = np.arange(k, i + 1)
    logE = {jj: t.log_span(jj, ceiling) for jj in range(k - 1, i + 1)}
    terms = [2 * logE[jj] for jj in j] - _log_lam(params, j) - t.log_pi[j]
    log_sum = np.logaddexp.reduce(terms)
    return math.exp(t.log_pi[k - 1] - logE[k - 1] - logE[k] + log_sum)


def crossing_sum_identity(params: ModelParams, u: int, v: int) -> tuple[float, float, float]:
    """Three evaluations of the mean crossing time of ``(u, v]``.

    Returns ``(sum_i beta_i^u, sum_k beta_k^{v+1}, closed form)``; the three
    coincide mathematically.
    """
    if not 0 <= u < v:
        raise ParameterError(f"need 0 <= u < v, got u={u}, v={v}")
    sum_up = math.fsum(beta_up_all(params, u, v))
    sum_down = math.fsum(beta_down_all(params, u, v + 1))
    t = _table(params, v + 1)
    j = np.arange(u + 1, v + 1)
    log_above = np.array([t.log_span(jj, v + 1) for jj in j])
    log_below = np.array([t.log_span(u, jj) for jj in j])
    log_terms = log_above + log_below - _log_lam(params, j) - t.log_pi[j] - t.log_span(u, v + 1)
    rhs = math.fsum(np.exp(log_terms))
    return sum_up, sum_down, rhs


# ---------------------------------------------------------------------------
# series for expected absorption times


def _initial_table_size(params: ModelParams, floor: int) -> int:
    J = max(64, 2 * floor)
    if params.theta > 0:
        J = max(J, int(4 * max(params.lam, params.mu) / params.theta))
    return J


def _sum_series(params, log_terms, start_stop, floor, rel_tol) -> SeriesResult:
    """Sum ``exp(log_terms(table))`` over ``k = 1..`` with a geometric tail bound.

    For ``k >= start_stop`` consecutive terms must shrink at least by
    ``rho_k = lam / (mu + k theta)``; since ``rho_k`` is non-increasing, the
    tail after ``K`` is at most ``t_K rho_K / (1 - rho_K)``.
    """
    if rel_tol <= 0:
        raise ParameterError("rel_tol must be > 0")
    J = _initial_table_size(params, floor)
    while J <= MAX_TABLE:
        t = _table(params, J)
        lt = log_terms(t)  # index k - 1
        cum = np.logaddexp.accumulate(lt)
        k = np.arange(1, J + 1, dtype=float)
        rho = params.lam / (params.mu + params.theta * k)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_tail = lt + np.log(rho) - np.log1p(-rho)
        ok = (k >= start_stop) & (rho < 1) & (log_tail <= math.log(rel_tol) + cum)
        hits = np.flatnonzero(ok)
        if hits.size:
            K = int(hits[0])
            log_value = float(cum[K])
            return SeriesResult(_exp(log_value), log_value, K + 1, _exp(float(log_tail[K])))
        J *= 2
    raise ParameterError(f"series did not reach rel_tol={rel_tol} within {MAX_TABLE} terms")


def expected_absorption(params: ModelParams, m: int, rel_tol: float = DEFAULT_REL_TOL) -> SeriesResult:
    """``E_m(tau) = sum_{k>=1} Pi_{min(k,m)} / (lam_k pi_k)``."""
    if m < 0:
        raise ParameterError(f"m must be >= 0, got {m}")
    if m == 0:
        return SeriesResult(0.0, -math.inf, 0, 0.0)
    _require_convergent(params)

    def log_terms(t):
        k = np.arange(1, t.J + 1)
        return t.log_Pi[np.minimum(k, m)] + t.log_reciprocal_terms(1)

    return _sum_series(params, log_terms, m, m, rel_tol)


def expected_step_down(params: ModelParams, i: int, rel_tol: float = DEFAULT_REL_TOL) -> SeriesResult:
    """Mean time to go from ``i`` to ``i - 1``: ``pi_{i-1} sum_{k>=i} 1/(lam_k pi_k)``."""
    if i < 1:
        raise ParameterError(f"i must be >= 1, got {i}")
    _require_convergent(params)

    def log_terms(t):
        out = t.log_reciprocal_terms(1)
        out[: i - 1] = -math.inf
        return out + t.log_pi[i - 1]

    return _sum_series(params, log_terms, i, i, rel_tol)


def reciprocal_sum(params: ModelParams, rel_tol: float = DEFAULT_REL_TOL) -> SeriesResult:
    """``sum_{j>=1} 1 / (lam_j pi_j)``, which equals ``E_1(tau)``."""
    _require_convergent(params)
    return _sum_series(params, lambda t: t.log_reciprocal_terms(1), 1, 1, rel_tol)


def excursion_mean(params: ModelParams, rel_tol: float = DEFAULT_REL_TOL) -> SeriesResult:
    """Mean length of an excursion from the carrying capacity back to it from above.

    ``M = pi_c sum_k psi_k / (lam_k pi_k)`` with
    ``psi_k = min(Pi_k^2 / (Pi_c Pi_{c+1}), 1)`` and ``c`` the carrying capacity.
    """
    if params.regime is not Regime.SUPERCRITICAL or params.theta == 0:
        raise RegimeError("excursion mean needs lam > mu and theta > 0")
    c = carrying_capacity(params)

    def log_terms(t):
        k = np.arange(1, t.J + 1)
        log_psi = np.minimum(2 * t.log_Pi[k] - t.log_Pi[c] - t.log_Pi[c + 1], 0.0)
        return t.log_pi[c] + log_psi + t.log_reciprocal_terms(1)

    return _sum_series(params, log_terms, c + 1, c + 1, rel_tol)


@dataclass(frozen=True)
class ExcursionStats:
    """Pieces of the decomposition of ``tau`` into excursions from the carrying capacity.

    The number of returns from above before extinction is geometric with
    success probability ``deficit = 1 - Q_c``.  Counting only the failed
    returns gives mean ``Q_c / deficit``; counting every excursion including
    the last gives ``1 / deficit``.  Both conventions are reported.
    """

    carrying_capacity: int
    excursion_mean: float
    log_excursion_mean: float
    deficit: float
    log_deficit: float

    @property
    def log_mean_returns_trials(self) -> float:
        return -self.log_deficit

    @property
    def log_mean_returns_failures(self) -> float:
        return math.log1p(-self.deficit) - self.log_deficit

    @property
    def log_mean_via_trials(self) -> float:
        return self.log_excursion_mean + self.log_mean_returns_trials

    @property
    def log_mean_via_failures(self) -> float:
        return self.log_excursion_mean + self.log_mean_returns_failures

    @property
    def mean_via_trials(self) -> float:
        return _exp(self.log_mean_via_trials)

    @property
    def mean_via_failures(self) -> float:
        return _exp(self.log_mean_via_failures)


def excursion_stats(params: ModelParams, rel_tol: float = DEFAULT_REL_TOL) -> ExcursionStats:
    c = carrying_capacity(params)
    M = excursion_mean(params, rel_tol)
    log_def = float(upcross_deficit(params, c, log=True))
    return ExcursionStats(c, M.value, M.log_value, math.exp(log_def), log_def)


# ---------------------------------------------------------------------------
# linear process closed forms


def _require_linear(params: ModelParams) -> None:
    if params.theta != 0:
        raise ParameterError("closed form only holds for theta = 0")


def linear_tau0_cdf(params: ModelParams, m: int, t):
    """``P_m(tau_0 <= t)`` for the linear process."""
    _require_linear(params)
    if m < 0:
        raise ParameterError(f"m must be >= 0, got {m}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("t must be >= 0")
    lam, mu = params.lam, params.mu
    if m == 0:
        return np.ones_like(t)[()]
    with np.errstate(over="ignore"):
        if lam == mu:
            single = lam * t / (1 + lam * t)
        elif mu > lam:
            e = np.exp(-(mu - lam) * t)  # avoids overflow of exp((mu - lam) t)
            single = mu * (1 - e) / (mu - lam * e)
        else:
            e = np.exp((mu - lam) * t)
            single = mu * (1 - e) / (lam - mu * e)
    return (single**m)[()]


def linear_extinction_prob(params: ModelParams, m: int) -> float:
    _require_linear(params)
    if m < 0:
        raise ParameterError(f"m must be >= 0, got {m}")
    if params.lam <= params.mu:
        return 1.0
    return (params.mu / params.lam) ** m


def linear_subcritical_mean_asymptote(params: ModelParams, m: int) -> float:
    """Large-``m`` expansion ``(ln m + gamma + ln(1 - lam/mu)) / (mu - lam)``."""
    if params.regime is not Regime.SUBCRITICAL:
        raise RegimeError("needs lam < mu")
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    lam, mu = params.lam, params.mu
    return (math.log(m) + EULER_GAMMA + math.log1p(-lam / mu)) / (mu - lam)
