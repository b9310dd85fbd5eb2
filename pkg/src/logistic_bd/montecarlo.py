"""Exact simulation of the competitive birth-death process and its coupling.

Jump chains are simulated event by event (Gillespie's direct method) in
numba kernels.  Every replicate draws from its own Philox stream keyed by
``(seed, stream, replicate)`` through :class:`numpy.random.SeedSequence`, so
results do not depend on how replicates are batched or ordered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .errors import CapExceeded, ParameterError, RejectionBudgetExceeded
from .model import ModelParams, Regime

RNG_ALGORITHM = "numpy.Philox4x64-10/SeedSequence(seed, spawn_key=(stream, replicate))"
NO_SEPARATION = -1


def make_rng(seed: int, stream: int = 0, replicate: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(replicate)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    m0: int
    seed: int = 0
    max_steps: int = 10**8
    max_time: float = 1e6
    stream: int = 0

    def __post_init__(self):
        if self.m0 < 0:
            raise ParameterError(f"m0 must be >= 0, got {self.m0}")
        if self.max_steps <= 0 or self.max_time <= 0:
            raise ParameterError("caps must be positive")

    def rng(self, replicate: int) -> np.random.Generator:
        return make_rng(self.seed, self.stream, replicate)


@dataclass(frozen=True)
class PathSample:
    tau: float
    steps: int
    max_level: int
    capped: bool = False


@dataclass(frozen=True)
class CouplingSample:
    """One trajectory of the pair (competitive, linear) started on the diagonal.

    ``kappa`` is the index of the jump that first leaves the diagonal, or
    :data:`NO_SEPARATION`.  ``tau_0`` is ``inf`` when the linear component
    reached ``linear_ceiling`` (treated as survival).
    """

    kappa: int
    tau_theta: float
    tau_0: float
    steps: int
    linear_died: bool
    dominance_violations: int = 0
    capped: bool = False

    @property
    def separated(self) -> bool:
        return self.kappa != NO_SEPARATION


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _holding(rng, rate):
    # inverse CDF on the open interval (0, 1]
    return -math.log(1.0 - rng.random()) / rate


@numba.njit(cache=True)
def _extinction_kernel(rng, lam, mu, theta, m0, max_steps, max_time):
    i = m0
    t = 0.0
    steps = 0
    top = m0
    while i > 0:
        if steps >= max_steps or t >= max_time:
            return t, steps, top, True
        b = lam * i
        total = b + mu * i + theta * i * (i - 1)
        t += _holding(rng, total)
        if rng.random() * total < b:
            i += 1
            if i > top:
                top = i
        else:
            i -= 1
        steps += 1
    return t, steps, top, False


@numba.njit(cache=True)
def _path_kernel(rng, lam, mu, theta, m0, t_max, max_steps):
    cap = 1024
    times = np.empty(cap)
    states = np.empty(cap, dtype=np.int64)
    times[0] = 0.0
    states[0] = m0
    n = 1
    i = m0
    t = 0.0
    while i > 0 and n <= max_steps:
        b = lam * i
        total = b + mu * i + theta * i * (i - 1)
        t += _holding(rng, total)
        if t > t_max:
            break
        if rng.random() * total < b:
            i += 1
        else:
            i -= 1
        if n == cap:
            cap *= 2
            new_t = np.empty(cap)
            new_s = np.empty(cap, dtype=np.int64)
            new_t[:n] = times[:n]
            new_s[:n] = states[:n]
            times = new_t
            states = new_s
        times[n] = t
        states[n] = i
        n += 1
    return times[:n], states[:n]


@numba.njit(cache=True)
def _coupled_kernel(rng, lam, mu, theta, m0, max_steps, max_time, linear_ceiling, follow_theta):
    """Returns (kappa, tau_theta, tau_0, steps, linear_died, violations, capped).

    The linear component is dropped once it reaches ``linear_ceiling``; if
    ``follow_theta`` the competitive one is then run alone to extinction.
    """
    i = m0
    j = m0
    t = 0.0
    steps = 0
    kappa = -1
    tau_theta = -1.0
    tau_0 = -1.0
    violations = 0
    if m0 == 0:
        return kappa, 0.0, 0.0, 0, True, 0, False
    while True:
        if steps >= max_steps or t >= max_time:
            return kappa, tau_theta, tau_0, steps, False, violations, True
        if j >= linear_ceiling:
            break
        if i == j:
            up = lam * i
            down = mu * i
            split = theta * i * (i - 1)
            total = up + down + split
            t += _holding(rng, total)
            u = rng.random() * total
            if u < up:
                i += 1
                j += 1
            elif u < up + down:
                i -= 1
                j -= 1
            else:
                i -= 1
                if kappa < 0:
                    kappa = steps + 1
        else:
            r0 = lam * i
            r1 = r0 + mu * i + theta * i * (i - 1)
            r2 = r1 + lam * j
            total = r2 + mu * j
            t += _holding(rng, total)
            u = rng.random() * total
            if u < r0:
                i += 1
            elif u < r1:
                i -= 1
            elif u < r2:
                j += 1
            else:
                j -= 1
        steps += 1
        if i > j:
            violations += 1
        if i == 0 and tau_theta < 0:
            tau_theta = t
        if j == 0:
            tau_0 = t
            return kappa, tau_theta, tau_0, steps, True, violations, False
    # linear component survived; competitive one continues alone
    if not follow_theta:
        return kappa, tau_theta, math.inf, steps, False, violations, False
    if tau_theta < 0:
        rest, more, _, capped = _extinction_kernel(
            rng, lam, mu, theta, i, max_steps - steps, max_time - t
        )
        if capped:
            return kappa, t + rest, math.inf, steps + more, False, violations, True
        tau_theta = t + rest
        steps += more
    return kappa, tau_theta, math.inf, steps, False, violations, False


# ---------------------------------------------------------------------------
# samplers


def _kernel_args(cfg: SimConfig):
    p = cfg.params
    return float(p.lam), float(p.mu), float(p.theta), int(cfg.m0)


def sample_extinction(cfg: SimConfig, replicate: int = 0) -> PathSample:
    """One exact trajectory to absorption; a hit cap is flagged, not hidden."""
    lam, mu, theta, m0 = _kernel_args(cfg)
    tau, steps, top, capped = _extinction_kernel(
        cfg.rng(replicate), lam, mu, theta, m0, int(cfg.max_steps), float(cfg.max_time)
    )
    return PathSample(float(tau), int(steps), int(top), bool(capped))


def extinction_times(cfg: SimConfig, n: int, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """``(tau, capped)`` arrays for replicates ``start .. start+n-1``."""
    lam, mu, theta, m0 = _kernel_args(cfg)
    tau = np.empty(n)
    capped = np.zeros(n, dtype=bool)
    for r in range(n):
        tau[r], _, _, capped[r] = _extinction_kernel(
            cfg.rng(start + r), lam, mu, theta, m0, int(cfg.max_steps), float(cfg.max_time)
        )
    return tau, capped


def sample_linear_extinction(cfg: SimConfig, n: int, start: int = 0) -> np.ndarray:
    """Extinction times of the linear process drawn without stepping the chain.

    By the branching property, ``tau_0`` from ``m`` ancestors is the maximum
    of ``m`` independent single-ancestor extinction times, whose CDF is
    explicit; the maximum is drawn by inversion of ``F(t)^m``.  Survival of a
    supercritical process yields ``inf``.  One uniform per replicate.
    """
    p = cfg.params
    if p.theta != 0:
        raise ParameterError("only the linear process can be sampled this way")
    u = np.array([cfg.rng(start + r).random() for r in range(n)])
    if cfg.m0 == 0:
        return np.zeros(n)
    q = (1.0 - u) ** (1.0 / cfg.m0)  # a draw of F(tau_single_max)
    lam, mu = p.lam, p.mu
    with np.errstate(divide="ignore", invalid="ignore"):
        if lam == mu:
            return q / (lam * (1.0 - q))
        e = (mu - q * lam) / (mu * (1.0 - q))
        out = np.log(e) / (mu - lam)
    if lam > mu:
        out = np.where(q >= mu / lam, math.inf, out)
    return out


def sample_path(cfg: SimConfig, t_max: float, replicate: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Jump times and post-jump states on ``[0, t_max]``; ``times[0] = 0``."""
    lam, mu, theta, m0 = _kernel_args(cfg)
    times, states = _path_kernel(cfg.rng(replicate), lam, mu, theta, m0, float(t_max), int(cfg.max_steps))
    return times, states


def holding_times(cfg: SimConfig, state: int, n_paths: int) -> np.ndarray:
    """Holding times at ``state`` pooled over paths, multiplied by the exit rate."""
    p = cfg.params
    rate = p.lam * state + p.mu * state + p.theta * state * (state - 1)
    out = []
    for r in range(n_paths):
        times, states = sample_path(cfg, math.inf, r)
        idx = np.flatnonzero(states[:-1] == state)
        out.append(np.diff(times)[idx])
    return np.concatenate(out) * rate


def linear_ceiling(params: ModelParams, eps: float = 1e-8) -> int:
    """Level ``L = ceil(ln(eps) / ln(mu/lam))`` treated as survival of the linear process."""
    if params.regime is not Regime.SUPERCRITICAL:
        raise ParameterError("survival ceiling only exists for lam > mu")
    return int(math.ceil(math.log(eps) / math.log(params.mu / params.lam)))


def sample_coupled(cfg: SimConfig, replicate: int = 0, ceiling: Optional[int] = None,
                   follow_theta: bool = True) -> CouplingSample:
    """Simulate the pair started at ``(m0, m0)``.

    In the supercritical regime the linear component is stopped at
    ``ceiling`` (default :func:`linear_ceiling`) and ``tau_0`` recorded as
    ``inf``.
    """
    lam, mu, theta, m0 = _kernel_args(cfg)
    if ceiling is None:
        ceiling = linear_ceiling(cfg.params) if cfg.params.regime is Regime.SUPERCRITICAL else 2**62
    out = _coupled_kernel(cfg.rng(replicate), lam, mu, theta, m0, int(cfg.max_steps),
                          float(cfg.max_time), int(ceiling), bool(follow_theta))
    kappa, tau_theta, tau_0, steps, died, viol, capped = out
    return CouplingSample(int(kappa), float(tau_theta), float(tau_0), int(steps), bool(died),
                          int(viol), bool(capped))


def coupled_samples(cfg: SimConfig, n: int, start: int = 0, **kw) -> list[CouplingSample]:
    return [sample_coupled(cfg, start + r, **kw) for r in range(n)]


@dataclass(frozen=True)
class SeparationEstimate:
    estimate: float
    std_error: float
    bound: float
    n: int

    @property
    def consistent(self) -> bool:
        return self.estimate <= self.bound + 3 * self.std_error


def separation_bound(params: ModelParams, m: int, n: int) -> float:
    """``P(kappa <= n) <= (m + n) n theta / (lam + mu)``."""
    return (m + n) * n * params.theta / (params.lam + params.mu)


def separation_probability(cfg: SimConfig, n: int, N: int) -> SeparationEstimate:
    """Empirical ``P(kappa <= n)`` over ``N`` coupled runs truncated at ``n`` jumps."""
    if n < 1 or N < 1:
        raise ParameterError("n and N must be >= 1")
    lam, mu, theta, m0 = _kernel_args(cfg)
    hits = 0
    for r in range(N):
        kappa = _coupled_kernel(cfg.rng(r), lam, mu, theta, m0, int(n), math.inf, 2**62, False)[0]
        hits += 0 <= kappa <= n
    p = hits / N
    return SeparationEstimate(p, math.sqrt(p * (1 - p) / N), separation_bound(cfg.params, cfg.m0, n), N)


@dataclass(frozen=True)
class ConditionedBatch:
    """Accepted coupled runs and the number of attempts it took."""

    samples: list
    attempts: int
    condition: str

    @property
    def accepted(self) -> int:
        return len(self.samples)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts

    @property
    def tau_theta(self) -> np.ndarray:
        return np.array([s.tau_theta for s in self.samples])

    @property
    def tau_0(self) -> np.ndarray:
        return np.array([s.tau_0 for s in self.samples])


CONDITIONS = ("dies", "survives")


def conditioned_sample(cfg: SimConfig, condition: str, n: int = 1,
                       max_attempts: Optional[int] = None) -> ConditionedBatch:
    """Rejection sampling of coupled runs given the fate of the linear component.

    ``"dies"`` keeps runs whose linear component is absorbed; ``"survives"``
    keeps runs whose linear component reaches :func:`linear_ceiling`, which
    approximates ``tau_0 = inf`` up to probability ``(mu/lam)^L``.
    """
    if condition not in CONDITIONS:
        raise ParameterError(f"condition must be one of {CONDITIONS}")
    if condition == "survives" and cfg.params.regime is not Regime.SUPERCRITICAL:
        raise RejectionBudgetExceeded("the linear process dies out almost surely for lam <= mu")
    max_attempts = max_attempts or 1000 * n
    want_died = condition == "dies"
    accepted = []
    attempts = 0
    while len(accepted) < n:
        if attempts >= max_attempts:
            raise RejectionBudgetExceeded(
                f"accepted {len(accepted)} of {n} after {attempts} attempts"
            )
        s = sample_coupled(cfg, attempts, follow_theta=not want_died)
        attempts += 1
        if s.capped:
            raise CapExceeded(f"replicate {attempts - 1} hit a cap")
        if s.linear_died == want_died:
            accepted.append(s)
    return ConditionedBatch(accepted, attempts, condition)


# ---------------------------------------------------------------------------
# estimators


@dataclass
class Welford:
    """Streaming mean and variance; ``merge`` is associative."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def extend(self, xs) -> None:
        xs = np.asarray(xs, dtype=float)
        if xs.size:
            self.merge(Welford(xs.size, float(xs.mean()), float(((xs - xs.mean()) ** 2).sum())))

    def merge(self, other: "Welford") -> "Welford":
        if other.n == 0:
            return self
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean += d * other.n / n
        self.m2 += other.m2 + d * d * self.n * other.n / n
        self.n = n
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 1 else math.nan


def ks_statistic(sample, cdf: Callable) -> float:
    """One-sample Kolmogorov-Smirnov distance to a continuous reference CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n), 0.0))


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Large-sample one-sample KS critical value ``c(alpha) / sqrt(n)``."""
    return math.sqrt(-0.5 * math.log(alpha / 2)) / math.sqrt(n)


def ks_critical_2samp(n1: int, n2: int, alpha: float = 0.01) -> float:
    return math.sqrt(-0.5 * math.log(alpha / 2)) * math.sqrt((n1 + n2) / (n1 * n2))


@dataclass(frozen=True)
class EstimatorReport:
    n: int
    mean: float
    std_error: float
    support: np.ndarray = field(repr=False)
    ks: Optional[float] = None
    capped: int = 0
    rng_algorithm: str = RNG_ALGORITHM

    def ecdf(self, t):
        return np.searchsorted(self.support, t, side="right") / self.n


def estimate(cfg: SimConfig, N: int, reference_cdf: Optional[Callable] = None,
             batch: int = 10_000, sampler: Optional[Callable] = None) -> EstimatorReport:
    """Mean, standard error, empirical CDF and optional KS statistic of ``tau``.

    Replicates are processed in batches merged with :class:`Welford`; the
    result is independent of ``batch`` up to floating-point summation order.
    ``sampler(cfg, n, start)`` defaults to :func:`extinction_times`.
    """
    if N < 2:
        raise ParameterError("N must be >= 2")
    acc = Welford()
    chunks = []
    n_capped = 0
    for start in range(0, N, batch):
        n = min(batch, N - start)
        if sampler is None:
            tau, capped = extinction_times(cfg, n, start)
            n_capped += int(capped.sum())
        else:
            tau = np.asarray(sampler(cfg, n, start), dtype=float)
        acc.extend(tau)
        chunks.append(tau)
    sample = np.sort(np.concatenate(chunks))
    ks = ks_statistic(sample, reference_cdf) if reference_cdf is not None else None
    return EstimatorReport(N, acc.mean, acc.std_error, sample, ks, n_capped)
