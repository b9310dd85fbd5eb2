"""Small-theta asymptotic predictions and limit laws.

Quantities of size ``exp(+-c2/theta)`` are returned as :class:`LogValue`
pairs so they stay usable when the linear value over- or underflows.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ParameterError, RegimeError
from .exact import EULER_GAMMA
from .model import ModelParams, Regime

CRITICAL_CONSTANT = (math.pi / 2) ** 1.5


class LogValue(NamedTuple):
    value: float
    log: float

    @classmethod
    def from_log(cls, log_value: float) -> "LogValue":
        try:
            return cls(math.exp(log_value), log_value)
        except OverflowError:
            return cls(math.inf, log_value)


def _require(params: ModelParams, regime: Regime, positive_theta: bool = True) -> None:
    if params.regime is not regime:
        raise RegimeError(f"needs the {regime} regime, got {params}")
    if positive_theta and params.theta <= 0:
        raise ParameterError("needs theta > 0")


@dataclass(frozen=True)
class SupercriticalConstants:
    c1: float
    c2: float


def constants(params: ModelParams) -> SupercriticalConstants:
    """``c1 = lam (lam-mu)^-2 sqrt(2 pi / mu)``, ``c2 = lam - mu - mu ln(lam/mu)``."""
    _require(params, Regime.SUPERCRITICAL, positive_theta=False)
    lam, mu = params.lam, params.mu
    c1 = lam / (lam - mu) ** 2 * math.sqrt(2 * math.pi / mu)
    # lam - mu - mu*ln(lam/mu) = mu * (r - log1p(r)) with r = (lam - mu)/mu
    r = (lam - mu) / mu
    c2 = mu * (r - math.log1p(r))
    return SupercriticalConstants(c1, c2)


def supercritical_mean(params: ModelParams) -> LogValue:
    _require(params, Regime.SUPERCRITICAL)
    c = constants(params)
    th = params.theta
    return LogValue.from_log(math.log(c.c1) + 0.5 * math.log(th) + c.c2 / th)


def subcritical_shift(params: ModelParams, a: float) -> float:
    """Centering of the Gumbel law: the subcritical mean without Euler's constant."""
    _require(params, Regime.SUBCRITICAL)
    if a <= 0:
        raise ParameterError(f"a must be > 0, got {a}")
    lam, mu, th = params.lam, params.mu, params.theta
    d = mu - lam
    return (math.log(a / th) + math.log(d / mu) + math.log(d / (d + a))) / d


def subcritical_mean(params: ModelParams, a: float) -> float:
    return subcritical_shift(params, a) + EULER_GAMMA / (params.mu - params.lam)


def mean_reduction(params: ModelParams, a: float) -> float:
    """Limit of ``E(tau_0) - E(tau_theta)`` when ``theta * m -> a``."""
    if params.regime is not Regime.SUBCRITICAL:
        raise RegimeError("needs lam < mu")
    if a <= 0:
        raise ParameterError(f"a must be > 0, got {a}")
    d = params.mu - params.lam
    return math.log1p(a / d) / d


def critical_mean(params: ModelParams) -> float:
    _require(params, Regime.CRITICAL)
    return CRITICAL_CONSTANT / math.sqrt(params.theta * params.mu)


# ---------------------------------------------------------------------------
# limit laws


def gumbel_cdf(x):
    with np.errstate(over="ignore"):
        return np.exp(-np.exp(-np.asarray(x, dtype=float)))[()]


def exponential_survival(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, 1.0, np.exp(-np.maximum(x, 0)))[()]


def exponential_cdf(x):
    return 1.0 - exponential_survival(x)


def frechet_cdf(x, lam: float = 1.0):
    """``exp(-1/(lam x))`` for ``x > 0`` and 0 otherwise."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(-1.0 / (lam * np.where(x > 0, x, 1.0)))
    return np.where(x > 0, out, 0.0)[()]


class LimitLaw(enum.Enum):
    EXPONENTIAL = "exponential"
    GUMBEL = "gumbel"
    FRECHET = "frechet"


@dataclass(frozen=True)
class PredictionSet:
    """Asymptotic mean and limit law of the extinction time.

    The limiting CDF of ``tau`` is ``law((t - shift) / scale)``.  ``law`` is
    ``None`` when no limit law is known (the critical competitive process).
    """

    params: ModelParams
    mean: float
    log_mean: float
    law: Optional[LimitLaw]
    shift: float = 0.0
    scale: float = 1.0
    law_param: float = 1.0

    @property
    def regime(self) -> Regime:
        return self.params.regime

    def standardize(self, t):
        return (np.asarray(t, dtype=float) - self.shift) / self.scale

    def cdf(self, t):
        """Limiting probability ``P(tau <= t)``."""
        return limit_cdf(self, self.standardize(t))


def limit_cdf(pred: PredictionSet, x):
    """CDF of the standardized limit law of ``pred`` at ``x``."""
    if pred.law is LimitLaw.GUMBEL:
        return gumbel_cdf(x)
    if pred.law is LimitLaw.EXPONENTIAL:
        return exponential_cdf(x)
    if pred.law is LimitLaw.FRECHET:
        return frechet_cdf(x, pred.law_param)
    raise ParameterError(f"no limit law known for {pred.params}")


def law_cdf(law: LimitLaw, lam: float = 1.0) -> Callable:
    return {
        LimitLaw.GUMBEL: gumbel_cdf,
        LimitLaw.EXPONENTIAL: exponential_cdf,
        LimitLaw.FRECHET: lambda x: frechet_cdf(x, lam),
    }[law]


def predict(params: ModelParams, a: Optional[float] = None, m: Optional[int] = None) -> PredictionSet:
    """Regime-specific prediction for a start ``m`` or scaled start ``a = theta m``.

    For ``theta > 0`` the subcritical law needs ``a`` (derived from ``m`` when
    only ``m`` is given).  For ``theta = 0`` the large-``m`` linear laws are
    used and ``m`` is required.
    """
    regime = params.regime
    if params.theta == 0:
        if m is None:
            raise ParameterError("linear predictions need m")
        if regime is Regime.SUBCRITICAL:
            d = params.mu - params.lam
            shift = (math.log(m) + math.log1p(-params.lam / params.mu)) / d
            mean = shift + EULER_GAMMA / d
            return PredictionSet(params, mean, math.log(mean), LimitLaw.GUMBEL, shift, 1 / d)
        if regime is Regime.CRITICAL:
            return PredictionSet(params, math.inf, math.inf, LimitLaw.FRECHET, 0.0, float(m), params.lam)
        raise RegimeError("the supercritical linear process survives with positive probability")

    if regime is Regime.SUPERCRITICAL:
        mean = supercritical_mean(params)
        return PredictionSet(params, mean.value, mean.log, LimitLaw.EXPONENTIAL, 0.0, mean.value)
    if regime is Regime.CRITICAL:
        mean = critical_mean(params)
        return PredictionSet(params, mean, math.log(mean), None)
    if a is None:
        if m is None:
            raise ParameterError("subcritical predictions need a or m")
        a = params.theta * m
    shift = subcritical_shift(params, a)
    mean = subcritical_mean(params, a)
    return PredictionSet(params, mean, math.log(mean), LimitLaw.GUMBEL, shift, 1 / (params.mu - params.lam))


# ---------------------------------------------------------------------------
# weight approximations


def w_function(params: ModelParams, x):
    """``W(x) = x - x ln((mu+x)/lam) - mu ln((mu+x)/mu)``.

    With ``lam = mu`` this is ``x - (mu+x) ln((mu+x)/mu)``, the form used for
    the critical process, so one function serves every regime.
    """
    x = np.asarray(x, dtype=float)
    lam, mu = params.lam, params.mu
    return (x - x * np.log((mu + x) / lam) - mu * np.log1p(x / mu))[()]


def v_function(params: ModelParams, x):
    """``V(x) = (x+mu) ln((x+mu)/mu) - x``, i.e. ``-W`` at ``lam = mu``."""
    x = np.asarray(x, dtype=float)
    mu = params.mu
    return ((x + mu) * np.log1p(x / mu) - x)[()]


def pi_approx(params: ModelParams, j) -> LogValue:
    """``(1 + j theta/mu)^(-1/2) exp(-W(j theta)/theta)``, approximating ``pi_j``."""
    j = np.asarray(j)
    if np.any(j < 1):
        raise ParameterError("j must be >= 1")
    if params.theta <= 0:
        raise ParameterError("needs theta > 0")
    th = params.theta
    log = -0.5 * np.log1p(j * th / params.mu) - w_function(params, j * th) / th
    log = np.asarray(log)[()]
    if np.ndim(log) == 0:
        return LogValue.from_log(float(log))
    with np.errstate(over="ignore"):
        return LogValue(np.exp(log), log)


def upcross_deficit_asymptote(params: ModelParams) -> LogValue:
    """``1 - Q_c ~ (lam - mu) sqrt(mu) lam^(-3/2) exp(-c2/theta)``."""
    _require(params, Regime.SUPERCRITICAL)
    lam, mu = params.lam, params.mu
    c2 = constants(params).c2
    return LogValue.from_log(math.log((lam - mu) * math.sqrt(mu) / lam**1.5) - c2 / params.theta)


def reciprocal_sum_asymptote(params: ModelParams) -> LogValue:
    """``sum_j 1/(lam_j pi_j) ~ sqrt(2 pi theta) exp(c2/theta) / ((lam-mu) sqrt(mu))``."""
    _require(params, Regime.SUPERCRITICAL)
    lam, mu, th = params.lam, params.mu, params.theta
    c2 = constants(params).c2
    return LogValue.from_log(
        0.5 * math.log(2 * math.pi * th) + c2 / th - math.log((lam - mu) * math.sqrt(mu))
    )


def excursion_mean_asymptote(params: ModelParams) -> float:
    _require(params, Regime.SUPERCRITICAL)
    return math.sqrt(2 * math.pi * params.theta / params.lam) / (params.lam - params.mu)


# ---------------------------------------------------------------------------
# fluid limit


def _require_noncritical(params: ModelParams) -> float:
    d = params.mu - params.lam
    if d == 0:
        raise ParameterError("fluid solution is only provided for lam != mu")
    return d


def fluid_solution(params: ModelParams, a: float, t):
    """Solution of ``x' = (lam - mu) x - x^2``, ``x(0) = a``."""
    d = _require_noncritical(params)
    if a <= 0:
        raise ParameterError(f"a must be > 0, got {a}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("t must be >= 0")
    with np.errstate(over="ignore"):
        inv = (1 / a + 1 / d) * np.exp(d * t) - 1 / d
        return (1 / inv)[()]


@dataclass(frozen=True)
class FluidCurve:
    params: ModelParams
    a: float

    def __call__(self, t):
        return fluid_solution(self.params, self.a, t)

    def h(self, z, t):
        return hxt_integral(self.params, self.a, z, t)


def hxt_integral(params: ModelParams, a: float, z, t):
    """First integral ``h(z, t)`` of the fluid equation.

    ``h(x(t), t) = 0`` along the solution and ``x(t - h(z, t)) = z``.
    """
    d = _require_noncritical(params)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or a <= 0:
        raise ParameterError("z and a must be > 0")
    rz = (d + z) / z
    ra = (d + a) / a
    if np.any(rz <= 0) or ra <= 0:
        raise ParameterError("z or a lies outside the domain of the integral")
    return (np.asarray(t, dtype=float) - (np.log(rz) - np.log(ra)) / d)[()]


def descent_time(params: ModelParams, a: float, theta: Optional[float] = None, alpha: float = 0.25) -> float:
    """Fluid time to fall from ``a`` to ``theta^(1-alpha)`` (subcritical only)."""
    if params.regime is not Regime.SUBCRITICAL:
        raise RegimeError("needs lam < mu")
    theta = params.theta if theta is None else theta
    if theta <= 0:
        raise ParameterError("needs theta > 0")
    if not 0 < alpha < 0.5:
        raise ParameterError("alpha must lie in (0, 1/2)")
    d = params.mu - params.lam
    return ((1 - alpha) * math.log(1 / theta) - math.log(1 / a + 1 / d)) / d
