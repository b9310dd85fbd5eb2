"""Birth-death process with competition: rates, regimes and pi/Pi weights.

The process jumps from ``i`` to ``i + 1`` at rate ``i * lam`` and from ``i``
to ``i - 1`` at rate ``i * mu + i * (i - 1) * theta``.  Setting ``theta = 0``
gives the linear birth-death process.

All weight arithmetic is done in log space.  ``log Pi_0`` is ``-inf``
(log of an empty sum), which numpy propagates exactly through
``logaddexp`` and which callers can test with ``np.isneginf``.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, RegimeError

LOG_ZERO = -math.inf


class Regime(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ModelParams:
    """Birth rate ``lam``, natural death rate ``mu`` and competition rate ``theta``.

    ``lam = 0`` is accepted so that pure-death chains can be simulated; every
    weight-based computation rejects it.
    """

    lam: float
    mu: float
    theta: float = 0.0

    def __post_init__(self):
        for name in ("lam", "mu", "theta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
        if self.lam < 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if self.mu <= 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if self.theta < 0:
            raise ParameterError(f"theta must be >= 0, got {self.theta}")

    @property
    def regime(self) -> Regime:
        if self.lam < self.mu:
            return Regime.SUBCRITICAL
        if self.lam == self.mu:
            return Regime.CRITICAL
        return Regime.SUPERCRITICAL

    @property
    def is_linear(self) -> bool:
        return self.theta == 0.0

    def with_theta(self, theta: float) -> "ModelParams":
        return ModelParams(self.lam, self.mu, theta)

    def linear(self) -> "ModelParams":
        """The same process without competition."""
        return self.with_theta(0.0)


def _check_state(i) -> None:
    if np.any(np.asarray(i) < 0):
        raise ParameterError(f"state must be >= 0, got {i!r}")


def birth_rate(params: ModelParams, i):
    """Total birth rate ``i * lam`` in state ``i`` (scalar or array)."""
    _check_state(i)
    return params.lam * i


def death_rate(params: ModelParams, i):
    """Total death rate ``i * mu + i * (i - 1) * theta`` in state ``i``."""
    _check_state(i)
    return params.mu * i + params.theta * i * (i - 1)


def carrying_capacity(params: ModelParams) -> int:
    """Threshold state ``floor((lam - mu) / theta) + 1`` of the supercritical process.

    Below it the drift is upward, above it downward.  Exact ties, where
    ``(lam - mu) / theta`` is an integer, are not special-cased.
    """
    if params.regime is not Regime.SUPERCRITICAL:
        raise RegimeError(f"carrying capacity needs lam > mu, got {params}")
    if params.theta == 0:
        raise ParameterError("carrying capacity needs theta > 0")
    return int(math.floor((params.lam - params.mu) / params.theta)) + 1


def _log_pi(params: ModelParams, J: int) -> np.ndarray:
    # log pi_j = sum_{i<j} log((mu + i*theta) / lam)
    steps = np.log(params.mu + params.theta * np.arange(J, dtype=float)) - math.log(params.lam)
    out = np.empty(J + 1)
    out[0] = 0.0
    # extended precision keeps the running sum within an ulp or so of exact
    out[1:] = np.cumsum(steps, dtype=np.longdouble)
    return out


@dataclass(frozen=True)
class WeightTable:
    """Log-domain ``pi_j`` (``j = 0..J``) and ``Pi_k`` (``k = 0..J+1``).

    ``pi_j = prod_{i=1}^{j} mu_i / lam_i`` and ``Pi_k = sum_{j<k} pi_j``.
    ``log_Pi`` is a running ``logaddexp`` of ``log_pi`` so no intermediate
    product or sum is ever formed on the linear scale.
    """

    params: ModelParams
    log_pi: np.ndarray = field(repr=False)
    log_Pi: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return len(self.log_pi) - 1

    def pi(self, j):
        return np.exp(self.log_pi[j])

    def Pi(self, k):
        return np.exp(self.log_Pi[k])

    def log_span(self, lo: int, hi: int) -> float:
        """``log(Pi_hi - Pi_lo)`` summed directly over ``pi_lo..pi_{hi-1}``."""
        if hi <= lo:
            return LOG_ZERO
        return float(np.logaddexp.reduce(self.log_pi[lo:hi]))

    def log_reciprocal_terms(self, start: int = 1) -> np.ndarray:
        """``log(1 / (lam_k pi_k))`` for ``k = start..J``."""
        k = np.arange(start, self.J + 1, dtype=float)
        return -(np.log(k * self.params.lam) + self.log_pi[start:])

    def extended(self, J: int) -> "WeightTable":
        return self if J <= self.J else build_weights(self.params, J)


def build_weights(params: ModelParams, J: int) -> WeightTable:
    if J < 0:
        raise ParameterError(f"J must be >= 0, got {J}")
    if params.lam <= 0:
        raise ParameterError("weights need lam > 0")
    return _build_weights(params, int(J))


# tables are read-only, so sharing cached instances is safe
@functools.lru_cache(maxsize=64)
def _build_weights(params: ModelParams, J: int) -> WeightTable:
    log_pi = _log_pi(params, int(J))
    log_Pi = np.empty(len(log_pi) + 1)
    log_Pi[0] = LOG_ZERO
    np.logaddexp.accumulate(log_pi, out=log_Pi[1:])
    log_pi.setflags(write=False)
    log_Pi.setflags(write=False)
    return WeightTable(params, log_pi, log_Pi)
