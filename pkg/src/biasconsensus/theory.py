"""Closed-form drift bounds, constants, thresholds and phase times.

All logarithms are natural. Phase times carry explicit ceilings. These are
pure functions of their arguments.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import BiasError, ConsistencyError, ParameterError

_OPEN_UNIT_HI = math.nextafter(1.0, 0.0)
_OPEN_UNIT_LO = math.nextafter(0.0, 1.0)


def _clamp_open_unit(x: float) -> float:
    return min(max(x, _OPEN_UNIT_LO), _OPEN_UNIT_HI)


def _require_bias(q0: float, q1: float) -> None:
    if not q1 < q0:
        raise BiasError(f"bound requires q1 < q0, got q0={q0}, q1={q1}")


# --- voter ------------------------------------------------------------------


def voter_drift_lb(min_ab: int, phi: float, q0: float, q1: float) -> float:
    """High-probability lower bound ((q0 - q1)/2) * phi * min(A, B) on the drift."""
    _require_bias(q0, q1)
    if not 0.0 < phi <= 1.0:
        raise ParameterError(f"phi must lie in (0, 1], got {phi}")
    return (q0 - q1) / 2.0 * phi * min_ab


def gamma_constant(q0: float, q1: float, phi: float) -> float:
    """Concentration exponent for the voter drift bound.

    eps1 = (q0-q1)/(4 q0), eps2 = (q0-q1)/(4 q1),
    eps3 = (1+eps2) ln(1+eps2) - eps2, gamma = phi * min(eps1^2 q0 / 3, eps3 q1).
    """
    _require_bias(q0, q1)
    if q1 <= 0.0:
        raise BiasError("gamma constant needs q1 > 0")
    if not 0.0 < phi <= 1.0:
        raise ParameterError(f"phi must lie in (0, 1], got {phi}")
    eps1 = (q0 - q1) / (4.0 * q0)
    eps2 = (q0 - q1) / (4.0 * q1)
    eps3 = (1.0 + eps2) * math.log1p(eps2) - eps2
    return _clamp_open_unit(phi * min(eps1**2 * q0 / 3.0, eps3 * q1))


def voter_overshoot_bound(n: int, phi: float, q0: float, q1: float) -> float:
    """Ceiling on P(B_{t+1} > n/2 | B_t <= n/2): 2 exp(-(q0-q1)^2 phi^2 n / 2)."""
    return min(1.0, 2.0 * math.exp(-((q0 - q1) ** 2) * phi**2 * n / 2.0))


@dataclass(frozen=True)
class VoterPrediction:
    gamma: float | None
    t1: int
    t2: int
    fail_prob_phase1: float | None
    overshoot_bound: float
    t2_degenerate: bool = False

    @property
    def total(self) -> int:
        return self.t1 + self.t2

    def to_dict(self) -> dict:
        return asdict(self) | {"total": self.total}


def voter_phase_times(n: int, a0: int, phi: float, q0: float, q1: float) -> VoterPrediction:
    """Phase-I time to majority and Phase-II time to consensus for the voter rule.

    When (q0 - q1) * phi >= 1 the Phase-II log rate is undefined; T2 falls back
    to ceil(2 ln n) and ``t2_degenerate`` is set. ``gamma`` and the Phase-I
    failure probability are None when q1 = 0.
    """
    _require_bias(q0, q1)
    if not 0.0 < phi <= 1.0:
        raise ParameterError(f"phi must lie in (0, 1], got {phi}")
    if n < 2 or not 1 <= a0 <= n:
        raise ParameterError(f"need n >= 2 and 1 <= a0 <= n, got n={n}, a0={a0}")
    gap = q0 - q1
    if a0 >= n / 2:
        t1 = 0
    else:
        t1 = math.ceil(math.log(n / (2.0 * a0)) / math.log1p(gap / 2.0 * phi))
    degenerate = gap * phi >= 1.0
    if degenerate:
        t2 = math.ceil(2.0 * math.log(n))
    else:
        t2 = math.ceil(2.0 * math.log(n) / -math.log1p(-gap * phi))
    gamma = gamma_constant(q0, q1, phi) if q1 > 0.0 else None
    fail = None if gamma is None else min(1.0, 2.0 * t1 * math.exp(-gamma * a0))
    return VoterPrediction(
        gamma=gamma,
        t1=t1,
        t2=t2,
        fail_prob_phase1=fail,
        overshoot_bound=voter_overshoot_bound(n, phi, q0, q1),
        t2_degenerate=degenerate,
    )


# --- 2-choices ----------------------------------------------------------------


def two_choices_drift_lb(a: int, b: int, n: int, lam: float, q0: float, q1: float) -> float:
    """b * (q1 (1 - lam^2) a/n - q1^2/(q0 + q1)); may be negative."""
    if a + b != n:
        raise ParameterError(f"a + b must equal n, got {a} + {b} != {n}")
    if q0 + q1 <= 0.0:
        raise ParameterError("q0 + q1 must be positive")
    return b * (q1 * (1.0 - lam**2) * a / n - q1**2 / (q0 + q1))


def epsilon_prime(a: int, b: int, n: int, q0: float, q1: float) -> float:
    """Shifted imbalance (a - b)/n + (q0 - q1)/(q0 + q1)."""
    if a + b != n:
        raise ParameterError(f"a + b must equal n, got {a} + {b} != {n}")
    return (a - b) / n + (q0 - q1) / (q0 + q1)


def refined_drift_lb(b: int, q1: float, c: float, eps_prime: float) -> float:
    """(b q1 / 2) c eps'; valid when eps' >= 2 lam^2 and lam^2 <= q0/(q0+q1) - c."""
    return b * q1 / 2.0 * c * eps_prime


def two_choices_threshold(n: int, lam: float, q0: float, q1: float) -> float:
    """Minimum initial fraction of opinion 1: q1/(q0+q1) + max(lam^2, sqrt(ln n / 4n))."""
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    return q1 / (q0 + q1) + max(lam**2, math.sqrt(math.log(n) / (4.0 * n)))


def gamma_interval(n: int, lam: float, q0: float, q1: float, gamma: float) -> tuple[float, float]:
    """Range of eps' over which the per-step concentration bound applies.

    Uses sqrt(ln n / n), not the sqrt(ln n / 4n) that appears in the
    threshold; both forms are kept as stated.
    """
    lo = max(2.0 * lam**2, math.sqrt(math.log(n) / n))
    hi = 2.0 * q0 / (q0 + q1) - 2.0 * gamma
    return lo, hi


def default_margin(lam: float, q0: float, q1: float, slack: float = 0.01) -> float:
    """Largest admissible spectral margin c minus ``slack``."""
    return q0 / (q0 + q1) - lam**2 - slack


def default_gamma(c: float) -> float:
    return min(c, 0.1)


@dataclass(frozen=True)
class TwoChoicesPrediction:
    c: float
    gamma: float
    eps_prime0: float
    threshold: float | None
    t1: int
    t2: int
    alpha: float
    beta: float

    @property
    def total(self) -> int:
        return self.t1 + self.t2

    def to_dict(self) -> dict:
        return asdict(self) | {"total": self.total}


def two_choices_phase_times(
    n: int,
    b0: int,
    gamma: float,
    c: float,
    q0: float,
    q1: float,
    eps_prime0: float,
    threshold: float | None = None,
) -> TwoChoicesPrediction:
    """Phase times and tail exponents for the 2-choices rule.

    T1 counts steps until B falls below n*gamma, T2 steps from there to
    consensus with contraction factor r = 1 - q1 c (q0/(q0+q1) - gamma).
    """
    ratio = q0 / (q0 + q1)
    if not 0.0 < gamma <= c < ratio:
        raise ParameterError(
            f"need 0 < gamma <= c < q0/(q0+q1)={ratio}, got gamma={gamma}, c={c}"
        )
    if q1 <= 0.0:
        raise BiasError("phase times need q1 > 0")
    if n < 2 or not 0 <= b0 <= n:
        raise ParameterError(f"need n >= 2 and 0 <= b0 <= n, got n={n}, b0={b0}")
    if b0 <= n * gamma:
        t1 = 0
    else:
        shrink = q1 * c * eps_prime0 / 4.0
        if not 0.0 < shrink < 1.0:
            raise ParameterError(f"eps_prime0={eps_prime0} gives no Phase-I contraction")
        t1 = math.ceil(math.log(b0 / (n * gamma)) / -math.log1p(-shrink))
    r = 1.0 - q1 * c * (ratio - gamma)
    if not 0.0 < r < 1.0:
        raise ConsistencyError(f"contraction factor r={r} outside (0, 1)")
    t2 = math.ceil(2.0 * math.log(n) / -math.log(r))
    alpha = gamma**2 * q1**2 * c**2 / 8.0
    beta = 2.0 * (ratio - gamma) ** 2 * gamma**2 * q1**2 * c**2
    if not 0.0 < alpha < 1.0:
        raise ConsistencyError(f"alpha={alpha} outside (0, 1)")
    return TwoChoicesPrediction(c, gamma, eps_prime0, threshold, t1, t2, alpha, beta)


def two_choices_prediction(n: int, a0: int, lam: float, q0: float, q1: float,
                           c: float | None = None, gamma: float | None = None):
    """Phase times with default constants for a concrete graph and start.

    Returns None when the start lies outside the regime the bounds cover
    (no admissible margin, q1 = 0, or eps'(0) < 2 lam^2).
    """
    if q1 <= 0.0 or not q1 < q0:
        return None
    if c is None:
        c = default_margin(lam, q0, q1)
    if gamma is None:
        gamma = default_gamma(c)
    if not 0.0 < gamma <= c < q0 / (q0 + q1):
        return None
    eps0 = epsilon_prime(a0, n - a0, n, q0, q1)
    if eps0 < 2.0 * lam**2 or eps0 <= 0.0:
        return None
    return two_choices_phase_times(
        n, n - a0, gamma, c, q0, q1, eps0, two_choices_threshold(n, lam, q0, q1)
    )


def squared_imbalance_lb(a: int, b: int, n: int, lam: float, cut: int, d: int) -> float:
    """Lower bound b((1 - lam^2) a/n - 2 theta (1 - theta)), theta = cut/(d b).

    Bounds sum_{i in B} (d_i^A/d)^2 - sum_{i in A} (d_i^B/d)^2 on a
    d-regular graph whose nontrivial spectrum lies within [-lam, lam].
    """
    if b == 0:
        return 0.0
    theta = cut / (d * b)
    return b * ((1.0 - lam**2) * a / n - 2.0 * theta * (1.0 - theta))
