"""
Step-size and temperature schedules alpha_c, beta_c, tau_c.

Counters c are 1-based: the first visit to a state uses c = 1.
"""

import logging
import math
from decimal import Decimal
from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel

from .errors import ScheduleError
from .game_model import ValidationReport

logger = logging.getLogger(__name__)

# Largest log(c) the threshold search will consider before giving up.
MAX_LOG_COUNT = 1e7
EXACT_LOG_LIMIT = 36.0  # below this exp(log c) is an exactly representable integer range


class ScheduleMode(str, Enum):
    TO_EPSILON = "ToEpsilon"
    TO_ZERO = "ToZero"
    MAX_EPSILON = "MaxEpsilon"


class ScheduleConfig(BaseModel):
    """Exponents and parameters of the three schedules.

    Domain constraints are checked by validate_schedule, not at construction,
    so that invalid configurations can still be reported on.
    """

    rho_alpha: float = 0.9
    rho_beta: float = 1.0
    rho: float = 0.7
    tau_bar: float
    epsilon: float = 0.0
    mode: ScheduleMode
    d_bound: Optional[float] = None

    def with_bound(self, d_bound: float) -> "ScheduleConfig":
        return self.model_copy(update={"d_bound": float(d_bound)})

    @property
    def tau_limit(self) -> float:
        return 0.0 if self.mode == ScheduleMode.TO_ZERO else self.epsilon


class ScheduleReport(ValidationReport):
    assumption: Optional[str] = None
    c_prime: Optional[float] = None
    c_const: Optional[float] = None


def _check_count(c) -> None:
    if isinstance(c, bool) or not isinstance(c, int) or c < 1:
        raise ScheduleError(f"counter must be an integer >= 1, got {c!r}")


def alpha(cfg: ScheduleConfig, c: int) -> float:
    _check_count(c)
    return float(c) ** -cfg.rho_alpha


def beta(cfg: ScheduleConfig, c: int) -> float:
    _check_count(c)
    return float(c) ** -cfg.rho_beta


def _require_bound(cfg: ScheduleConfig) -> float:
    if cfg.d_bound is None or not cfg.d_bound > 0:
        raise ScheduleError(f"{cfg.mode.value} schedule needs a positive d_bound")
    return cfg.d_bound


def _to_zero(cfg: ScheduleConfig, log_c: float) -> float:
    d = _require_bound(cfg)
    return cfg.tau_bar / (1.0 + cfg.tau_bar * (cfg.rho_alpha * cfg.rho / (4.0 * d)) * log_c)


def tau(cfg: ScheduleConfig, c: int) -> float:
    _check_count(c)
    if cfg.mode == ScheduleMode.TO_EPSILON:
        return (1.0 / c) * cfg.tau_bar + (1.0 - 1.0 / c) * cfg.epsilon
    if cfg.mode == ScheduleMode.TO_ZERO:
        return _to_zero(cfg, math.log(c))
    return max(cfg.epsilon, _to_zero(cfg, math.log(c)))


def _tau_at_log(cfg: ScheduleConfig, log_c: float) -> float:
    """tau evaluated at a real counter exp(log_c)."""
    if cfg.mode == ScheduleMode.TO_EPSILON:
        return cfg.epsilon + (cfg.tau_bar - cfg.epsilon) * math.exp(-log_c)
    if cfg.mode == ScheduleMode.TO_ZERO:
        return _to_zero(cfg, log_c)
    return max(cfg.epsilon, _to_zero(cfg, log_c))


def tau_increment_ratio(cfg: ScheduleConfig, c: int) -> float:
    """(tau_{c+1} - tau_c) / alpha_c."""
    return (tau(cfg, c + 1) - tau(cfg, c)) / alpha(cfg, c)


def validate_schedule(cfg: ScheduleConfig) -> ScheduleReport:
    """Check the sufficient parameter constraints and the assumption each mode certifies."""
    report = ScheduleReport()
    if not 0.5 < cfg.rho_alpha < cfg.rho_beta <= 1.0:
        report.add(
            f"need 1/2 < rho_alpha < rho_beta <= 1, got rho_alpha={cfg.rho_alpha}, "
            f"rho_beta={cfg.rho_beta}"
        )
    if not cfg.tau_bar > 0:
        report.add(f"tau_bar must be positive, got {cfg.tau_bar}")
    if not cfg.epsilon >= 0:
        report.add(f"epsilon must be non-negative, got {cfg.epsilon}")

    if cfg.mode in (ScheduleMode.TO_EPSILON, ScheduleMode.MAX_EPSILON):
        if not cfg.epsilon > 0:
            report.add(f"{cfg.mode.value} needs epsilon > 0, got {cfg.epsilon}")
        if not 2 * cfg.rho_alpha > 1:
            report.add("sum of alpha_c^2 diverges: need 2 rho_alpha > 1")

    if cfg.mode in (ScheduleMode.TO_ZERO, ScheduleMode.MAX_EPSILON):
        if cfg.d_bound is None or not cfg.d_bound > 0:
            report.add(f"{cfg.mode.value} needs a positive d_bound")
        if cfg.rho_alpha > 0:
            upper = 2.0 - 1.0 / cfg.rho_alpha
            if not 0 < cfg.rho < upper:
                report.add(f"need 0 < rho < 2 - 1/rho_alpha = {upper:.6g}, got rho={cfg.rho}")

    if cfg.mode == ScheduleMode.TO_ZERO and not (2.0 - cfg.rho) * cfg.rho_alpha > 1.0:
        report.add(
            f"sum of alpha_c^(2-rho) diverges: (2 - rho) rho_alpha = "
            f"{(2.0 - cfg.rho) * cfg.rho_alpha:.6g} <= 1"
        )

    if report.ok:
        if cfg.mode == ScheduleMode.TO_ZERO:
            report.assumption = "2'.2"
            try:
                report.c_prime = math.exp(4.0 * cfg.d_bound / cfg.tau_bar)
            except OverflowError:
                report.c_prime = math.inf
            report.c_const = 1.0
        else:
            report.assumption = "2.2"
    return report


def _prop2_gap(cfg: ScheduleConfig, log_c: float, actions: int) -> float:
    """log(alpha_c) + 2D/tau_c + log(actions); negative once the clamp is inactive."""
    d = _require_bound(cfg)
    return -cfg.rho_alpha * log_c + 2.0 * d / _tau_at_log(cfg, log_c) + math.log(actions)


def clamp_inactive(cfg: ScheduleConfig, c: int, actions: int) -> bool:
    """alpha_c * exp(2D/tau_c) <= 1/actions, evaluated in the log domain."""
    if c < 1:
        return False
    d = _require_bound(cfg)
    return math.log(alpha(cfg, c)) + 2.0 * d / tau(cfg, c) <= -math.log(actions)


def _gap_peak(cfg: ScheduleConfig) -> Optional[float]:
    """log c of the interior local maximum of the ToEpsilon gap, if there is one.

    With u = (tau_bar - epsilon)/c the gap is stationary where
    rho_alpha (epsilon + u)^2 = 2 D u; the smaller root is the maximum.
    """
    if cfg.mode != ScheduleMode.TO_EPSILON or not cfg.epsilon > 0:
        return None
    spread = cfg.tau_bar - cfg.epsilon
    if not spread > 0:
        return None
    d, a, e = _require_bound(cfg), cfg.rho_alpha, cfg.epsilon
    disc = (d - a * e) ** 2 - (a * e) ** 2
    if disc < 0 or d <= a * e:
        return None
    u_big = ((d - a * e) + math.sqrt(disc)) / a
    u_small = e * e / u_big  # product of the roots is epsilon^2
    peak = math.log(spread / u_small)
    return peak if peak > 0 else None


def prop2_threshold(cfg: ScheduleConfig, n1: int, n2: int, cap: Optional[int] = None) -> int:
    """Smallest counter C_s from which alpha_c exp(2D/tau_c) < min(1/n1, 1/n2)
    for every later counter.

    The product is non-increasing in c for ToZero and MaxEpsilon. ToEpsilon
    can dip below the bound early and rise again as tau_c settles at epsilon,
    so its search starts from the last local maximum. The search gallops and
    bisects on log c; beyond double precision the returned counter is the
    first integer above the bisected boundary rather than the exact minimum.
    """
    actions = max(n1, n2)

    def holds(c: int) -> bool:
        return _prop2_gap(cfg, math.log(c), actions) < 0

    low = 0.0
    peak = _gap_peak(cfg)
    if peak is not None and _prop2_gap(cfg, peak, actions) >= 0:
        low = peak
    elif holds(1):
        return 1

    step = 1.0
    high = low + step
    while _prop2_gap(cfg, high, actions) >= 0:
        low, step = high, 2.0 * step
        high = low + step
        if high > MAX_LOG_COUNT:
            raise ScheduleError(
                f"no finite clamp threshold for {cfg.mode.value} "
                f"with {actions} actions"
            )
    for _ in range(200):
        mid = 0.5 * (low + high)
        if _prop2_gap(cfg, mid, actions) < 0:
            high = mid
        else:
            low = mid

    if high <= EXACT_LOG_LIMIT:
        c = max(1, int(math.exp(low)) - 2)
        while not holds(c):
            c += 1
    else:
        c = int(Decimal(high).exp()) + 1

    if cap is not None and c > cap:
        raise ScheduleError(
            f"clamp threshold log C_s = {math.log(c):.4g} exceeds cap {cap}"
        )
    logger.debug(f"Clamp threshold for {actions} actions: log C_s = {math.log(c):.4f}")
    return c


def assumption_polynomial(cfg: ScheduleConfig, M: float) -> Tuple[float, int]:
    """Coefficients (M_o, m) of the polynomial C(x) = M_o x^m that certifies
    the lag condition on the step sizes for the given M in (0, 1)."""
    if not 0 < M < 1:
        raise ScheduleError(f"M must lie in (0, 1), got {M}")
    spread = cfg.rho_beta - cfg.rho_alpha
    if not spread > 0:
        raise ScheduleError("need rho_beta > rho_alpha")
    m = max(1, math.ceil(1.0 / spread - 1e-12))
    return M ** (-cfg.rho_beta / spread), m


def check_lag_condition(cfg: ScheduleConfig, M: float, lam: float, c: int) -> bool:
    """max{l <= c : beta_l / alpha_c > lam} <= M c (vacuous when the set is empty)."""
    _check_count(c)
    threshold = lam * alpha(cfg, c)
    bound = threshold ** (-1.0 / cfg.rho_beta)
    largest = min(c, max(0, math.ceil(bound) - 1))
    while largest < c and beta(cfg, largest + 1) > threshold:
        largest += 1
    while largest >= 1 and not beta(cfg, largest) > threshold:
        largest -= 1
    return largest == 0 or largest <= M * c
