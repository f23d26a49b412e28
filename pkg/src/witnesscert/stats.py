"""Concentration bounds for the witness game.

Everything that touches binomial tails works with logarithms so that
p-values far below the double-precision range of linear arithmetic stay
representable.  ``F_{n,beta}(k)`` is the binomial survival function
``Pr[Bin(n, beta) >= k]`` and ``F°`` its log-linear interpolation between
integers (with ``0**0 = 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DataIntegrityError, DomainError, InconsistentModelError

SCORE_SLACK = 1e-12
LOG_E = 1.0


def _check_n(n) -> int:
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _check_beta(beta) -> float:
    beta = float(beta)
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta!r}")
    return beta


def _log_sf_table(n: int, beta: float) -> np.ndarray:
    """log F_{n,beta}(k) for k = 0..n+1."""
    ell = np.arange(n + 1, dtype=float)
    logpmf = gammaln(n + 1.0) - gammaln(ell + 1.0) - gammaln(n - ell + 1.0) + xlogy(ell, beta) + xlog1py(n - ell, -beta)
    tail = np.logaddexp.accumulate(logpmf[::-1])[::-1]
    tail[0] = 0.0
    tail = np.minimum(tail, 0.0)
    return np.append(tail, -np.inf)


@lru_cache(maxsize=64)
def _cached_table(n: int, beta: float) -> np.ndarray:
    t = _log_sf_table(n, beta)
    t.setflags(write=False)
    return t


def log_binom_survival(n: int, beta: float, k: int) -> float:
    n, beta = _check_n(n), _check_beta(beta)
    if int(k) != k or not 0 <= k <= n + 1:
        raise DomainError(f"k must be an integer in [0, {n + 1}], got {k!r}")
    return float(_cached_table(n, beta)[int(k)])


def binom_survival(n: int, beta: float, k: int) -> float:
    """Pr[Bin(n, beta) >= k], accurate far into the tail."""
    return math.exp(log_binom_survival(n, beta, k))


def _log_f_circ_from_table(table: np.ndarray, n: int, x: float) -> float:
    k = math.floor(x)
    frac = x - k
    if frac == 0.0:
        return float(table[k])
    lo, hi = table[k], table[k + 1]
    if hi == -np.inf:
        return -math.inf
    return float((1.0 - frac) * lo + frac * hi)


def log_f_circ(n: int, beta: float, x: float) -> float:
    n, beta = _check_n(n), _check_beta(beta)
    x = float(x)
    if not 0.0 <= x <= n + 1:
        raise DomainError(f"x must lie in [0, {n + 1}], got {x!r}")
    return _log_f_circ_from_table(_cached_table(n, beta), n, x)


def f_circ(n: int, beta: float, x: float) -> float:
    """Log-linear interpolation F(k)^(1-r) F(k+1)^r with k = floor(x), r = x - k."""
    return math.exp(log_f_circ(n, beta, x))


def beta_param(c: float, gamma: float, s_min: float, delta_s: float) -> float:
    """min(1, (c + gamma - s_min) / Delta s).

    Raises
    ------
    InconsistentModelError
        If the ratio is negative, which no valid witness model allows.
    """
    if not delta_s > 0:
        raise DomainError("delta_s must be positive")
    if gamma < 0:
        raise DomainError("gamma must be non-negative")
    b = (c + gamma - s_min) / delta_s
    if b < 0:
        raise InconsistentModelError(
            f"c + gamma - s_min = {c + gamma - s_min:.6g} < 0; the decomposition cannot be a witness"
        )
    return min(1.0, b)


def _check_t(t_n: float, n: int) -> float:
    t = float(t_n)
    slack = 1e-9 * max(1, n)
    if not -slack <= t <= n + slack:
        raise DomainError(f"t_n = {t!r} outside [0, {n}]")
    return min(max(t, 0.0), float(n))


def log_p_value_bound(t_n: float, n: int, beta: float) -> float:
    n = _check_n(n)
    return LOG_E + log_f_circ(n, beta, _check_t(t_n, n))


def p_value_bound(t_n: float, n: int, beta: float) -> float:
    """e F°_{n,beta}(t_n); at most e, values above 1 are returned unclamped."""
    return math.exp(log_p_value_bound(t_n, n, beta))


def total_normalized_score(scores: Sequence[float], s_min: float, delta_s: float) -> float:
    """sum_i (s_i - s_min) / Delta s; every score must lie in [s_min, s_min + Delta s]."""
    s = np.asarray(scores, dtype=float)
    if not delta_s > 0:
        raise DomainError("delta_s must be positive")
    slack = SCORE_SLACK * max(1.0, abs(s_min), delta_s)
    if s.size and (s.min() < s_min - slack or s.max() > s_min + delta_s + slack):
        bad = int(np.argmax((s < s_min - slack) | (s > s_min + delta_s + slack)))
        raise DataIntegrityError(f"score {s[bad]!r} at round {bad} outside [{s_min}, {s_min + delta_s}]")
    t = math.fsum((s - s_min) / delta_s)
    return min(max(t, 0.0), float(s.size))


def witness_estimate(scores: Sequence[float], c: float) -> float:
    """c minus the mean score."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise DomainError("no scores")
    return c - math.fsum(s) / s.size


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    return alpha


@lru_cache(maxsize=256)
def _radius_cached(n: int, alpha: float, gamma: float, delta_s: float) -> float:
    log_alpha = math.log(alpha)
    if log_alpha < LOG_E - n * math.log(2.0):
        return delta_s
    table = _cached_table(n, 0.5)
    target = log_alpha - LOG_E
    half = n / 2.0

    def phi(x):
        return _log_f_circ_from_table(table, n, x)

    # Bisection over unit segments of [n/2, n]; phi is strictly decreasing there.
    lo, hi = half, float(n)
    while hi - lo > 1.0:
        mid = math.floor((lo + hi) / 2.0)
        if mid <= lo:
            mid = (lo + hi) / 2.0
        if phi(mid) >= target:
            lo = float(mid)
        else:
            hi = float(mid)
    # phi is linear on [lo, hi] up to at most one integer breakpoint.
    k = math.floor(lo)
    if lo < k + 1 < hi:
        if phi(k + 1) >= target:
            lo = float(k + 1)
        else:
            hi = float(k + 1)
    f_lo, f_hi = phi(lo), phi(hi)
    if f_lo == f_hi:
        x = lo
    else:
        x = lo + (f_lo - target) / (f_lo - f_hi) * (hi - lo)
    x = min(max(x, lo), hi)
    return gamma + delta_s * (2.0 * x / n - 1.0)


def confidence_radius(n: int, alpha: float, gamma: float, delta_s: float) -> float:
    """Radius epsilon with alpha = e F°_{n,1/2}(n/2 (1 + (epsilon - gamma)/Delta s)).

    Returns Delta s when alpha < e 2^-n.  Otherwise the root lies in
    [gamma, gamma + Delta s]; the segment of F° containing it is found by
    bisection and the root is then solved in closed form, since log F° is
    linear on each segment.
    """
    n = _check_n(n)
    alpha = _check_alpha(alpha)
    if gamma < 0:
        raise DomainError("gamma must be non-negative")
    if not delta_s > 0:
        raise DomainError("delta_s must be positive")
    return _radius_cached(n, alpha, float(gamma), float(delta_s))


def radius_residual(n: int, alpha: float, gamma: float, delta_s: float, epsilon: float) -> float:
    """Relative mismatch |e F°(x(epsilon)) - alpha| / alpha."""
    x = n / 2.0 * (1.0 + (epsilon - gamma) / delta_s)
    return abs(math.exp(LOG_E + log_f_circ(n, 0.5, x)) - alpha) / alpha


def hoeffding_p_bound(t_n: float, n: int, beta: float) -> float:
    """exp(-2 max(t_n - n beta, 0)^2 / n)."""
    n = _check_n(n)
    t = _check_t(t_n, n)
    d = max(t - n * _check_beta(beta), 0.0)
    return math.exp(-2.0 * d * d / n)


def hoeffding_radius(n: int, alpha: float, gamma: float, delta_s: float) -> float:
    """gamma + Delta s sqrt(2 ln(1/alpha) / n)."""
    n = _check_n(n)
    alpha = _check_alpha(alpha)
    return gamma + delta_s * math.sqrt(2.0 * math.log(1.0 / alpha) / n)


def running_p_bounds(
    scores: Sequence[float], c: float, gamma: float, s_min: float, delta_s: float
) -> np.ndarray:
    """p-value bound after each prefix of the score stream.

    Diagnostic only: stopping when the curve first dips below alpha is not a
    valid test, since all parameters must be fixed before data are taken.
    """
    s = np.asarray(scores, dtype=float)
    total_normalized_score(s, s_min, delta_s)
    beta = beta_param(c, gamma, s_min, delta_s)
    t = np.clip(np.cumsum((s - s_min) / delta_s), 0.0, None)
    out = np.empty(s.size)
    for i in range(s.size):
        n = i + 1
        table = _log_sf_table(n, beta)
        out[i] = math.exp(LOG_E + _log_f_circ_from_table(table, n, min(t[i], float(n))))
    return out


@dataclass(frozen=True)
class RejectionResult:
    t_n: float
    beta: float
    p_bound: float
    n: int
    alpha: float
    method: str = "bentkus"

    @property
    def rejected(self) -> bool:
        return self.p_bound <= self.alpha

    def as_dict(self) -> dict:
        return {
            "t_n": self.t_n,
            "n": self.n,
            "beta": self.beta,
            "p_bound": self.p_bound,
            "alpha": self.alpha,
            "rejected": self.rejected,
            "method": self.method,
        }


@dataclass(frozen=True)
class EstimationResult:
    w_hat: float
    epsilon: float
    alpha: float
    n: int
    method: str = "bentkus"

    @property
    def two_sided(self) -> tuple[float, float]:
        return (self.w_hat - self.epsilon, self.w_hat + self.epsilon)

    @property
    def one_sided_upper(self) -> float:
        return self.w_hat + self.epsilon

    def as_dict(self) -> dict:
        lo, hi = self.two_sided
        return {
            "w_hat": self.w_hat,
            "epsilon": self.epsilon,
            "interval": [lo, hi],
            "one_sided_upper": self.one_sided_upper,
            "alpha": self.alpha,
            "n": self.n,
            "method": self.method,
        }


_METHODS = ("bentkus", "hoeffding")


def rejection_test(
    scores: Sequence[float],
    c: float,
    gamma: float,
    s_min: float,
    delta_s: float,
    alpha: float = 0.05,
    method: str = "bentkus",
) -> RejectionResult:
    """Test the null hypothesis that every round's state was separable."""
    if method not in _METHODS:
        raise DomainError(f"unknown method {method!r}")
    alpha = _check_alpha(alpha)
    n = _check_n(len(scores))
    t = total_normalized_score(scores, s_min, delta_s)
    beta = beta_param(c, gamma, s_min, delta_s)
    p = p_value_bound(t, n, beta) if method == "bentkus" else hoeffding_p_bound(t, n, beta)
    return RejectionResult(t_n=t, beta=beta, p_bound=p, n=n, alpha=alpha, method=method)


def estimation(
    scores: Sequence[float],
    c: float,
    gamma: float,
    delta_s: float,
    alpha: float = 0.05,
    method: str = "bentkus",
) -> EstimationResult:
    """Point estimate and confidence radius for the average witness value."""
    if method not in _METHODS:
        raise DomainError(f"unknown method {method!r}")
    n = _check_n(len(scores))
    radius = confidence_radius if method == "bentkus" else hoeffding_radius
    return EstimationResult(
        w_hat=witness_estimate(scores, c),
        epsilon=radius(n, alpha, gamma, delta_s),
        alpha=_check_alpha(alpha),
        n=n,
        method=method,
    )
