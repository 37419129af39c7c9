"""Exact and asymptotic calculators for P(m, n, p, q) = Pr(Y >= X).

``X ~ Binom(m, max(p, q))`` and ``Y ~ Binom(n, min(p, q))``. ``n * P(n, p, q) -> 0``
is the exact-recovery threshold of the planted bisection model; the explicit
sparse, dense and weak statistics below are its closed-form proxies.

Everything is computed in natural-log space: P routinely drops below 1e-300.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp, xlog1py, xlogy
from scipy.stats import norm

SPARSE_CUTOFF = 128.0  # np <= 128 ln n is tagged sparse
TRIVIAL_LOW, TRIVIAL_HIGH = 1.0 / 3.0, 2.0 / 3.0


@dataclass(frozen=True)
class CrossingProb:
    """A probability carried by its natural log (``-inf`` allowed)."""

    log_value: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value) if self.log_value > -math.inf else 0.0

    def __float__(self):
        return self.value


def _check_prob(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")


def binom_logpmf(n: int, p: float) -> np.ndarray:
    """``log Pr(Binom(n, p) = k)`` for ``k = 0..n`` via log-gamma (0 log 0 = 0)."""
    k = np.arange(n + 1, dtype=np.float64)
    log_choose = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    with np.errstate(divide="ignore"):
        return log_choose + xlogy(k, p) + xlog1py(n - k, -p)


def log_survival(logpmf: np.ndarray, length: Optional[int] = None) -> np.ndarray:
    """``log Pr(Y >= k)`` for ``k = 0..length-1``, accumulated from the far tail inward.

    Entries past the support are ``-inf``.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        surv = np.logaddexp.accumulate(logpmf[::-1])[::-1]
    surv = np.minimum(surv, 0.0)
    if length is None:
        return surv
    out = np.full(length, -np.inf)
    take = min(length, surv.size)
    out[:take] = surv[:take]
    return out


def _log_crossing(m: int, n: int, p: float, q: float, ell: int) -> float:
    hi, lo = max(p, q), min(p, q)
    log_px = binom_logpmf(m, hi)
    log_sy = log_survival(binom_logpmf(n, lo))
    # Pr(Y >= k - ell) for k = 0..m
    idx = np.arange(m + 1) - ell
    terms = np.full(m + 1, -np.inf)
    below = idx <= 0
    terms[below] = log_px[below]
    inside = (~below) & (idx <= n)
    terms[inside] = log_px[inside] + log_sy[idx[inside]]
    with np.errstate(divide="ignore"):
        val = float(logsumexp(terms))
    return min(val, 0.0)


def exact_P(m: int, n: int, p: float, q: float) -> CrossingProb:
    """``Pr(Y >= X)``, ``X ~ Binom(m, max(p,q))``, ``Y ~ Binom(n, min(p,q))``, exactly.

    O(m + n): one pmf sweep for X and one suffix log-sum-exp for Y's survival.
    """
    if m < 0 or n < 0:
        raise ValueError(f"m and n must be nonnegative, got m={m}, n={n}")
    _check_prob("p", p)
    _check_prob("q", q)
    return CrossingProb(_log_crossing(int(m), int(n), p, q, 0))


def perturbed_P(m: int, n: int, p: float, q: float, ell: int) -> CrossingProb:
    """``Pr(Y >= X - ell)``; a negative ``ell`` gives ``Pr(Y >= X + |ell|)``."""
    if m < 0 or n < 0:
        raise ValueError(f"m and n must be nonnegative, got m={m}, n={n}")
    _check_prob("p", p)
    _check_prob("q", q)
    return CrossingProb(_log_crossing(int(m), int(n), p, q, int(ell)))


# ---------------------------------------------------------------------------
# explicit criteria


def sparse_criterion(a: float, b: float, n: int) -> float:
    """``(a + b - 2 sqrt(ab) - 1) ln n + 0.5 ln ln n``; exact recovery iff it diverges to +inf."""
    if a <= 0 or b <= 0:
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if n < 3:
        raise ValueError("n must be at least 3 so that ln ln n is defined and positive")
    log_n = math.log(n)
    return (a + b - 2.0 * math.sqrt(a * b) - 1.0) * log_n + 0.5 * math.log(log_n)


def sigma_n(p: float, q: float) -> float:
    return math.sqrt(p * (1.0 - p) + q * (1.0 - q))


@dataclass(frozen=True)
class DenseCriterion:
    """Dense-regime statistic and its Gaussian-tail companion (both with logs).

    ``value = sqrt(n) sigma / |p - q| * exp(-n (p - q)^2 / (2 sigma^2))``;
    ``gaussian_tail = n * Pr(N(0,1) >= sqrt(n) |p - q| / sigma)``.
    ``degenerate`` is set when ``p == q`` (both reported as +inf).
    """

    value: float
    log_value: float
    gaussian_tail: float
    log_gaussian_tail: float
    degenerate: bool = False


def dense_criterion(n: int, p: float, q: float) -> DenseCriterion:
    gap = abs(p - q)
    sig = sigma_n(p, q)
    if gap == 0.0:
        return DenseCriterion(math.inf, math.inf, math.inf, math.inf, degenerate=True)
    if sig == 0.0:
        # p, q in {0, 1} and distinct: no noise, the statistic is exactly 0
        return DenseCriterion(0.0, -math.inf, 0.0, -math.inf)
    log_value = 0.5 * math.log(n) + math.log(sig) - math.log(gap) - n * gap**2 / (2.0 * sig**2)
    z = math.sqrt(n) * gap / sig
    log_tail = math.log(n) + float(norm.logsf(z))
    return DenseCriterion(
        value=math.exp(log_value),
        log_value=log_value,
        gaussian_tail=math.exp(log_tail),
        log_gaussian_tail=log_tail,
    )


def weak_criterion(n: int, p: float, q: float) -> float:
    """``n (p - q)^2 / (p + q)``; almost-exact recovery iff it diverges."""
    if p + q <= 0:
        raise ValueError("weak criterion undefined for p = q = 0")
    return n * (p - q) ** 2 / (p + q)


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class ThresholdReport:
    n: int
    p: float
    q: float
    exact_log_nP: float
    sparse_stat: Optional[float]
    dense_stat: Optional[float]
    weak_stat: Optional[float]
    a: float
    b: float
    sigma: float
    regime: str
    hypothesis_unmet: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def classify_regime(n: int, p: float, q: float) -> str:
    """Deterministic regime tag: degenerate, trivial, sparse or dense."""
    hi, lo = max(p, q), min(p, q)
    if p == q:
        return "degenerate"
    if lo <= TRIVIAL_LOW and hi >= TRIVIAL_HIGH:
        return "trivial"
    if n * hi <= SPARSE_CUTOFF * math.log(n):
        return "sparse"
    return "dense"


def _hypothesis_unmet(regime: str, n: int, p: float, q: float) -> bool:
    hi, lo = max(p, q), min(p, q)
    log_n = math.log(n)
    if regime == "sparse":
        return n * hi < 0.5 * log_n or lo <= 0.0
    if regime == "dense":
        # the dense equivalence needs p, q = omega(ln^3 n / n) and p, q <= 2/3
        return n * lo <= log_n**3 or hi > TRIVIAL_HIGH
    return False


def report(n: int, p: float, q: float) -> ThresholdReport:
    _check_prob("p", p)
    _check_prob("q", q)
    if n < 2:
        raise ValueError("n must be at least 2")
    log_n = math.log(n)
    a = n * p / log_n
    b = n * q / log_n
    sparse = sparse_criterion(a, b, n) if a > 0 and b > 0 and n >= 3 else None
    dense = dense_criterion(n, p, q)
    regime = classify_regime(n, p, q)
    return ThresholdReport(
        n=n,
        p=p,
        q=q,
        exact_log_nP=log_n + exact_P(n, n, p, q).log_value,
        sparse_stat=sparse,
        dense_stat=None if dense.degenerate else dense.value,
        weak_stat=weak_criterion(n, p, q) if p + q > 0 else None,
        a=a,
        b=b,
        sigma=sigma_n(p, q),
        regime=regime,
        hypothesis_unmet=_hypothesis_unmet(regime, n, p, q),
    )


# ---------------------------------------------------------------------------
# asymptotic approximations


def lclt_pmf(n: int, q: float, k) -> np.ndarray | float:
    """Normal-density approximation ``phi((k - nq) / (sqrt(n) s)) / (sqrt(n) s)``, ``s^2 = q(1-q)``."""
    if not (0.0 < q < 1.0):
        raise ValueError("lclt_pmf needs 0 < q < 1")
    scale = math.sqrt(n * q * (1.0 - q))
    out = norm.pdf((np.asarray(k, dtype=np.float64) - n * q) / scale) / scale
    return float(out) if np.ndim(out) == 0 else out


def log_poisson_sum_pmf(n: int, a: float, b: float, k) -> np.ndarray | float:
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    c = a + b
    lam = c * math.log(n)
    k = np.asarray(k, dtype=np.float64)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    out = -c * math.log(n) + k * math.log(lam) - gammaln(k + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def poisson_sum_pmf(n: int, a: float, b: float, k) -> np.ndarray | float:
    """Poisson stand-in ``n^-c (c ln n)^k / k!``, ``c = a + b``, for ``Pr(X + Y = k)``.

    ``X ~ Binom(n, a ln n / n)`` and ``Y ~ Binom(n, b ln n / n)``.
    """
    return np.exp(log_poisson_sum_pmf(n, a, b, k))


def exact_sum_pmf(n: int, a: float, b: float) -> np.ndarray:
    """``Pr(X + Y = k)`` for ``k = 0..2n`` by direct convolution of the binomial pmfs."""
    scale = math.log(n) / n
    px = np.exp(binom_logpmf(n, a * scale))
    py = np.exp(binom_logpmf(n, b * scale))
    return np.convolve(px, py)


def log_pmf_ratio(m: int, p: float, k, ell) -> np.ndarray | float:
    """Exact ``log(Pr(X = k + ell) / Pr(X = k))`` for ``X ~ Binom(m, p)``, ``0 < p < 1``."""
    k = np.asarray(k, dtype=np.float64)
    ell = np.asarray(ell, dtype=np.float64)
    # paired differences vanish exactly at ell = 0
    out = (
        (gammaln(k + 1.0) - gammaln(k + ell + 1.0))
        + (gammaln(m - k + 1.0) - gammaln(m - k - ell + 1.0))
        + ell * (math.log(p) - math.log1p(-p))
    )
    return float(out) if np.ndim(out) == 0 else out


def _check_ratio_args(m: int, k, ell) -> None:
    k = np.asarray(k)
    ell = np.asarray(ell)
    if np.any(k < 0) or np.any(ell < 0) or np.any(k + ell > m):
        raise ValueError("need 0 <= k and k + ell <= m")


def ratio_bound(m: int, p: float, k, ell) -> np.ndarray | float:
    """Upper bound ``ell ln(mp / (k+1)) + ell ln((m - k) / (m - mp))`` on :func:`log_pmf_ratio`."""
    _check_ratio_args(m, k, ell)
    k = np.asarray(k, dtype=np.float64)
    ell = np.asarray(ell, dtype=np.float64)
    mp = m * p
    # tight (equal to the exact ratio) at ell = 1; ell = 0 at k = m gives 0 * -inf, masked below
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ell * np.log(mp / (k + 1.0)) + ell * np.log((m - k) / (m - mp))
    out = np.where(ell == 0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def ratio_bound_sparse(m: int, p: float, k, ell) -> np.ndarray | float:
    """Sparse-regime bound ``ell ln(mp / ell) + 2 ell``; requires ``mp <= 128 ln m``."""
    _check_ratio_args(m, k, ell)
    if m * p > SPARSE_CUTOFF * math.log(m):
        raise ValueError("ratio_bound_sparse requires mp <= 128 ln m")
    ell = np.asarray(ell, dtype=np.float64)
    safe = np.where(ell > 0, ell, 1.0)
    with np.errstate(divide="ignore"):
        out = np.where(ell > 0, ell * np.log(m * p / safe) + 2.0 * ell, 0.0)
    out = out + 0.0 * np.asarray(k, dtype=np.float64)
    return float(out) if np.ndim(out) == 0 else out
