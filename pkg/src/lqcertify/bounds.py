"""Coherence-based recovery bounds for the noise-aware l_q model.

All constants are functions of the mutual coherence ``M``, the sparsity
``N`` of the ideal signal and, for ``q < 1``, the error-spread parameter
``gamma`` defined through

    (gamma N)^(1/q - 1) ||e||_1 <= ||e||_q.

At ``q = 1`` every gamma dependence cancels and the formulas reduce to the
classical l_1 constant ``sqrt(1 / (1 - M(4N - 1)))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import DomainError, NotApplicableError, _as_finite_vector, _check_q

GAMMA_TIE_TOL = 1e-12


def _check_coherence(M: float) -> float:
    M = float(M)
    if not (0.0 <= M <= 1.0):
        raise DomainError(f"mutual coherence must lie in [0, 1], got {M}")
    return M


def _check_sparsity(N) -> int:
    if int(N) != N or N < 1:
        raise DomainError(f"sparsity N must be a positive integer, got {N}")
    return int(N)


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (gamma > 0 and math.isfinite(gamma)):
        raise DomainError(f"gamma must be a positive real, got {gamma}")
    return gamma


def gamma_of_error(e, q: float, N: int) -> float:
    """Tight gamma for an error vector: ``(||e||_q / ||e||_1)^(q/(1-q)) / N``.

    Computed in log space, so small ``q`` does not overflow. The result lies
    in ``[1/N, n/N]``.
    """
    q = _check_q(q)
    if q == 1.0:
        raise DomainError("gamma is only defined for q < 1; it cancels at q = 1")
    N = _check_sparsity(N)
    a = np.abs(_as_finite_vector(e, "e"))
    a = a[a > 0]
    if a.size == 0:
        raise NotApplicableError("zero error vector: recovery is exact, gamma is undefined")
    # normalize by the largest entry so that a**q cannot overflow or underflow
    top = float(np.max(a))
    r = a / top
    log_lq = math.log(float(np.sum(r**q))) / q
    log_l1 = math.log(float(np.sum(r)))
    log_gn = (q / (1.0 - q)) * (log_lq - log_l1)
    gamma = math.exp(log_gn) / N
    n = np.asarray(e).size
    lo, hi = 1.0 / N, n / N
    # snap rounding excursions at the extremes (single spike, flat vector)
    if lo * (1 - 1e-9) <= gamma < lo:
        gamma = lo
    elif hi < gamma <= hi * (1 + 1e-9):
        gamma = hi
    return float(gamma)


def sparsity_threshold(q: float, M: float, gamma: float) -> float:
    """Largest admissible sparsity (exclusive): ``gamma^(2/q-2) (M+1) / (4^(1/q) M)``."""
    q = _check_q(q)
    M = _check_coherence(M)
    gamma = _check_gamma(gamma)
    if M == 0.0:
        return math.inf
    return gamma ** (2.0 / q - 2.0) * (M + 1.0) / (4.0 ** (1.0 / q) * M)


def bound_denominator(q: float, M: float, N: int, gamma: float) -> float:
    """``1 - M (4^(1/q) N / gamma^(2/q-2) - 1)``; positive iff admissible."""
    return 1.0 - M * (4.0 ** (1.0 / q) * N / gamma ** (2.0 / q - 2.0) - 1.0)


@dataclass(frozen=True)
class BoundCertificate:
    q: float
    M: float
    N: int
    gamma: float
    threshold: float
    admissible: bool
    c_constant: Optional[float] = None
    bound_value: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["threshold"]):
            d["threshold"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoundCertificate":
        d = dict(d)
        if d.get("threshold") == "inf":
            d["threshold"] = math.inf
        return cls(**d)


def cq_constant(
    q: float,
    M: float,
    N: int,
    gamma: float,
    epsilon: float = 0.0,
    sigma: float = 0.0,
) -> BoundCertificate:
    """Certificate for ``||x* - x0||_2 <= C_q(M, N, gamma) (epsilon + sigma)``.

    When the denominator is not positive the sparsity condition fails and
    the certificate carries no constant.
    """
    q = _check_q(q)
    M = _check_coherence(M)
    N = _check_sparsity(N)
    gamma = _check_gamma(gamma)
    if epsilon < 0 or sigma < 0:
        raise DomainError("epsilon and sigma must be nonnegative")
    if sigma < epsilon:
        warnings.warn(
            f"sigma={sigma} < epsilon={epsilon}: the bound assumes sigma >= epsilon",
            RuntimeWarning,
            stacklevel=2,
        )
    threshold = sparsity_threshold(q, M, gamma)
    den = bound_denominator(q, M, N, gamma)
    admissible = den > 0.0
    if not admissible:
        return BoundCertificate(q, M, N, gamma, threshold, False)
    c = math.sqrt(1.0 / den)
    return BoundCertificate(q, M, N, gamma, threshold, True, c, c * (epsilon + sigma))


def a_priori_certificate(q: float, M: float, N: int, epsilon: float = 0.0, sigma: float = 0.0):
    """Most pessimistic certificate, taking the smallest possible gamma = 1/N."""
    return cq_constant(q, M, N, 1.0 / _check_sparsity(N), epsilon, sigma)


def donoho_c0(M: float, N: int) -> Optional[float]:
    """l_0 constant ``sqrt(1/(1 - M(2N-1)))``; None when ``N >= (1/M + 1)/2``."""
    M = _check_coherence(M)
    N = _check_sparsity(N)
    den = 1.0 - M * (2 * N - 1)
    return math.sqrt(1.0 / den) if den > 0 else None


def donoho_c1(M: float, N: int) -> Optional[float]:
    """l_1 constant ``sqrt(1/(1 - M(4N-1)))``; None when ``N >= (1/M + 1)/4``."""
    M = _check_coherence(M)
    N = _check_sparsity(N)
    den = 1.0 - M * (4 * N - 1)
    return math.sqrt(1.0 / den) if den > 0 else None


@dataclass(frozen=True)
class ModelComparison:
    q: float
    M: float
    N: int
    gamma: float
    regime: str
    c_q: Optional[float]
    c_1: Optional[float]
    threshold_q: float
    threshold_1: float
    smaller_bound: str
    larger_threshold: str

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("threshold_q", "threshold_1"):
            if math.isinf(d[k]):
                d[k] = "inf"
        return d

    @property
    def summary(self) -> str:
        if self.smaller_bound == "equal" and self.larger_threshold == "equal":
            return "equal bounds, equal thresholds"
        return (
            f"{self.smaller_bound} has the smaller bound, "
            f"{self.larger_threshold} has the larger sparsity threshold"
        )


def _pick(a: float, b: float, smaller: bool, tie: bool) -> str:
    if tie or a == b:
        return "equal"
    if smaller:
        return "lq" if a < b else "l1"
    return "lq" if a > b else "l1"


def compare_models(q: float, M: float, N: int, gamma: float) -> ModelComparison:
    """Compare the l_q (q<1) and l_1 bound constants and sparsity thresholds.

    An inadmissible constant counts as infinite. ``|gamma - 2| <= 1e-12`` is
    treated as the tie case, where both models coincide exactly.
    """
    q = _check_q(q)
    if q == 1.0:
        raise DomainError("compare_models needs q < 1")
    M = _check_coherence(M)
    N = _check_sparsity(N)
    gamma = _check_gamma(gamma)
    tie = abs(gamma - 2.0) <= GAMMA_TIE_TOL
    regime = "gamma=2" if tie else ("gamma>2" if gamma > 2 else "gamma<2")
    cert_q = cq_constant(q, M, N, gamma)
    cert_1 = cq_constant(1.0, M, N, gamma)
    cq = cert_q.c_constant if cert_q.admissible else math.inf
    c1 = cert_1.c_constant if cert_1.admissible else math.inf
    return ModelComparison(
        q=q,
        M=M,
        N=N,
        gamma=gamma,
        regime=regime,
        c_q=cert_q.c_constant,
        c_1=cert_1.c_constant,
        threshold_q=cert_q.threshold,
        threshold_1=cert_1.threshold,
        smaller_bound=_pick(cq, c1, True, tie),
        larger_threshold=_pick(cert_q.threshold, cert_1.threshold, False, tie),
    )


def gamma_upper_bound_qhalf(e, N: int) -> float:
    """``sum_j |e_j|^(1/2) / (N max_i |e_i|^(1/2))``.

    The q = 1/2 regime gamma > 2 is attainable for ``e`` only when this
    exceeds 2.
    """
    N = _check_sparsity(N)
    r = np.sqrt(np.abs(_as_finite_vector(e, "e")))
    top = float(np.max(r)) if r.size else 0.0
    if top == 0.0:
        raise NotApplicableError("zero error vector")
    return float(np.sum(r)) / (N * top)
