"""Numerical audit of the recovery-bound argument on concrete instances.

Every link is stored in the form ``lhs <= rhs``; the margin
``(rhs - lhs) / max(1, |rhs|)`` is scale free and a link passes when the
margin is at least ``-slack``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .bounds import bound_denominator, gamma_of_error
from .core import (
    Dictionary,
    InputError,
    LqCertifyError,
    SparseSignal,
    _check_q,
    l1_norm,
    l2_norm,
    lq_quasinorm,
    mutual_coherence,
)
from .solvers import RecoveryResult

LINK_SLACK = 1e-10


class RefusedAudit(LqCertifyError):
    pass


@dataclass(frozen=True)
class LinkResult:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, "pass": self.passed}


def _link(name, lhs, rhs, slack=LINK_SLACK) -> LinkResult:
    lhs, rhs = float(lhs), float(rhs)
    if math.isinf(rhs) and rhs > 0:
        return LinkResult(name, lhs, rhs, math.inf, True)
    margin = (rhs - lhs) / max(1.0, abs(rhs))
    return LinkResult(name, lhs, rhs, margin, bool(margin >= -slack))


@dataclass(frozen=True)
class ChainTrace:
    V_S: float
    V_Sc: float
    eta_S: float
    eta_Sc: float
    tau: float
    mu: float
    Sigma: float
    gamma: Optional[float]
    q: float
    N: int
    M: float
    link_results: list = field(default_factory=list)
    normalized_regime: bool = True

    @property
    def all_pass(self) -> bool:
        return all(l.passed for l in self.link_results)

    def link(self, name) -> LinkResult:
        for l in self.link_results:
            if l.name == name:
                return l
        raise KeyError(name)

    def failed(self) -> list:
        return [l.name for l in self.link_results if not l.passed]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["link_results"] = [l.to_dict() for l in self.link_results]
        d["all_pass"] = self.all_pass
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return d


def check_lemma2(a: float, b: float, q: float) -> tuple:
    """``|a+b|^q + |b|^q >= |a|^q``; returns ``(passed, lhs, rhs)``."""
    q = _check_q(q)
    lhs = abs(a + b) ** q + abs(b) ** q
    rhs = abs(a) ** q
    return lhs >= rhs - 1e-12 * max(1.0, rhs), lhs, rhs


def check_active_constraint(result: RecoveryResult, sigma: float, tol: float = 1e-6,
                            y=None):
    """Is the residual on the boundary ``||Ax - y|| = sigma``?

    Returns True/False, or None when ``x* = 0`` with ``||y|| <= sigma`` (the
    zero vector is then optimal and the constraint need not be active).
    """
    if not result.diagnostics.converged:
        raise RefusedAudit("refusing to audit an unconverged solve")
    zero_regime = not np.any(result.x_star) and (
        (y is not None and l2_norm(y) <= sigma)
        or (y is None and result.residual <= sigma and not result.diagnostics.active_constraint)
    )
    if zero_regime:
        return None
    return abs(result.residual - sigma) <= tol * max(sigma, 1e-12)


def chain_quantities(e, support, q):
    """``V_S, V_Sc, eta_S, eta_Sc, tau, mu`` for an error vector and support."""
    e = np.asarray(e, dtype=float)
    mask = np.zeros(e.size, dtype=bool)
    mask[np.asarray(support, dtype=int)] = True
    eS, eSc = e[mask], e[~mask]
    VS = float(np.sum(np.abs(eS) ** q))
    VSc = float(np.sum(np.abs(eSc) ** q))
    nan = math.nan
    etaS = l2_norm(eS) ** 2 / lq_quasinorm(eS, q) ** 2 if VS > 0 else nan
    etaSc = l2_norm(eSc) ** 2 / lq_quasinorm(eSc, q) ** 2 if VSc > 0 else nan
    tau = VSc / VS if VS > 0 else (math.inf if VSc > 0 else 0.0)
    if VS > 0:
        off = etaSc * tau ** (2.0 / q) if VSc > 0 else 0.0
        mu = (1.0 + tau) ** (2.0 / q) / (etaS + off)
    else:
        mu = nan
    return VS, VSc, etaS, etaSc, tau, mu


def audit_solution_chain(
    A,
    x0,
    result,
    q: float,
    epsilon: float,
    sigma: float,
    noise=None,
    slack: float = LINK_SLACK,
) -> ChainTrace:
    """Evaluate each inequality of the bound argument for ``e = x* - x0``.

    ``result`` may be a :class:`RecoveryResult` or a plain vector ``x*``.
    When the realized ``noise`` is given, the exact boundary identity
    ``||Ae - w|| = sigma`` is checked as well as its relaxation
    ``||Ae|| <= epsilon + sigma``.
    """
    q = _check_q(q)
    if not isinstance(A, Dictionary):
        A = Dictionary(np.asarray(A, dtype=float))
    if not isinstance(x0, SparseSignal):
        x0 = SparseSignal(np.asarray(x0, dtype=float))
    x_star = result.x_star if isinstance(result, RecoveryResult) else np.asarray(result, float)
    if x_star.shape != (A.n,) or x0.n != A.n:
        raise InputError(f"vectors must have length n={A.n}")
    M = A.coherence if A.n >= 2 else 0.0
    S = x0.support
    N = max(x0.sparsity, 1)
    Sigma = float(epsilon) + float(sigma)
    e = x_star - x0.values

    if not np.any(e):
        links = [_link(name, 0.0, 0.0, slack) for name in (
            "relaxed_feasibility", "objective_split", "support_split", "noise_relaxation",
            "coherence_gram", "coherence_gamma", "eta_S_lower", "eta_S_upper", "eta_Sc_upper",
            "tau_normalized", "mu_lower", "mu_upper", "sigma_constraint", "mu_relaxation",
            "final_bound")]
        return ChainTrace(0.0, 0.0, math.nan, math.nan, 0.0, math.nan, Sigma,
                          None, q, N, M, links, True)

    Ae = A.entries @ e
    e2sq = l2_norm(e) ** 2
    e1 = l1_norm(e)
    eq = lq_quasinorm(e, q)
    gamma = gamma_of_error(e, q, N) if q < 1.0 else None
    # (gamma N)^(2/q - 2); identically 1 at q = 1
    gfac = (gamma * N) ** (2.0 / q - 2.0) if gamma is not None else 1.0
    gamma_eff = gamma if gamma is not None else 1.0

    VS, VSc, etaS, etaSc, tau, mu = chain_quantities(e, S, q)
    obj_star = lq_quasinorm(x_star, q, raised=True)
    obj_0 = lq_quasinorm(x0.values, q, raised=True)

    links = []
    links.append(_link("relaxed_feasibility", obj_star, obj_0, slack))
    # |a+b|^q + |b|^q >= |a|^q per coordinate gives ||x0+e||_q^q - ||x0||_q^q >= V_Sc - V_S
    links.append(_link("objective_split", VSc - VS, obj_star - obj_0, slack))
    links.append(_link("support_split", VS + VSc, 2.0 * VS, slack))
    links.append(_link("noise_relaxation", l2_norm(Ae), Sigma, slack))
    if noise is not None:
        w = np.asarray(noise, dtype=float)
        # equality, recorded as two one-sided links
        links.append(_link("boundary_identity_upper", l2_norm(Ae - w), sigma, slack))
        links.append(_link("boundary_identity_lower", sigma, l2_norm(Ae - w), slack))
    gram_rhs = (1.0 + M) * e2sq - M * e1**2
    links.append(_link("coherence_gram", gram_rhs, l2_norm(Ae) ** 2, slack))
    gamma_rhs = (1.0 + M) * e2sq - M / gfac * eq**2
    links.append(_link("coherence_gamma", gamma_rhs, gram_rhs, slack))

    if VS > 0:
        links.append(_link("eta_S_lower", N ** (1.0 - 2.0 / q), etaS, slack))
        links.append(_link("eta_S_upper", etaS, 1.0, slack))
    else:
        links.append(LinkResult("eta_S_lower", math.nan, math.nan, -math.inf, False))
        links.append(LinkResult("eta_S_upper", math.nan, math.nan, -math.inf, False))
    links.append(_link("eta_Sc_upper", etaSc if VSc > 0 else 0.0, 1.0, slack))
    links.append(_link("tau_normalized", tau, 1.0, slack))
    mu_max = 4.0 ** (1.0 / q) * N ** (2.0 / q - 1.0)
    if math.isfinite(mu):
        links.append(_link("mu_lower", 1.0, mu, slack))
        links.append(_link("mu_upper", mu, mu_max, slack))
        V = e2sq
        links.append(_link("sigma_constraint", (1.0 + M) * V - M * mu * V / gfac, Sigma**2, slack))
        links.append(_link(
            "mu_relaxation",
            (1.0 + M) - M * 4.0 ** (1.0 / q) * N / gamma_eff ** (2.0 / q - 2.0),
            (1.0 + M) - M * mu / gfac,
            slack,
        ))
    else:
        for name in ("mu_lower", "mu_upper", "sigma_constraint", "mu_relaxation"):
            links.append(LinkResult(name, math.nan, math.nan, -math.inf, False))
    den = bound_denominator(q, M, N, gamma_eff)
    bound_sq = Sigma**2 / den if den > 0 else math.inf
    links.append(_link("final_bound", e2sq, bound_sq, slack))

    return ChainTrace(
        V_S=VS, V_Sc=VSc, eta_S=etaS, eta_Sc=etaSc, tau=tau, mu=mu, Sigma=Sigma,
        gamma=gamma, q=q, N=N, M=M, link_results=links,
        normalized_regime=bool(tau <= 1.0),
    )


# --- randomized inequality suites ------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: int = 0
    worst_margin: float = math.inf

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, lhs, rhs, rel=1e-12):
        """Record the check ``lhs <= rhs`` with relative slack ``rel``."""
        margin = (rhs - lhs) / max(1.0, abs(rhs))
        self.worst_margin = min(self.worst_margin, margin)
        if lhs > rhs + rel * max(1.0, abs(rhs)):
            self.failures += 1

    def to_dict(self) -> dict:
        return {"name": self.name, "trials": self.trials, "failures": self.failures,
                "worst_margin": self.worst_margin, "pass": self.passed}


def _random_vector(rng, n):
    x = rng.standard_normal(n) * np.exp(rng.uniform(-3, 3))
    k = int(rng.integers(1, n + 1))
    x[rng.permutation(n)[k:]] = 0.0
    return x


def norm_monotonicity_suite(trials, rng) -> SuiteResult:
    """``||x||_q2 <= ||x||_q1`` for ``0 < q1 <= q2 <= 1``."""
    out = SuiteResult("norm_monotonicity", trials)
    for _ in range(trials):
        x = _random_vector(rng, int(rng.integers(1, 30)))
        q1, q2 = np.sort(rng.uniform(0.05, 1.0, 2))
        out.record(lq_quasinorm(x, q2), lq_quasinorm(x, q1))
    return out


def split_inequality_suite(trials, rng) -> SuiteResult:
    out = SuiteResult("split_inequality", trials)
    for _ in range(trials):
        a, b = rng.standard_normal(2) * np.exp(rng.uniform(-5, 5, 2))
        if rng.random() < 0.1:
            b = -a
        q = rng.uniform(1e-3, 1.0)
        _, lhs, rhs = check_lemma2(a, b, q)
        out.record(rhs, lhs)
    return out


def gamma_sandwich_suite(trials, rng) -> SuiteResult:
    """gamma in [1/N, n/N], tight left inequality, Hoelder upper inequality."""
    out = SuiteResult("gamma_sandwich", trials)
    for _ in range(trials):
        n = int(rng.integers(1, 30))
        e = _random_vector(rng, n)
        q = rng.uniform(0.01, 0.99)
        N = int(rng.integers(1, n + 1))
        g = gamma_of_error(e, q, N)
        out.record(1.0 / N, g)
        out.record(g, n / N)
        lq = lq_quasinorm(e, q)
        l1 = l1_norm(e)
        left = (g * N) ** (1.0 / q - 1.0) * l1
        out.record(left, lq, rel=1e-10)
        out.record(lq, left, rel=1e-10)
        out.record(lq, n ** (1.0 / q - 1.0) * l1)
    return out


def l1_l2_sandwich_suite(trials, rng) -> SuiteResult:
    out = SuiteResult("l1_l2_sandwich", trials)
    for _ in range(trials):
        n = int(rng.integers(1, 50))
        x = _random_vector(rng, n)
        l1, l2 = l1_norm(x), l2_norm(x)
        out.record(l2, l1)
        out.record(l1, math.sqrt(n) * l2)
    return out


def run_lemma_suites(trials: int = 10_000, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [
        split_inequality_suite(trials, rng),
        norm_monotonicity_suite(trials, rng),
        gamma_sandwich_suite(trials, rng),
        l1_l2_sandwich_suite(trials, rng),
    ]
