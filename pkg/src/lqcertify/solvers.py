"""Solvers for ``min ||x||_q^q  s.t.  ||y - Ax||_2 <= sigma`` and a brute-force oracle.

The main solver runs proximal-gradient thresholding on the penalized
objective ``w ||x||_q^q + ||Ax - y||^2 / 2`` and bisects the weight ``w``
so that the residual reaches ``sigma``: minimizers of the constrained model
sit on the boundary of the feasible set whenever ``||y||_2 > sigma``.
Each candidate is then polished by Newton's method on the KKT system
restricted to its support and moved exactly onto the boundary.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .core import (
    InputError,
    LqCertifyError,
    RecoveryProblem,
    l2_norm,
    lq_quasinorm,
    support_of,
)
from .prox import lq_threshold

log = logging.getLogger(__name__)

ORACLE_MAX_N = 14
ORACLE_MAX_SUPPORT = 6
EQUALITY_TOL = 1e-10


class RefusalError(LqCertifyError):
    """The request exceeds a guarded size limit."""


class InfeasibleError(LqCertifyError):
    """No candidate reaches the residual budget."""


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iters: int = 60
    max_inner_iters: int = 20000
    residual_tol: float = 1e-8
    objective_tol: float = 1e-9
    multistart_count: int = 8
    seed: int = 0
    debug: bool = False

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration budgets must be positive")
        if not (self.residual_tol > 0 and self.objective_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.multistart_count < 1:
            raise ValueError("multistart_count must be at least 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SolverDiagnostics:
    """``penalty_weight`` is the KKT multiplier ``lambda*`` of
    ``grad ||x||_q^q - lambda* A^T (y - Ax) = 0``; it is the reciprocal of
    the thresholding weight ``w`` and 0 when the constraint is inactive.
    """

    penalty_weight: float
    outer_iterations: int
    inner_iterations: int
    converged: bool
    active_constraint: bool
    best_start: str = ""


@dataclass(frozen=True)
class RecoveryResult:
    x_star: np.ndarray
    residual: float
    objective: float
    diagnostics: SolverDiagnostics
    error: Optional[np.ndarray] = None
    support_size: Optional[int] = field(default=None)

    def with_truth(self, x0) -> "RecoveryResult":
        return replace(self, error=self.x_star - np.asarray(x0, dtype=float))


def _objective(x, q):
    return float(np.sum(np.abs(x) ** q))


def _residual(A, x, y):
    return l2_norm(A @ x - y)


def _is_active(residual, sigma, tol):
    return abs(residual - sigma) <= tol * max(sigma, 1e-12)


def spectral_norm_sq(A, iters=50):
    """Largest eigenvalue of ``A^T A`` by power iteration from a fixed start."""
    v = np.ones(A.shape[1]) / math.sqrt(A.shape[1])
    est = 0.0
    for _ in range(iters):
        u = A.T @ (A @ v)
        est = l2_norm(u)
        if est == 0.0:
            return 0.0
        v = u / est
    return float(v @ (A.T @ (A @ v)))


def _make_result(A, y, x, q, sigma, lam, outer, inner, converged, tol, start=""):
    res = _residual(A, x, y)
    diag = SolverDiagnostics(
        penalty_weight=float(lam),
        outer_iterations=int(outer),
        inner_iterations=int(inner),
        converged=bool(converged),
        active_constraint=_is_active(res, sigma, tol),
        best_start=start,
    )
    return RecoveryResult(
        x_star=x, residual=res, objective=_objective(x, q), diagnostics=diag,
        support_size=int(support_of(x).size),
    )


class _Problem:
    """Per-solve working state shared by all starts."""

    def __init__(self, problem: RecoveryProblem, config: SolverConfig):
        self.A = np.asarray(problem.A)
        self.y = np.asarray(problem.y)
        self.q = float(problem.q)
        self.sigma = float(problem.sigma)
        self.cfg = config
        self.L = 1.05 * spectral_norm_sq(self.A)
        self.Aty = self.A.T @ self.y
        self.inner_count = 0
        self.last_converged = False

    def penalized(self, x, w):
        return w * _objective(x, self.q) + 0.5 * l2_norm(self.A @ x - self.y) ** 2

    def inner(self, x, w, max_iters=None):
        """Proximal gradient with step 1/L on the penalized objective."""
        A, y, L, q = self.A, self.y, self.L, self.q
        max_iters = max_iters or self.cfg.max_inner_iters
        step_w = w / L
        prev = self.penalized(x, w) if self.cfg.debug else None
        for _ in range(max_iters):
            self.inner_count += 1
            grad = A.T @ (A @ x - y)
            x_new = lq_threshold(x - grad / L, step_w, q)
            dx = np.max(np.abs(x_new - x)) if x.size else 0.0
            x = x_new
            if self.cfg.debug:
                cur = self.penalized(x, w)
                assert cur <= prev + 1e-12 * max(1.0, abs(prev)), "penalized objective increased"
                prev = cur
            if dx <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
                self.last_converged = True
                break
        else:
            self.last_converged = False
        return x

    # -- exact boundary moves -------------------------------------------------

    def shrink_to_boundary(self, x):
        """Smallest ``t`` in (0, 1] with ``||t Ax - y|| = sigma`` (x feasible, y outside)."""
        ax = self.A @ x
        a = float(ax @ ax)
        b = float(ax @ self.y)
        c = float(self.y @ self.y) - self.sigma**2
        if a == 0.0 or c <= 0.0:
            return x
        disc = max(b * b - a * c, 0.0)
        t = c / (b + math.sqrt(disc)) if b > 0 else 1.0
        return x * min(max(t, 0.0), 1.0)

    def pull_into_feasible(self, x):
        """Move an infeasible point along a segment towards a least-squares point."""
        A, y, s = self.A, self.y, self.sigma
        S = support_of(x)
        targets = []
        if S.size:
            xs = np.zeros_like(x)
            xs[S] = np.linalg.lstsq(A[:, S], y, rcond=None)[0]
            targets.append(xs)
        targets.append(np.linalg.lstsq(A, y, rcond=None)[0])
        for tgt in targets:
            r0 = A @ x - y
            d = A @ (tgt - x)
            if l2_norm(A @ tgt - y) > s:
                continue
            # ||r0 + t d||^2 = s^2 has exactly one root in (0, 1]; the smaller one
            a = float(d @ d)
            b = float(r0 @ d)
            c = float(r0 @ r0) - s * s
            disc = max(b * b - a * c, 0.0)
            if a == 0.0 or -b + math.sqrt(disc) <= 0.0:
                continue
            t = min(max(c / (-b + math.sqrt(disc)), 0.0), 1.0)
            return x + t * (tgt - x)
        return None

    def to_boundary(self, x):
        if self.sigma == 0.0:
            return self._equality_project(x)
        r = _residual(self.A, x, self.y)
        if r <= self.sigma:
            return self.shrink_to_boundary(x)
        x = self.pull_into_feasible(x)
        if x is None:
            return None
        return self.shrink_to_boundary(x)

    def _equality_project(self, x):
        A, y = self.A, self.y
        tol = EQUALITY_TOL * max(1.0, l2_norm(y))
        S = support_of(x)
        if S.size:
            xs = np.zeros_like(x)
            xs[S] = np.linalg.lstsq(A[:, S], y, rcond=None)[0]
            if _residual(A, xs, y) <= tol:
                return xs
        xn = x + np.linalg.lstsq(A, y - A @ x, rcond=None)[0]
        return xn if _residual(A, xn, y) <= tol else None

    # -- KKT polish -------------------------------------------------------------

    def polish(self, x, w, max_iters=60):
        """Newton's method on the support-restricted KKT system in ``(x_S, w)``.

        Returns ``(x, w)`` or None when the support is too large, signs flip
        or the iteration does not settle.
        """
        A, y, q, s2 = self.A, self.y, self.q, self.sigma**2
        S = support_of(x)
        k = S.size
        if k == 0 or k > A.shape[0] or self.sigma == 0.0:
            return None
        AS = A[:, S]
        G = AS.T @ AS
        xs = x[S].copy()
        sg = np.sign(xs)
        scale = max(1.0, l2_norm(self.Aty))
        for _ in range(max_iters):
            ax = np.abs(xs)
            r = AS @ xs - y
            g = sg * q * ax ** (q - 1.0)
            F = np.concatenate([AS.T @ r + w * g, [0.5 * (r @ r - s2)]])
            if np.max(np.abs(F)) <= 1e-13 * scale:
                break
            J = np.zeros((k + 1, k + 1))
            J[:k, :k] = G + np.diag(w * q * (q - 1.0) * ax ** (q - 2.0))
            J[:k, k] = g
            J[k, :k] = AS.T @ r
            try:
                step = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.isfinite(step)):
                return None
            dx, dw = step[:k], step[k]
            # fraction-to-boundary: keep signs fixed and w positive
            alpha = 1.0
            shrink = sg * dx < 0
            if np.any(shrink):
                alpha = min(alpha, 0.9 * float(np.min(ax[shrink] / np.abs(dx[shrink]))))
            if dw < 0:
                alpha = min(alpha, 0.9 * w / -dw)
            xs = xs + alpha * dx
            w = w + alpha * dw
        else:
            return None
        out = np.zeros_like(x)
        out[S] = xs
        return out, w

    def off_support_violation(self, x, w):
        """For q = 1: how far ``|A_i^T r|`` exceeds ``w`` off the support."""
        S = support_of(x)
        c = np.abs(self.A.T @ (self.A @ x - self.y))
        c[S] = 0.0
        return float(np.max(c)) - w if c.size else -w


def _random_starts(rng, n, count, scale):
    return [rng.standard_normal(n) * scale for _ in range(count)]


def solve_constrained(
    problem: RecoveryProblem,
    config: Optional[SolverConfig] = None,
    hint=None,
) -> RecoveryResult:
    """Minimize ``||x||_q`` subject to ``||y - Ax||_2 <= sigma``.

    ``hint`` (e.g. the ground truth in synthetic runs) contributes a start at
    its feasible projection; the returned objective never exceeds that of the
    projected hint.
    """
    cfg = config or SolverConfig()
    P = _Problem(problem, cfg)
    A, y, q, sigma = P.A, P.y, P.q, P.sigma
    n = A.shape[1]
    tol = cfg.residual_tol

    if l2_norm(y) <= sigma:
        x = np.zeros(n)
        return _make_result(A, y, x, q, sigma, 0.0, 0, 0, True, tol, "zero")

    x_ls = np.linalg.lstsq(A, y, rcond=None)[0]
    if _residual(A, x_ls, y) > sigma * (1 + tol) + (EQUALITY_TOL if sigma == 0 else 0.0):
        log.warning("residual budget below least-squares residual; problem infeasible")
        return _make_result(A, y, x_ls, q, sigma, 0.0, 0, 0, False, tol, "lstsq")

    w_path, x_path, outer = _bisect_weight(P)

    rng = np.random.default_rng(cfg.seed)
    starts = [("zero", x_path, False), ("lstsq", x_ls, True)]
    candidates = []
    if hint is not None:
        hint = np.asarray(hint, dtype=float)
        if hint.shape != (n,):
            raise InputError(f"hint has shape {hint.shape}, expected ({n},)")
        hp = P.to_boundary(hint)
        if hp is not None:
            starts.append(("hint", hp, True))
    n_random = max(cfg.multistart_count - len(starts), 0)
    scale = max(l2_norm(x_ls), 1e-12) / math.sqrt(n)
    for i, xr in enumerate(_random_starts(rng, n, n_random, scale)):
        starts.append((f"random{i}", xr, True))

    for name, x_start, descend in starts:
        if descend:
            x = P.inner(x_start.copy(), w_path)
            settled = P.last_converged
        else:
            x, settled = x_start, True
        candidates.extend(_refine(P, name, x, w_path, settled))
    if hint is not None and hp is not None:
        candidates.append(("hint", hp, w_path, False))

    # lowest objective wins; earlier candidates win ties
    best = None
    for name, x, w, ok in candidates:
        f = _objective(x, q)
        if best is None or f < best[1] - 1e-12 * max(1.0, best[1]):
            best = (name, f, x, w, ok)
    if best is None:
        return _make_result(A, y, x_path, q, sigma, 1.0 / w_path, outer, P.inner_count, False, tol)
    name, f, x, w, ok = best
    res = _residual(A, x, y)
    converged = ok and (sigma == 0.0 or _is_active(res, sigma, tol))
    return _make_result(A, y, x, q, sigma, 1.0 / w, outer, P.inner_count, converged, tol, name)


def _refine(P: _Problem, name, x, w, settled):
    """Boundary candidates from a descended point: KKT-polished and plain."""
    out = []
    for _ in range(6):
        pol = P.polish(x, w)
        if pol is None:
            break
        xp, wp = pol
        if P.q == 1.0 and P.off_support_violation(xp, wp) > 1e-9 * max(1.0, wp):
            # an atom is missing from the support; descend again at the polished weight
            x, w = P.inner(xp, wp), wp
            settled = P.last_converged
            continue
        xb = P.to_boundary(xp)
        if xb is not None:
            out.append((name, xb, wp, True))
        break
    xb = P.to_boundary(x)
    if xb is not None:
        out.append((name, xb, w, settled))
    return out


def _bisect_weight(P: _Problem):
    """Log-scale bisection on the weight, warm-started along the path from zero."""
    A, y, sigma, cfg = P.A, P.y, P.sigma, P.cfg
    n = A.shape[1]
    w_hi = max(float(np.max(np.abs(P.Aty))), 1e-300)
    x_hi = np.zeros(n)
    while True:
        x_hi = P.inner(np.zeros(n), w_hi)
        if _residual(A, x_hi, y) >= sigma:
            break
        w_hi *= 4.0
    w_lo, x_lo = w_hi, x_hi
    for _ in range(40):
        w_lo *= 1e-2
        x_lo = P.inner(x_lo, w_lo)
        if _residual(A, x_lo, y) < sigma or w_lo < 1e-14 * w_hi:
            break
    if sigma == 0.0:
        return w_lo, x_lo, 0
    outer = 0
    x = x_lo
    coarse = 1e-3
    for outer in range(1, cfg.max_outer_iters + 1):
        w_mid = math.sqrt(w_lo * w_hi)
        x = P.inner(x, w_mid)
        r = _residual(A, x, y)
        if r > sigma:
            w_hi, x_hi = w_mid, x
        else:
            w_lo, x_lo = w_mid, x
        if abs(r - sigma) <= coarse * sigma or w_hi / w_lo < 1 + 1e-9:
            break
    # the feasible end of the bracket; for q < 1 the penalized path can jump
    # across sigma, and the KKT polish closes the remaining gap
    return w_lo, x_lo, outer


# --- brute-force oracle -------------------------------------------------------


def _sphere_points(k, rng, count):
    if k == 1:
        return np.array([[1.0, -1.0]])
    if k == 2:
        th = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.vstack([np.cos(th), np.sin(th)])
    u = rng.standard_normal((k, count))
    return u / np.sqrt(np.sum(u * u, axis=0))


def _l1_min_on_ellipsoid(center, Rinv, rho):
    """Exact ``min ||x||_1`` over the ellipsoid, one sign orthant at a time.

    In orthant ``s`` the objective is linear, ``s^T x``, with minimizer
    ``center - rho Rinv Rinv^T s / ||Rinv^T s||``. Minimizers outside their
    orthant lie on a coordinate face and belong to a smaller support.
    """
    k = center.size
    best_val, best_x = math.inf, None
    for signs in itertools.product((1.0, -1.0), repeat=k):
        s = np.array(signs)
        g = Rinv.T @ s
        x = center - rho * (Rinv @ g) / np.linalg.norm(g)
        if np.all(s * x >= 0.0):
            val = float(np.sum(np.abs(x)))
            if val < best_val:
                best_val, best_x = val, x
    return best_val, best_x


def _min_on_ellipsoid(center, Rinv, rho, q, rng, incumbent=math.inf, n_grid=4000, n_refine=2):
    """Minimize ``sum |x_i|^q`` over ``{center + rho Rinv u : ||u|| = 1}``.

    A dense direction grid locates basins, the best few are refined by local
    descent. Grid minima more than 10% above ``incumbent`` are not refined.
    """
    k = center.size

    def f_u(u):
        u = u / math.sqrt(float(u @ u))
        return float(np.sum(np.abs(center + rho * (Rinv @ u)) ** q))

    if rho == 0.0:
        return float(np.sum(np.abs(center) ** q)), center.copy()
    U = _sphere_points(k, rng, n_grid)
    if k > 1 and np.any(center):
        # direction of the boundary point nearest the origin
        d = np.linalg.solve(Rinv, -center)
        U = np.hstack([U, (d / np.linalg.norm(d))[:, None]])
    X = center[:, None] + rho * (Rinv @ U)
    vals = np.sum(np.abs(X) ** q, axis=0)
    order = np.argsort(vals, kind="stable")
    best_val, best_u = float(vals[order[0]]), U[:, order[0]]
    if k == 1 or best_val > 1.1 * incumbent:
        return best_val, center + rho * (Rinv @ best_u)
    picked = []
    for j in order:
        u0 = U[:, j]
        if any(np.linalg.norm(u0 - p) < 0.2 for p in picked):
            continue
        picked.append(u0)
        if len(picked) >= n_refine:
            break
    for u0 in picked:
        if k == 2:
            th0 = math.atan2(u0[1], u0[0])
            h = 4.0 * np.pi / n_grid

            def f_th(th):
                return f_u(np.array([math.cos(th), math.sin(th)]))

            r = minimize_scalar(f_th, bounds=(th0 - h, th0 + h), method="bounded",
                                options={"xatol": 1e-12})
            u_opt, val = np.array([math.cos(r.x), math.sin(r.x)]), float(r.fun)
        else:
            # chart around u0 through its tangent space
            basis = np.linalg.svd(u0[None, :])[2][1:].T

            def f_t(t, u0=u0, basis=basis):
                return f_u(u0 + basis @ t)

            r = minimize(f_t, np.zeros(k - 1), method="Nelder-Mead",
                         options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 600 * k,
                                  "initial_simplex": _simplex(k - 1, 0.05)})
            u_opt = u0 + basis @ r.x
            u_opt /= np.linalg.norm(u_opt)
            val = float(r.fun)
        if val < best_val:
            best_val, best_u = val, u_opt
    return best_val, center + rho * (Rinv @ best_u)


def _simplex(d, h):
    s = np.zeros((d + 1, d))
    s[1:] = h * np.eye(d)
    return s


def oracle_global(
    problem: RecoveryProblem,
    max_support: int,
    mode: str = "lq",
    seed: int = 0,
) -> RecoveryResult:
    """Exhaustive support enumeration for tiny instances.

    ``mode="l0"`` returns the least-squares point on the smallest feasible
    support; ``mode="lq"`` returns the minimal ``||x||_q^q`` over all
    supports of size at most ``max_support``. Ties go to the
    lexicographically smallest support.
    """
    A = np.asarray(problem.A)
    y = np.asarray(problem.y)
    q, sigma = float(problem.q), float(problem.sigma)
    m, n = A.shape
    if n > ORACLE_MAX_N or max_support > ORACLE_MAX_SUPPORT or max_support < 1:
        raise RefusalError(
            f"oracle limited to n <= {ORACLE_MAX_N} and 1 <= max_support <= {ORACLE_MAX_SUPPORT}"
        )
    if mode not in ("lq", "l0"):
        raise ValueError(f"unknown oracle mode {mode!r}")
    rng = np.random.default_rng(seed)
    zero = np.zeros(n)
    feas_tol = EQUALITY_TOL * max(1.0, l2_norm(y))

    def done(x, obj, sup):
        res = _residual(A, x, y)
        diag = SolverDiagnostics(0.0, 0, 0, True, _is_active(res, sigma, 1e-8), sup)
        return RecoveryResult(x_star=x, residual=res, objective=obj, diagnostics=diag,
                              support_size=int(support_of(x).size) if np.any(x) else 0)

    if l2_norm(y) <= sigma:
        return done(zero, 0.0, "()")

    best = None
    for k in range(1, max_support + 1):
        for S in itertools.combinations(range(n), k):
            AS = A[:, S]
            if np.linalg.matrix_rank(AS) < k:
                # a rank-deficient support is dominated by one of its subsets
                continue
            x_ls = np.linalg.lstsq(AS, y, rcond=None)[0]
            r_ls = l2_norm(AS @ x_ls - y)
            if r_ls > sigma + feas_tol:
                continue
            if mode == "l0":
                x = zero.copy()
                x[list(S)] = x_ls
                return replace(done(x, float(k), str(S)), objective=float(k))
            rho = math.sqrt(max(sigma * sigma - r_ls * r_ls, 0.0))
            Rf = np.linalg.cholesky(AS.T @ AS).T
            Rinv = np.linalg.inv(Rf)
            if q == 1.0:
                val, xs = _l1_min_on_ellipsoid(x_ls, Rinv, rho)
                if xs is None:
                    continue
            else:
                incumbent = best[0] if best is not None else math.inf
                val, xs = _min_on_ellipsoid(x_ls, Rinv, rho, q, rng, incumbent)
            if best is None or val < best[0] - 1e-12 * max(1.0, best[0]):
                x = zero.copy()
                x[list(S)] = xs
                best = (val, x, S)
    if best is None:
        raise InfeasibleError(f"no support of size <= {max_support} attains residual <= {sigma}")
    val, x, S = best
    return done(x, lq_quasinorm(x, q, raised=True), str(S))
