"""Thresholding operators: global minimizers of ``w|t|^q + (t - v)^2 / 2``."""

from __future__ import annotations

import numpy as np

from .core import DomainError, _check_q

_HALF_THRESH = 54.0 ** (1.0 / 3.0) / 4.0


def soft_threshold(v, weight):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - weight, 0.0)


def half_threshold(v, weight):
    """Closed-form prox of ``weight * |t|^(1/2)``.

    Written for ``(t - v)^2 + lam |t|^(1/2)`` with ``lam = 2 weight``.
    """
    v = np.asarray(v, dtype=float)
    lam = 2.0 * weight
    a = np.abs(v)
    out = np.zeros_like(v)
    keep = a > _HALF_THRESH * lam ** (2.0 / 3.0)
    if np.any(keep):
        ak = a[keep]
        phi = np.arccos(np.clip((lam / 8.0) * (ak / 3.0) ** -1.5, -1.0, 1.0))
        t = (2.0 / 3.0) * ak * (1.0 + np.cos(2.0 * np.pi / 3.0 - (2.0 / 3.0) * phi))
        # at the jump both 0 and t are minimizers; take 0 unless t is strictly better
        f_t = weight * np.sqrt(t) + 0.5 * (t - ak) ** 2
        t = np.where(f_t < 0.5 * ak * ak, t, 0.0)
        out[keep] = np.sign(v[keep]) * t
    return out


def general_threshold(v, weight, q, newton_iters=100):
    """Prox of ``weight * |t|^q`` for any q in (0, 1) by safeguarded Newton.

    For ``v > 0`` a nonzero minimizer solves ``t + weight q t^(q-1) = v`` on
    ``[t_hat, v]``, where ``t_hat`` minimizes the convex left-hand side; the
    root is then compared against ``t = 0``.
    """
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    wq = weight * q
    t_hat = (wq * (1.0 - q)) ** (1.0 / (2.0 - q))
    g_min = t_hat + wq * t_hat ** (q - 1.0)
    out = np.zeros_like(v)
    cand = a > g_min
    if not np.any(cand):
        return out
    ac = a[cand]
    t = ac.copy()
    lo = np.full_like(ac, t_hat)
    # g is convex and increasing on [t_hat, inf), so Newton from the right is monotone
    for _ in range(newton_iters):
        g = t + wq * t ** (q - 1.0) - ac
        dg = 1.0 + wq * (q - 1.0) * t ** (q - 2.0)
        t_new = np.maximum(t - g / dg, lo)
        if np.all(np.abs(t_new - t) <= 1e-15 * t):
            t = t_new
            break
        t = t_new
    f_t = weight * t**q + 0.5 * (t - ac) ** 2
    t = np.where(f_t < 0.5 * ac * ac, t, 0.0)
    out[cand] = np.sign(v[cand]) * t
    return out


def lq_threshold(v, weight, q):
    """Vectorized global prox of ``weight * |.|^q`` for q in (0, 1]."""
    q = _check_q(q)
    if weight <= 0:
        raise DomainError("weight must be positive")
    if q == 1.0:
        return soft_threshold(v, weight)
    if q == 0.5:
        return half_threshold(v, weight)
    return general_threshold(v, weight, q)


def scalar_lq_prox(v: float, weight: float, q: float) -> float:
    """Global minimizer of ``t -> weight |t|^q + (t - v)^2 / 2``."""
    return float(lq_threshold(np.array([float(v)]), weight, q)[0])
