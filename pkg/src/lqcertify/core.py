"""Domain types, quasi-norms, column normalization and mutual coherence."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

UNIT_NORM_TOL = 1e-10
DEFAULT_ZERO_TOL = 1e-8


class LqCertifyError(Exception):
    """Base class for errors raised by this package."""


class DomainError(LqCertifyError, ValueError):
    """A parameter lies outside its mathematical domain."""


class InputError(LqCertifyError, ValueError):
    """Malformed input data (non-finite entries, shape mismatch)."""


class DegenerateInputError(InputError):
    """Input that makes an operation undefined, e.g. a zero column."""


class NotApplicableError(LqCertifyError):
    """The requested quantity is not defined for this input."""


def _as_finite_vector(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        x = x.ravel()
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains non-finite entries")
    return x


def _check_q(q: float) -> float:
    q = float(q)
    if not (0.0 < q <= 1.0):
        raise DomainError(f"q must lie in (0, 1], got {q}")
    return q


def lq_quasinorm(x, q: float, raised: bool = False) -> float:
    """Return ``(sum |x_i|^q)^(1/q)``, or ``sum |x_i|^q`` when ``raised``.

    ``np.sum`` on a contiguous float array uses pairwise summation.
    """
    q = _check_q(q)
    x = _as_finite_vector(x)
    s = float(np.sum(np.abs(x) ** q))
    if raised:
        return s
    return s ** (1.0 / q)


def l2_norm(x) -> float:
    x = np.asarray(x, dtype=float)
    top = float(np.max(np.abs(x))) if x.size else 0.0
    if top == 0.0 or not np.isfinite(top):
        return top
    if 1e-150 < top < 1e150:
        return float(np.sqrt(np.sum(x * x)))
    r = x / top
    return top * float(np.sqrt(np.sum(r * r)))


def l1_norm(x) -> float:
    return float(np.sum(np.abs(np.asarray(x, dtype=float))))


def l0_count(x, zero_tol: float = 0.0) -> int:
    """Number of entries with magnitude strictly above ``zero_tol``."""
    if zero_tol < 0:
        raise DomainError("zero_tol must be nonnegative")
    x = _as_finite_vector(x)
    return int(np.count_nonzero(np.abs(x) > zero_tol))


def support_of(x, zero_tol: Optional[float] = None) -> np.ndarray:
    """Indices of significant entries.

    With ``zero_tol=None`` the threshold is ``1e-8 * max|x_i|`` so that
    residue left by iterative solvers is ignored.
    """
    x = _as_finite_vector(x)
    if zero_tol is None:
        scale = float(np.max(np.abs(x))) if x.size else 0.0
        zero_tol = DEFAULT_ZERO_TOL * scale
    return np.flatnonzero(np.abs(x) > zero_tol)


@dataclass(frozen=True)
class Dictionary:
    """Dense m x n matrix with unit l2-norm columns."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise InputError(f"dictionary must be a nonempty 2-D matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("dictionary contains non-finite entries")
        norms = np.sqrt(np.sum(a * a, axis=0))
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
        if bad.size:
            raise InputError(
                f"column {int(bad[0])} has norm {norms[bad[0]]:.17g}; use normalize_columns"
            )
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        g = self.entries.T @ self.entries
        g.setflags(write=False)
        return g

    @cached_property
    def coherence(self) -> float:
        return mutual_coherence(self)

    def column(self, i: int) -> np.ndarray:
        return self.entries[:, i]


@dataclass(frozen=True)
class SparseSignal:
    values: np.ndarray
    zero_tol: Optional[float] = None
    support: np.ndarray = field(init=False)

    def __post_init__(self):
        v = _as_finite_vector(self.values, "values").copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        s = support_of(v, self.zero_tol)
        s.setflags(write=False)
        object.__setattr__(self, "support", s)

    @property
    def sparsity(self) -> int:
        return int(self.support.size)

    @property
    def n(self) -> int:
        return self.values.size

    def off_support(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.support] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class Observation:
    """Measurement ``y = y_clean + w`` with ``||w||_2 <= epsilon``."""

    y: np.ndarray
    epsilon: float = 0.0
    y_clean: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        y = _as_finite_vector(self.y, "y").copy()
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if self.epsilon < 0:
            raise DomainError("epsilon must be nonnegative")
        for name in ("y_clean", "noise"):
            v = getattr(self, name)
            if v is not None:
                v = _as_finite_vector(v, name).copy()
                if v.shape != y.shape:
                    raise InputError(f"{name} has length {v.size}, expected {y.size}")
                v.setflags(write=False)
                object.__setattr__(self, name, v)
        if self.noise is not None:
            if l2_norm(self.noise) > self.epsilon + 1e-10:
                raise InputError("noise norm exceeds epsilon")
            if self.y_clean is not None and np.max(np.abs(self.y_clean + self.noise - y)) > 1e-10:
                raise InputError("y != y_clean + noise")

    @property
    def m(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class RecoveryProblem:
    """The noise-aware model ``min ||x||_q  s.t.  ||y - Ax||_2 <= sigma``."""

    dictionary: Dictionary
    observation: Observation
    sigma: float
    q: float

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise DomainError(f"sigma must be a nonnegative real, got {self.sigma}")
        _check_q(self.q)
        if self.observation.m != self.dictionary.m:
            raise InputError(
                f"observation length {self.observation.m} != dictionary rows {self.dictionary.m}"
            )

    @property
    def y(self) -> np.ndarray:
        return self.observation.y

    @property
    def A(self) -> np.ndarray:
        return self.dictionary.entries


def normalize_columns(raw) -> Dictionary:
    a = np.asarray(raw, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if not np.all(np.isfinite(a)):
        raise InputError("matrix contains non-finite entries")
    norms = np.sqrt(np.sum(a * a, axis=0))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"column {int(zero[0])} is zero and cannot be normalized")
    return Dictionary(a / norms)


def mutual_coherence(A) -> float:
    """Largest absolute inner product between two distinct columns.

    Absolute values are taken, so the result lies in [0, 1] for a
    column-normalized dictionary.
    """
    if isinstance(A, Dictionary):
        g = A.gram
        n = A.n
    else:
        a = np.asarray(A, dtype=float)
        n = a.shape[1]
        g = a.T @ a
    if n < 2:
        raise DomainError("mutual coherence needs at least two columns")
    off = np.abs(g - np.diag(np.diag(g)))
    return float(min(np.max(off), 1.0))
