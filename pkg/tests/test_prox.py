import numpy as np
import pytest

from lqcertify.core import DomainError
from lqcertify.prox import general_threshold, half_threshold, lq_threshold, scalar_lq_prox


def grid_argmin(v, weight, q, lo=-3.0, hi=3.0, step=1e-6):
    t = np.arange(lo, hi + step / 2, step)
    f = weight * np.abs(t) ** q + 0.5 * (t - v) ** 2
    return t[np.argmin(f)], float(f.min())


def objective(t, v, weight, q):
    return weight * abs(t) ** q + 0.5 * (t - v) ** 2


def test_soft_threshold_value():
    assert scalar_lq_prox(3.0, 1.0, 1.0) == 2.0


def test_soft_threshold_dead_zone():
    assert scalar_lq_prox(0.5, 1.0, 1.0) == 0.0


def test_half_threshold_against_grid():
    t_grid, _ = grid_argmin(2.0, 1.0, 0.5)
    t = scalar_lq_prox(2.0, 1.0, 0.5)
    assert t == pytest.approx(t_grid, abs=2e-6)
    # stationarity of the nonzero branch: t - v + w q t^(q-1) = 0
    assert t - 2.0 + 0.5 * t**-0.5 == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("q", [0.1, 0.3, 0.5, 0.7, 0.9, 1.0])
def test_global_minimizer_on_grid(q, rng):
    for _ in range(25):
        v = rng.uniform(-2.5, 2.5)
        w = rng.uniform(0.05, 1.5)
        t = scalar_lq_prox(v, w, q)
        _, f_grid = grid_argmin(v, w, q, step=1e-4)
        assert objective(t, v, w, q) <= f_grid + 1e-12


def test_general_matches_closed_form_half(rng):
    v = rng.uniform(-4, 4, 500)
    a = half_threshold(v, 0.7)
    b = general_threshold(v, 0.7, 0.5)
    # away from the jump both operators agree
    far = np.abs(np.abs(v) - 54 ** (1 / 3) / 4 * 1.4 ** (2 / 3)) > 1e-6
    np.testing.assert_allclose(a[far], b[far], atol=1e-12)


def test_odd_symmetry(rng):
    v = rng.uniform(-3, 3, 100)
    for q in (0.3, 0.5, 1.0):
        np.testing.assert_array_equal(lq_threshold(-v, 0.4, q), -lq_threshold(v, 0.4, q))


def test_bad_weight():
    with pytest.raises(DomainError):
        scalar_lq_prox(1.0, 0.0, 0.5)
