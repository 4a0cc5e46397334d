import math

import numpy as np
import pytest

from lqcertify.core import Dictionary, Observation, RecoveryProblem, lq_quasinorm, normalize_columns
from lqcertify.solvers import (
    InfeasibleError,
    RefusalError,
    SolverConfig,
    oracle_global,
    solve_constrained,
    spectral_norm_sq,
)


def make_problem(A, y, sigma, q, eps=0.0):
    if not isinstance(A, Dictionary):
        A = normalize_columns(A)
    return RecoveryProblem(A, Observation(np.asarray(y, float), epsilon=eps), sigma, q)


def grid_oracle_2d(A, y, sigma, q, half_width=1.5, step=1e-3):
    t = np.arange(-half_width, half_width + step / 2, step)
    X1, X2 = np.meshgrid(t, t, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()])
    feas = np.linalg.norm(A @ pts - y[:, None], axis=0) <= sigma
    f = np.sum(np.abs(pts[:, feas]) ** q, axis=0)
    return float(f.min())


def random_instance(rng, m, n, k=1, eps=0.05, sigma_factor=(1.0, 4.0), q=1.0):
    A = normalize_columns(rng.standard_normal((m, n)))
    x0 = np.zeros(n)
    S = rng.choice(n, k, replace=False)
    x0[S] = rng.choice([-1.0, 1.0], k) * rng.uniform(0.5, 1.5, k)
    w = rng.standard_normal(m)
    w *= eps * rng.uniform() / np.linalg.norm(w)
    y = A.entries @ x0 + w
    sigma = eps * rng.uniform(*sigma_factor)
    return RecoveryProblem(A, Observation(y, epsilon=eps), sigma, q), x0


class TestIdentityInstances:
    A = Dictionary(np.eye(2))
    y = np.array([1.0, 0.0])

    def test_l1_boundary(self):
        r = solve_constrained(make_problem(self.A, self.y, 0.5, 1.0))
        np.testing.assert_allclose(r.x_star, [0.5, 0.0], atol=1e-12)
        assert r.residual == pytest.approx(0.5, rel=1e-12)
        assert r.diagnostics.converged and r.diagnostics.active_constraint
        assert r.objective == pytest.approx(grid_oracle_2d(np.eye(2), self.y, 0.5, 1.0), abs=2e-3)

    def test_zero_solution(self):
        r = solve_constrained(make_problem(self.A, self.y, 2.0, 1.0))
        np.testing.assert_array_equal(r.x_star, [0.0, 0.0])
        assert not r.diagnostics.active_constraint
        assert r.diagnostics.penalty_weight == 0.0

    def test_half_boundary(self):
        r = solve_constrained(make_problem(self.A, self.y, 0.5, 0.5))
        np.testing.assert_allclose(r.x_star, [0.5, 0.0], atol=1e-12)
        assert r.objective == pytest.approx(math.sqrt(0.5), rel=1e-12)
        assert r.objective == pytest.approx(grid_oracle_2d(np.eye(2), self.y, 0.5, 0.5), abs=2e-3)
        # KKT: q x^(q-1) = lambda (y - x)  ->  lambda = 0.5 * 0.5^-0.5 / 0.5
        assert r.diagnostics.penalty_weight == pytest.approx(math.sqrt(2.0), rel=1e-9)


class TestOracle:
    A = normalize_columns(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
    y = np.array([1.0, 1.0]) / math.sqrt(2)

    def test_l0_mode(self):
        r = oracle_global(make_problem(self.A, self.y, 0.01, 1.0), 2, mode="l0")
        assert r.objective == 1
        assert np.flatnonzero(r.x_star).tolist() == [2]

    def test_l1_mode_beats_two_spikes(self):
        r = oracle_global(make_problem(self.A, self.y, 0.01, 1.0), 2)
        assert r.objective < math.sqrt(2)
        # one-atom reduction: |t| with |1 - t| <= 0.01
        assert r.objective == pytest.approx(0.99, abs=1e-12)

    def test_zero_observation(self):
        r = oracle_global(make_problem(self.A, np.zeros(2), 0.0, 0.5), 2)
        assert r.objective == 0.0 and not np.any(r.x_star)

    def test_guard(self):
        A = normalize_columns(np.random.default_rng(0).standard_normal((3, 15)))
        with pytest.raises(RefusalError):
            oracle_global(make_problem(A, np.ones(3), 0.1, 1.0), 2)
        with pytest.raises(RefusalError):
            oracle_global(make_problem(self.A, self.y, 0.1, 1.0), 7)

    def test_infeasible(self):
        A = normalize_columns(np.eye(3))
        with pytest.raises(InfeasibleError):
            oracle_global(make_problem(A, np.ones(3), 0.1, 1.0), 2)

    def test_matches_grid_in_plane(self, rng):
        for q in (0.5, 1.0):
            A = normalize_columns(rng.standard_normal((2, 2)))
            y = rng.standard_normal(2)
            r = oracle_global(make_problem(A, y, 0.3, q), 2)
            g = grid_oracle_2d(A.entries, y, 0.3, q, half_width=4.0, step=2e-3)
            assert r.objective <= g + 1e-12
            assert r.objective == pytest.approx(g, abs=5e-3)


class TestInvariants:
    def test_active_constraint_and_descent(self, rng):
        for i in range(30):
            q = (0.5, 0.7, 1.0)[i % 3]
            prob, x0 = random_instance(rng, 8, 16, k=2, q=q)
            r = solve_constrained(prob, SolverConfig(seed=i), hint=x0)
            assert r.diagnostics.converged
            assert abs(r.residual - prob.sigma) <= 1e-8 * prob.sigma
            # x0 is feasible because sigma >= epsilon
            assert r.objective <= lq_quasinorm(x0, q, raised=True) + 1e-9
            assert r.residual == pytest.approx(
                np.linalg.norm(prob.A @ r.x_star - prob.y), abs=1e-10)

    def test_oracle_dominance(self, rng):
        for i in range(8):
            for q in (0.5, 1.0):
                prob, x0 = random_instance(rng, 3, 7, q=q)
                r = solve_constrained(prob, SolverConfig(seed=i), hint=x0)
                o = oracle_global(prob, 3, seed=i)
                assert r.objective >= o.objective - 1e-6
                if q == 1.0:
                    assert r.objective == pytest.approx(o.objective, abs=1e-6)

    def test_debug_monotone_inner(self, rng):
        prob, x0 = random_instance(rng, 6, 12, q=0.5)
        solve_constrained(prob, SolverConfig(debug=True, seed=3), hint=x0)

    def test_deterministic(self, rng):
        prob, x0 = random_instance(rng, 10, 20, k=2, q=0.6)
        a = solve_constrained(prob, SolverConfig(seed=11), hint=x0)
        b = solve_constrained(prob, SolverConfig(seed=11), hint=x0)
        assert a.x_star.tobytes() == b.x_star.tobytes()

    def test_equality_constrained(self):
        # basis pursuit: one atom explains y exactly
        A = normalize_columns(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
        y = A.entries[:, 2] * 2.0
        r = solve_constrained(make_problem(A, y, 0.0, 1.0))
        assert r.residual <= 1e-10
        np.testing.assert_allclose(r.x_star, [0.0, 0.0, 2.0], atol=1e-8)

    def test_spectral_norm(self, rng):
        B = rng.standard_normal((5, 9))
        assert spectral_norm_sq(B) == pytest.approx(np.linalg.norm(B, 2) ** 2, rel=1e-6)

    def test_with_truth(self):
        r = solve_constrained(make_problem(np.eye(2), [1.0, 0.0], 0.5, 1.0))
        np.testing.assert_allclose(r.with_truth([1.0, 0.0]).error, [-0.5, 0.0], atol=1e-12)
