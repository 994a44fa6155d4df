import numpy as np
import pytest
import scipy.sparse as sp

from helmdg.dg_core import SparseSystem
from helmdg.solvers import (
    SingularSystemError,
    cgn,
    direct_solve,
    gmres,
    richardson,
    sparse_adjoint_operator,
)


def make_system(matrix, rhs):
    return SparseSystem(matrix=sp.csr_matrix(matrix), rhs=np.asarray(rhs, complex), layout="test")


class TestDirectSolve:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0], dtype=complex)
        x = direct_solve(make_system(np.eye(3), b))
        assert np.allclose(x, b)

    def test_diagonal(self):
        x = direct_solve(make_system(np.diag([2.0, 4.0]), [2.0, 4.0]))
        assert np.allclose(x, [1.0, 1.0])

    def test_singular_reported(self):
        with pytest.raises(SingularSystemError):
            direct_solve(make_system(np.zeros((2, 2)), [1.0, 0.0]))


class TestRichardson:
    def test_zero_rhs_zero_start(self):
        apply_t = lambda x: 0.5 * x
        report = richardson(apply_t, np.zeros(4, complex))
        assert report.iterations == 0
        assert report.converged

    def test_contractive_map_converges(self):
        rng = np.random.default_rng(0)
        t = 0.6 * rng.standard_normal((6, 6))
        t /= np.linalg.norm(t, 2) / 0.6
        b = rng.standard_normal(6) + 0j
        report = richardson(lambda x: t @ x, b, max_iter=500, tol=1e-12)
        assert report.converged
        x_exact = np.linalg.solve(np.eye(6) - t, b)
        assert np.allclose(report.x, x_exact, atol=1e-9)

    def test_residual_history_length(self):
        report = richardson(lambda x: 0.9 * x, np.ones(3, complex), max_iter=17, tol=0.0)
        assert len(report.residuals) == report.iterations + 1

    def test_callback_stop(self):
        report = richardson(
            lambda x: 0.99 * x, np.ones(3, complex), max_iter=100, callback=lambda k, x: k >= 5
        )
        assert report.reason == "stopped"
        assert report.iterations == 5


class TestCgn:
    def test_identity_one_iteration(self):
        b = np.array([1.0, 2.0], dtype=complex)
        report = cgn(lambda x: x, lambda x: x, b)
        assert report.iterations == 1
        assert report.converged
        assert np.allclose(report.x, b)

    def test_hermitian_diagonal_energy_decrease(self):
        d = np.array([1.0, 3.0, 5.0, 9.0])
        rng = np.random.default_rng(1)
        b = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        x_exact = b / d
        history = []
        cgn(
            lambda x: d * x,
            lambda x: d * x,
            b,
            max_iter=10,
            tol=1e-14,
            callback=lambda k, x: history.append(x.copy()) or False,
        )
        # Error in the normal-equation energy norm decreases monotonically.
        energies = [np.sum(d**2 * np.abs(x - x_exact) ** 2) for x in history]
        assert all(e2 <= e1 + 1e-12 for e1, e2 in zip(energies, energies[1:]))

    def test_exact_termination_matches_gmres(self):
        # On a normal matrix with k distinct singular values both Krylov
        # methods terminate exactly; their final residuals agree (at zero).
        d = np.array([1.0, 2.0, 3.0], dtype=complex)
        b = np.array([1.0, 1.0, 1.0], dtype=complex)
        rep_c = cgn(lambda x: d * x, lambda x: np.conj(d) * x, b, max_iter=3, tol=0.0)
        rep_g = gmres(lambda x: d * x, b, max_iter=3, tol=0.0)
        assert rep_c.residuals[-1] == pytest.approx(rep_g.residuals[-1], abs=1e-12)
        assert rep_c.residuals[-1] < 1e-12

    def test_residual_is_true_residual(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        b = rng.standard_normal(5) + 0j
        mv, mvh = sparse_adjoint_operator(sp.csr_matrix(a))
        report = cgn(mv, mvh, b, max_iter=5, tol=0.0)
        assert report.residuals[-1] == pytest.approx(np.linalg.norm(b - a @ report.x), rel=1e-8)


class TestGmres:
    def test_identity_one_iteration(self):
        b = np.array([2.0, -1.0], dtype=complex)
        report = gmres(lambda x: x, b)
        assert report.iterations == 1
        assert np.allclose(report.x, b)

    def test_permutation_exact_in_n(self):
        p = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=complex)
        b = np.array([1.0, 2.0, 3.0], dtype=complex)
        report = gmres(lambda x: p @ x, b, max_iter=3, tol=1e-13)
        assert report.iterations <= 3
        assert np.allclose(p @ report.x, b, atol=1e-12)

    def test_monotone_residuals(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
        b = rng.standard_normal(12) + 0j
        report = gmres(lambda x: a @ x, b, max_iter=12, tol=1e-13)
        res = np.array(report.residuals)
        assert np.all(res[1:] <= res[:-1] + 1e-12)
        assert report.residuals[-1] < 1e-10 * np.linalg.norm(b)

    def test_reported_residual_matches_true(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        b = rng.standard_normal(9) + 0j
        seen = []

        def cb(k, x):
            seen.append(np.linalg.norm(b - a @ x))
            return False

        report = gmres(lambda x: a @ x, b, max_iter=9, tol=0.0, callback=cb)
        assert np.allclose(seen[1:], report.residuals[1:], rtol=1e-8, atol=1e-10)

    def test_happy_breakdown(self):
        # Start vector spans an invariant subspace of dimension 2.
        a = np.diag([2.0, 3.0, 4.0]).astype(complex)
        b = np.array([1.0, 1.0, 0.0], dtype=complex)
        report = gmres(lambda x: a @ x, b, max_iter=3, tol=1e-14)
        assert report.converged
        assert report.iterations <= 2

    def test_nonzero_initial_guess(self):
        a = np.diag([1.0, 2.0, 5.0]).astype(complex)
        b = np.array([1.0, 4.0, 5.0], dtype=complex)
        x0 = np.array([0.5, 0.0, 1.0], dtype=complex)
        report = gmres(lambda x: a @ x, b, x0=x0, max_iter=3, tol=1e-13)
        assert np.allclose(report.x, [1.0, 2.0, 1.0], atol=1e-10)


class TestAdjointConsistency:
    def test_sparse_adjoint(self):
        rng = np.random.default_rng(5)
        a = sp.random(30, 30, density=0.2, random_state=6) + 1j * sp.random(
            30, 30, density=0.2, random_state=7
        )
        mv, mvh = sparse_adjoint_operator(a.tocsr())
        x = rng.standard_normal(30) + 1j * rng.standard_normal(30)
        y = rng.standard_normal(30) + 1j * rng.standard_normal(30)
        lhs = np.vdot(y, mv(x))
        rhs = np.vdot(mvh(y), x)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)
