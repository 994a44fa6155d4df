"""Linear solvers: sparse direct, fixed-point, CGN and full GMRES.

All iterative solvers work matrix-free through operator callables,
record the residual 2-norm of every iterate (including the initial one),
and accept an optional per-iteration callback.  The callback receives
``(iteration, iterate)`` and may return True to stop early, which lets
benchmark drivers track the true field error and cut off once a target
accuracy is reached.

Termination reasons: "tolerance" (relative residual below tol, including
the happy-breakdown case of GMRES), "max_iterations", "breakdown" (zero
search direction in CGN), or "stopped" (callback request).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dg_core import SparseSystem

Operator = Callable[[np.ndarray], np.ndarray]
Callback = Callable[[int, np.ndarray], bool | None]


@dataclass
class SolveReport:
    """Outcome of an iterative solve.

    ``residuals`` has one entry per iterate including the initial guess,
    so its length is ``iterations + 1``.
    """

    x: np.ndarray
    residuals: list[float] = field(default_factory=list)
    iterations: int = 0
    reason: str = ""

    @property
    def converged(self) -> bool:
        return self.reason == "tolerance"


class SingularSystemError(RuntimeError):
    """Raised when a direct factorization fails or is unusable."""


def direct_solve(system: SparseSystem, residual_tol: float = 1e-10) -> np.ndarray:
    """Sparse LU solve; verifies the relative residual afterwards."""
    matrix = system.matrix.tocsc().astype(complex)
    try:
        lu = spla.splu(matrix)
        x = lu.solve(system.rhs)
    except RuntimeError as exc:
        raise SingularSystemError(f"direct factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("direct solve produced non-finite values")
    b_norm = np.linalg.norm(system.rhs)
    if b_norm > 0.0:
        rel = np.linalg.norm(system.rhs - matrix @ x) / b_norm
        if rel > residual_tol:
            raise SingularSystemError(f"direct solve residual {rel:.2e} above {residual_tol:.0e}")
    return x


def sparse_adjoint_operator(matrix: sp.spmatrix) -> tuple[Operator, Operator]:
    """Matvec closures for a sparse matrix and its Hermitian adjoint."""
    a = matrix.tocsr()
    ah = matrix.getH().tocsr()
    return (lambda v: a @ v), (lambda v: ah @ v)


def richardson(
    apply_iteration: Operator,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    max_iter: int = 1000,
    tol: float = 1e-10,
    callback: Callback | None = None,
    callback_stride: int = 1,
) -> SolveReport:
    """Fixed-point iteration x <- T x + b for a contractive map T.

    Intended for the reduced characteristic system, where T = Pi S has
    spectral radius < 1 so the iteration converges for any start vector.
    The residual of the iterate equals the step x_next - x and is
    recorded at no extra cost.
    """
    b = np.asarray(b, dtype=complex)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    b_norm = np.linalg.norm(b)
    scale = b_norm if b_norm > 0.0 else 1.0

    x_next = apply_iteration(x) + b
    residuals = [float(np.linalg.norm(x_next - x))]
    if callback is not None and callback(0, x):
        return SolveReport(x=x, residuals=residuals, iterations=0, reason="stopped")
    if residuals[0] <= tol * scale:
        return SolveReport(x=x, residuals=residuals, iterations=0, reason="tolerance")

    reason = "max_iterations"
    k = 0
    for k in range(1, max_iter + 1):
        x = x_next
        x_next = apply_iteration(x) + b
        residuals.append(float(np.linalg.norm(x_next - x)))
        if callback is not None and k % callback_stride == 0 and callback(k, x):
            reason = "stopped"
            break
        if residuals[-1] <= tol * scale:
            reason = "tolerance"
            break
    return SolveReport(x=x, residuals=residuals, iterations=k, reason=reason)


def cgn(
    apply_a: Operator,
    apply_a_adjoint: Operator,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    max_iter: int = 1000,
    tol: float = 1e-10,
    callback: Callback | None = None,
    callback_stride: int = 1,
) -> SolveReport:
    """Conjugate gradients on the normal equations A^H A x = A^H b.

    The iterate minimizes the residual 2-norm over the Krylov space
    K_l(A^H A, A^H r0); the recorded residual is the true ||b - A x||.
    """
    b = np.asarray(b, dtype=complex)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    b_norm = np.linalg.norm(b)
    scale = b_norm if b_norm > 0.0 else 1.0

    r = b - apply_a(x)
    z = apply_a_adjoint(r)
    p = z.copy()
    z_norm2 = np.vdot(z, z).real
    residuals = [float(np.linalg.norm(r))]
    if callback is not None and callback(0, x):
        return SolveReport(x=x, residuals=residuals, iterations=0, reason="stopped")
    if residuals[0] <= tol * scale:
        return SolveReport(x=x, residuals=residuals, iterations=0, reason="tolerance")

    reason = "max_iterations"
    k = 0
    for k in range(1, max_iter + 1):
        w = np.array(apply_a(p), dtype=complex)
        w_norm2 = np.vdot(w, w).real
        if w_norm2 == 0.0:
            reason = "breakdown"
            k -= 1
            break
        alpha = z_norm2 / w_norm2
        x += alpha * p
        r -= alpha * w
        residuals.append(float(np.linalg.norm(r)))
        if callback is not None and k % callback_stride == 0 and callback(k, x):
            reason = "stopped"
            break
        if residuals[-1] <= tol * scale:
            reason = "tolerance"
            break
        z = apply_a_adjoint(r)
        z_norm2_new = np.vdot(z, z).real
        beta = z_norm2_new / z_norm2
        z_norm2 = z_norm2_new
        p = z + beta * p
    return SolveReport(x=x, residuals=residuals, iterations=k, reason=reason)


def gmres(
    apply_a: Operator,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    max_iter: int = 1000,
    tol: float = 1e-10,
    callback: Callback | None = None,
    callback_stride: int = 1,
) -> SolveReport:
    """Full GMRES (no restart) with modified Gram-Schmidt and Givens
    rotations.

    The residual history is non-increasing by construction.  A vanishing
    new Krylov direction (happy breakdown) means the exact solution lies
    in the current subspace and is reported as convergence.
    """
    b = np.asarray(b, dtype=complex)
    n = b.size
    x0 = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    b_norm = np.linalg.norm(b)
    scale = b_norm if b_norm > 0.0 else 1.0
    max_iter = min(max_iter, n)

    r0 = b - apply_a(x0)
    beta = np.linalg.norm(r0)
    residuals = [float(beta)]
    if callback is not None and callback(0, x0):
        return SolveReport(x=x0, residuals=residuals, iterations=0, reason="stopped")
    if beta <= tol * scale:
        return SolveReport(x=x0, residuals=residuals, iterations=0, reason="tolerance")

    chunk = 64
    # Krylov vectors are stored as rows so MGS walks contiguous memory.
    V = np.empty((min(chunk, max_iter + 1), n), dtype=complex)
    V[0] = r0 / beta
    H = np.zeros((max_iter + 1, max_iter), dtype=complex)
    cs = np.zeros(max_iter, dtype=complex)
    sn = np.zeros(max_iter, dtype=complex)
    g = np.zeros(max_iter + 1, dtype=complex)
    g[0] = beta

    def solution(k: int) -> np.ndarray:
        # The rotated Hessenberg block is already upper triangular.
        y = scipy.linalg.solve_triangular(
            H[: k + 1, : k + 1], g[: k + 1], check_finite=False
        )
        return x0 + y @ V[: k + 1]

    reason = "max_iterations"
    k_done = 0
    happy = False
    for k in range(max_iter):
        if k + 1 >= V.shape[0]:
            V = np.concatenate(
                [V, np.empty((min(chunk, max_iter + 1 - V.shape[0]), n), dtype=complex)]
            )
        # Copy: the operator may return its input (e.g. the identity), and
        # MGS must not write into the Krylov basis.
        w = np.array(apply_a(V[k]), dtype=complex)
        for j in range(k + 1):
            H[j, k] = np.vdot(V[j], w)
            w -= H[j, k] * V[j]
        h_next = np.linalg.norm(w)
        H[k + 1, k] = h_next
        if h_next > 0.0:
            V[k + 1] = w / h_next

        # Apply previous rotations, then generate the new one.
        for j in range(k):
            t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
            H[j + 1, k] = -np.conj(sn[j]) * H[j, k] + np.conj(cs[j]) * H[j + 1, k]
            H[j, k] = t
        denom = np.sqrt(abs(H[k, k]) ** 2 + abs(H[k + 1, k]) ** 2)
        if denom == 0.0:
            cs[k], sn[k] = 1.0, 0.0
        else:
            cs[k] = np.conj(H[k, k]) / denom
            sn[k] = np.conj(H[k + 1, k]) / denom
        H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
        H[k + 1, k] = 0.0
        g[k + 1] = -np.conj(sn[k]) * g[k]
        g[k] = cs[k] * g[k]

        res = abs(g[k + 1])
        residuals.append(float(res))
        k_done = k + 1
        happy = h_next <= 1e-14 * max(beta, 1.0)
        stop = False
        # The iterate is only assembled when the callback will see it.
        if callback is not None and k_done % callback_stride == 0:
            if callback(k_done, solution(k)):
                reason = "stopped"
                stop = True
        if not stop and (res <= tol * scale or happy):
            reason = "tolerance"
            stop = True
        if stop:
            break

    x = solution(k_done - 1) if k_done > 0 else x0
    return SolveReport(x=x, residuals=residuals, iterations=k_done, reason=reason)
