"""Trace hybridization: element-local solves and static condensation.

The hybrid unknown is the single-valued numerical trace of u on the mesh
skeleton, one coefficient block of size p+1 per face in the orthonormal
face basis.  Element unknowns are eliminated through local problems with
the trace as given data; the condensed system couples each face to the
other faces of its (at most two) owner elements.

Local problems are weakly imposed Dirichlet problems: they are always
solvable, but their matrices become ill-conditioned as kappa*h goes to
zero (the condition number grows like 1/(kappa*h)).

Skeleton dof layout: face-major, ``face_id * (p+1) + m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dg_core import ElementContext, ElementFields, ProblemConfig, SparseSystem
from .mesh import INTERIOR, BoundaryTag


def ndof_hdg(n_faces: int, degree: int) -> int:
    """Trace unknowns: N_fce * (p+1)."""
    return n_faces * (degree + 1)


@dataclass
class HdgLocalFactors:
    """Factorized element-local operators of the trace hybridization.

    Attributes
    ----------
    inv : ndarray, (Ne, 3nv, 3nv)
        Inverses of the local matrices (dense LU based).
    coupling : ndarray, (Ne, 3nv, 3nf)
        Local right-hand side blocks multiplying the trace data.
    outgoing : ndarray, (Ne, 3nf, 3nv)
        Face-basis projection of u + n.q, per local face block.
    trace_weight : ndarray, (Ne, 3)
        Transmission-equation weight of each (element, face) side:
        1/2 on interior and Robin faces, 1 on Neumann, 0 on Dirichlet.
    source : ndarray, (Ne, 3nv)
        Local load vector from the volume source.
    """

    ctx: ElementContext
    local_matrices: np.ndarray
    inv: np.ndarray
    coupling: np.ndarray
    outgoing: np.ndarray
    trace_weight: np.ndarray
    source: np.ndarray

    def local_condition_numbers(self) -> np.ndarray:
        """2-norm condition number of every local matrix (dense SVD)."""
        s = np.linalg.svd(self.local_matrices, compute_uv=False)
        return s[:, 0] / s[:, -1]


def local_hdg_matrices(ctx: ElementContext, config: ProblemConfig) -> np.ndarray:
    """Element matrices of the local weak-Dirichlet problems, (Ne, 3nv, 3nv)."""
    ne = ctx.mesh.n_triangles
    rowfac = np.zeros((ne, 3, 3))
    rowfac[:, :, 0] = 1.0  # only the first equation carries the face term
    return ctx.volume_block(config.kappa) + ctx.face_pattern_block(
        rowfac, ctx.outgoing_pattern()
    )


def factorize_local_hdg(ctx: ElementContext, config: ProblemConfig) -> HdgLocalFactors:
    """Factorize all element-local problems of the trace hybridization.

    Raises
    ------
    np.linalg.LinAlgError
        If a local matrix is numerically singular (reported with the
        element index); well-posedness of the local problems makes this
        unreachable for valid inputs.
    """
    local = local_hdg_matrices(ctx, config)
    try:
        inv = np.linalg.inv(local)
    except np.linalg.LinAlgError:
        for e in range(local.shape[0]):
            if not np.isfinite(np.linalg.cond(local[e])):
                raise np.linalg.LinAlgError(f"singular local matrix in element {e}")
        raise

    ne, nv, nf = ctx.mesh.n_triangles, ctx.nv, ctx.nf
    # Local rhs from trace data s: <s, v> in eq. 1, -<s, n.p> in eq. 2.
    rpat = ctx.incoming_pattern()
    coupling = np.einsum("elr,elam->eralm", rpat, ctx.P + 0j).reshape(ne, 3 * nv, 3 * nf)
    # Outgoing projection of u + n.q per face block.
    opat = ctx.outgoing_pattern()
    outgoing = np.einsum("elr,elam->elmra", opat, ctx.P + 0j).reshape(ne, 3 * nf, 3 * nv)

    tags = ctx.face_tags
    weight = np.where(tags == INTERIOR, 0.5, 0.0)
    weight = np.where(tags == BoundaryTag.ROBIN, 0.5, weight)
    weight = np.where(tags == BoundaryTag.NEUMANN, 1.0, weight)

    source = np.zeros((ne, 3 * nv), dtype=complex)
    source[:, :nv] = ctx.volume_load(config.volume_source)

    return HdgLocalFactors(
        ctx=ctx,
        local_matrices=local,
        inv=inv,
        coupling=coupling,
        outgoing=outgoing,
        trace_weight=weight,
        source=source,
    )


def _face_dof_indices(ctx: ElementContext) -> np.ndarray:
    """Global trace dof indices of each element's three faces, (Ne, 3nf)."""
    nf = ctx.nf
    base = ctx.mesh.elem_face[:, :, None] * nf + np.arange(nf)[None, None, :]
    return base.reshape(ctx.mesh.n_triangles, 3 * nf)


def boundary_trace_rhs(ctx: ElementContext, config: ProblemConfig) -> np.ndarray:
    """Boundary-data part of the condensed right-hand side (face dofs)."""
    nf = ctx.nf
    rhs = np.zeros((ctx.mesh.n_faces, nf), dtype=complex)
    for tag, fn, scale in (
        (BoundaryTag.DIRICHLET, config.dirichlet_data, 1.0),
        (BoundaryTag.NEUMANN, config.neumann_data, -1.0),
        (BoundaryTag.ROBIN, config.robin_data, 0.5),
    ):
        sel = ctx.face_tags == tag
        if not np.any(sel) or fn is None:
            continue
        proj = ctx.project_face_data(fn)  # (Ne, 3, nf)
        np.add.at(rhs, ctx.mesh.elem_face[sel], scale * proj[sel])
    return rhs.reshape(-1)


def assemble_reduced_hdg(
    ctx: ElementContext, config: ProblemConfig, factors: HdgLocalFactors | None = None
) -> SparseSystem:
    """Statically condensed system on the numerical-trace unknowns.

    Each element scatters the dense block ``-W T A_loc^-1 R`` over the
    face-pair positions of its three faces; the identity of the
    transmission equation is added on the diagonal (the face basis is
    orthonormal, so the skeleton mass matrix is the identity).  Rows of
    Dirichlet faces decouple to pure identity rows.
    """
    if factors is None:
        factors = factorize_local_hdg(ctx, config)
    ne, nf = ctx.mesh.n_triangles, ctx.nf
    n = ctx.mesh.n_faces * nf

    inv_r = np.einsum("eij,ejk->eik", factors.inv, factors.coupling)
    wout = np.repeat(factors.trace_weight, nf, axis=1)[:, :, None] * factors.outgoing
    elem_blocks = -np.einsum("eik,ekj->eij", wout, inv_r)  # (Ne, 3nf, 3nf)

    dofs = _face_dof_indices(ctx)
    rows = np.repeat(dofs, 3 * nf, axis=1).ravel()
    cols = np.tile(dofs, (1, 3 * nf)).ravel()
    matrix = sp.coo_matrix((elem_blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    matrix = (matrix + sp.eye(n, dtype=complex, format="csr")).tocsr()
    matrix.sum_duplicates()

    rhs = boundary_trace_rhs(ctx, config)
    src = np.einsum("eik,ek->ei", wout, np.einsum("eij,ej->ei", factors.inv, factors.source))
    np.add.at(rhs, dofs, src)
    return SparseSystem(matrix=matrix, rhs=rhs, layout="hdg: face-major trace blocks")


def gather_trace(ctx: ElementContext, trace: np.ndarray) -> np.ndarray:
    """Per-element view of a trace vector, shape (Ne, 3nf)."""
    return trace[_face_dof_indices(ctx)]


def reconstruct_hdg(factors: HdgLocalFactors, trace: np.ndarray) -> ElementFields:
    """Element fields solving the local problems for the given trace."""
    ctx = factors.ctx
    s = gather_trace(ctx, np.asarray(trace, dtype=complex))
    rhs = np.einsum("eij,ej->ei", factors.coupling, s) + factors.source
    x = np.einsum("eij,ej->ei", factors.inv, rhs)
    return ElementFields(x.reshape(ctx.mesh.n_triangles, 3, ctx.nv))


def local_residual(factors: HdgLocalFactors, trace: np.ndarray, fields: ElementFields) -> float:
    """Max-norm residual of the local problems for (trace, fields)."""
    ctx = factors.ctx
    s = gather_trace(ctx, np.asarray(trace, dtype=complex))
    rhs = np.einsum("eij,ej->ei", factors.coupling, s) + factors.source
    x = fields.coeffs.reshape(ctx.mesh.n_triangles, -1)
    res = np.einsum("eij,ej->ei", factors.local_matrices, x) - rhs
    return float(np.abs(res).max())
