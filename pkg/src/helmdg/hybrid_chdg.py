"""Characteristic hybridization: scattering and exchange operators.

The hybrid unknown is the incoming characteristic variable
g- = u' - n.q' of every element on each of its faces, one coefficient
block of size p+1 per (element, local face) pair in the orthonormal face
basis.  Eliminating the element fields through local Robin-type solves
turns the coupled system into

    (I - Pi S) g = b,

where the scattering operator S maps incoming to outgoing characteristics
through independent element solves, and the exchange operator Pi swaps
the outgoing characteristics of the two sides of every interior face and
encodes the boundary conditions (negate on Dirichlet, copy on Neumann,
zero on Robin).  S is a strict contraction and Pi is a contraction, so
the fixed-point iteration g <- Pi S g + b converges without relaxation.

Skeleton dof layout: element-major blocks, ``(3*elem + local_face) * (p+1) + m``.
Because both owners of a face share its canonical parametrization, the
interior swap is coefficient-wise with no sign corrections.

Operator application is embarrassingly parallel over elements: each local
solve touches only its own blocks and results are independent of the
processing order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dg_core import ElementContext, ElementFields, ProblemConfig, SparseSystem
from .mesh import INTERIOR, BoundaryTag


def ndof_chdg(n_triangles: int, degree: int) -> int:
    """Skeleton unknowns: 3 * N_tri * (p+1)."""
    return 3 * n_triangles * (degree + 1)


@dataclass
class SkeletonLayout:
    """Index maps between (element, local face) blocks and face sides.

    ``partner[b]`` is the block of the same face seen from the other side
    (-1 on boundary blocks); ``bc_factor[b]`` is the exchange factor of
    boundary blocks: -1 on Dirichlet, +1 on Neumann, 0 on Robin (unused
    for interior blocks).
    """

    n_blocks: int
    block_size: int
    partner: np.ndarray
    bc_factor: np.ndarray
    tags: np.ndarray

    @property
    def ndof(self) -> int:
        return self.n_blocks * self.block_size

    def block_of(self, elem: int, local_face: int) -> int:
        return 3 * elem + local_face


def build_skeleton_layout(ctx: ElementContext) -> SkeletonLayout:
    mesh = ctx.mesh
    ne = mesh.n_triangles
    partner = np.full(3 * ne, -1, dtype=np.int64)
    factor = np.zeros(3 * ne)
    tags = ctx.face_tags.reshape(-1)

    interior = np.flatnonzero(~mesh.is_boundary_face)
    own = mesh.face_owners[interior]
    b0 = 3 * own[:, 0, 0] + own[:, 0, 1]
    b1 = 3 * own[:, 1, 0] + own[:, 1, 1]
    partner[b0] = b1
    partner[b1] = b0

    factor[tags == BoundaryTag.DIRICHLET] = -1.0
    factor[tags == BoundaryTag.NEUMANN] = 1.0
    factor[tags == BoundaryTag.ROBIN] = 0.0
    return SkeletonLayout(
        n_blocks=3 * ne,
        block_size=ctx.nf,
        partner=partner,
        bc_factor=factor,
        tags=tags,
    )


@dataclass
class ChdgOperators:
    """Factorized element operators of the characteristic hybridization.

    ``scatter`` holds the per-element dense maps from incoming to
    outgoing characteristic coefficients; ``source_outgoing`` is the
    outgoing trace of the element solutions driven by the volume source
    alone, which contributes Pi * source_outgoing to the right-hand side
    of the reduced system.
    """

    ctx: ElementContext
    layout: SkeletonLayout
    local_matrices: np.ndarray
    inv: np.ndarray
    coupling: np.ndarray
    outgoing: np.ndarray
    scatter: np.ndarray
    source_local: np.ndarray
    source_outgoing: np.ndarray

    @property
    def ndof(self) -> int:
        return self.layout.ndof

    def local_condition_numbers(self) -> np.ndarray:
        """2-norm condition number of every local matrix (dense SVD)."""
        s = np.linalg.svd(self.local_matrices, compute_uv=False)
        return s[:, 0] / s[:, -1]


def local_chdg_matrices(ctx: ElementContext, config: ProblemConfig) -> np.ndarray:
    """Element matrices of the local Robin-type problems, (Ne, 3nv, 3nv)."""
    pat = ctx.outgoing_pattern()
    return ctx.volume_block(config.kappa) + ctx.face_pattern_block(0.5 * pat, pat)


def factorize_local_chdg(ctx: ElementContext, config: ProblemConfig) -> ChdgOperators:
    """Factorize the local problems and form the scattering blocks."""
    local = local_chdg_matrices(ctx, config)
    try:
        inv = np.linalg.inv(local)
    except np.linalg.LinAlgError:
        for e in range(local.shape[0]):
            if not np.isfinite(np.linalg.cond(local[e])):
                raise np.linalg.LinAlgError(f"singular local matrix in element {e}")
        raise

    ne, nv, nf = ctx.mesh.n_triangles, ctx.nv, ctx.nf
    # Local rhs from incoming data s: (1/2)<s, v> in eq. 1, -(1/2)<s, n.p>
    # in eq. 2.
    rpat = 0.5 * ctx.incoming_pattern()
    coupling = np.einsum("elr,elam->eralm", rpat, ctx.P + 0j).reshape(ne, 3 * nv, 3 * nf)
    opat = ctx.outgoing_pattern()
    outgoing = np.einsum("elr,elam->elmra", opat, ctx.P + 0j).reshape(ne, 3 * nf, 3 * nv)
    scatter = np.einsum("eik,ekl,elj->eij", outgoing, inv, coupling)

    source = np.zeros((ne, 3 * nv), dtype=complex)
    source[:, :nv] = ctx.volume_load(config.volume_source)
    source_local = np.einsum("eij,ej->ei", inv, source)
    source_outgoing = np.einsum("eij,ej->ei", outgoing, source_local).reshape(-1)

    return ChdgOperators(
        ctx=ctx,
        layout=build_skeleton_layout(ctx),
        local_matrices=local,
        inv=inv,
        coupling=coupling,
        outgoing=outgoing,
        scatter=scatter,
        source_local=source_local,
        source_outgoing=source_outgoing,
    )


def _blocks(ops: ChdgOperators, g: np.ndarray) -> np.ndarray:
    """Reshape a skeleton vector (or stack of them) to element blocks."""
    nf = ops.layout.block_size
    ne = ops.ctx.mesh.n_triangles
    if g.ndim == 1:
        return g.reshape(ne, 3 * nf)
    return g.reshape(ne, 3 * nf, g.shape[1])


def scattering_apply(ops: ChdgOperators, g: np.ndarray) -> np.ndarray:
    """Apply the scattering operator S, block-diagonal over elements."""
    g = np.asarray(g, dtype=complex)
    gb = _blocks(ops, g)
    if g.ndim == 1:
        out = np.einsum("eij,ej->ei", ops.scatter, gb)
    else:
        out = np.einsum("eij,ejk->eik", ops.scatter, gb)
    return out.reshape(g.shape)


def scattering_apply_adjoint(ops: ChdgOperators, g: np.ndarray) -> np.ndarray:
    """Apply the Hermitian adjoint of the scattering operator."""
    g = np.asarray(g, dtype=complex)
    gb = _blocks(ops, g)
    if g.ndim == 1:
        out = np.einsum("eji,ej->ei", ops.scatter.conj(), gb)
    else:
        out = np.einsum("eji,ejk->eik", ops.scatter.conj(), gb)
    return out.reshape(g.shape)


def exchange_apply(ops_or_layout, g: np.ndarray) -> np.ndarray:
    """Apply the exchange operator Pi.

    Interior face blocks are swapped between the two owners; Dirichlet
    blocks are negated, Neumann blocks copied, Robin blocks zeroed.  The
    adjoint of Pi is Pi itself (real symmetric block structure).
    """
    layout = ops_or_layout.layout if isinstance(ops_or_layout, ChdgOperators) else ops_or_layout
    g = np.asarray(g)
    nf = layout.block_size
    gb = g.reshape(layout.n_blocks, nf, -1)
    out = np.empty_like(gb)
    interior = layout.partner >= 0
    out[interior] = gb[layout.partner[interior]]
    bnd = ~interior
    out[bnd] = layout.bc_factor[bnd, None, None] * gb[bnd]
    return out.reshape(g.shape)


def assemble_rhs_b(ctx: ElementContext, config: ProblemConfig) -> np.ndarray:
    """Boundary-data part of the reduced right-hand side.

    Blocks are face-basis projections of 2*s_D on Dirichlet faces,
    -2*s_N on Neumann faces and s_R on Robin faces; interior blocks
    vanish.
    """
    ne, nf = ctx.mesh.n_triangles, ctx.nf
    rhs = np.zeros((ne, 3, nf), dtype=complex)
    for tag, fn, scale in (
        (BoundaryTag.DIRICHLET, config.dirichlet_data, 2.0),
        (BoundaryTag.NEUMANN, config.neumann_data, -2.0),
        (BoundaryTag.ROBIN, config.robin_data, 1.0),
    ):
        sel = ctx.face_tags == tag
        if not np.any(sel) or fn is None:
            continue
        proj = ctx.project_face_data(fn)
        rhs += scale * proj * sel[:, :, None]
    return rhs.reshape(-1)


def system_rhs(ops: ChdgOperators, config: ProblemConfig) -> np.ndarray:
    """Full right-hand side of (I - Pi S) g = b, including volume sources."""
    b = assemble_rhs_b(ops.ctx, config)
    if np.any(ops.source_outgoing):
        b = b + exchange_apply(ops.layout, ops.source_outgoing)
    return b


def apply_chdg_system(ops: ChdgOperators, g: np.ndarray) -> np.ndarray:
    """Matrix-free application of I - Pi S."""
    return g - exchange_apply(ops.layout, scattering_apply(ops, g))


def apply_chdg_system_adjoint(ops: ChdgOperators, g: np.ndarray) -> np.ndarray:
    """Matrix-free application of (I - Pi S)^H = I - S^H Pi."""
    return g - scattering_apply_adjoint(ops, exchange_apply(ops.layout, g))


def assemble_reduced_chdg(
    ctx: ElementContext, config: ProblemConfig, ops: ChdgOperators | None = None
) -> SparseSystem:
    """Explicit sparse matrix of I - Pi S with its full right-hand side.

    Every touched block is scattered densely (including the identity
    diagonal blocks), matching the natural block assembly of the
    operator; duplicate entries are summed on compression.
    """
    if ops is None:
        ops = factorize_local_chdg(ctx, config)
    layout = ops.layout
    nf = layout.block_size
    ne = ctx.mesh.n_triangles
    n = layout.ndof

    rows_list = []
    cols_list = []
    vals_list = []

    # Dense identity blocks on every diagonal block.
    eye = np.broadcast_to(np.eye(nf, dtype=complex), (layout.n_blocks, nf, nf))
    block_rows = np.arange(layout.n_blocks)[:, None] * nf + np.arange(nf)[None, :]
    rows_list.append(np.repeat(block_rows, nf, axis=1).ravel())
    cols_list.append(np.tile(block_rows, (1, nf)).ravel())
    vals_list.append(np.ascontiguousarray(eye).ravel())

    # -Pi S blocks: the S row block of (element e, face l) lands on the
    # partner block for interior faces and on itself (with the boundary
    # factor) otherwise; Robin rows vanish.
    col_dofs = block_rows.reshape(ne, 3 * nf)  # blocks of each element
    src_blocks = np.arange(layout.n_blocks)
    dest = np.where(layout.partner >= 0, layout.partner, src_blocks)
    factors = np.where(layout.partner >= 0, 1.0, layout.bc_factor)
    active = factors != 0.0

    for loc in range(3):
        sel = active[3 * np.arange(ne) + loc]
        if not np.any(sel):
            continue
        elems = np.flatnonzero(sel)
        blk = -factors[3 * elems + loc, None, None] * ops.scatter[
            elems, loc * nf : (loc + 1) * nf, :
        ]
        dst = dest[3 * elems + loc]
        r = dst[:, None] * nf + np.arange(nf)[None, :]
        rows_list.append(np.repeat(r, 3 * nf, axis=1).ravel())
        cols_list.append(np.tile(col_dofs[elems], (1, nf)).ravel())
        vals_list.append(blk.ravel())

    matrix = sp.coo_matrix(
        (np.concatenate(vals_list), (np.concatenate(rows_list), np.concatenate(cols_list))),
        shape=(n, n),
    ).tocsr()
    matrix.sum_duplicates()
    rhs = system_rhs(ops, config)
    return SparseSystem(matrix=matrix, rhs=rhs, layout="chdg: (element, local face) blocks")


def reconstruct_chdg(ops: ChdgOperators, g: np.ndarray) -> ElementFields:
    """Element fields solving the local problems for the given skeleton."""
    ctx = ops.ctx
    gb = _blocks(ops, np.asarray(g, dtype=complex))
    x = np.einsum("eij,ej->ei", ops.inv, np.einsum("eij,ej->ei", ops.coupling, gb))
    x += ops.source_local
    return ElementFields(x.reshape(ctx.mesh.n_triangles, 3, ctx.nv))


def energy_identity_residual(ops: ChdgOperators, elem: int, s: np.ndarray) -> float:
    """Relative defect of the local energy identity on one element.

    For the solution (u, q) of the local problem with incoming data s,

        ||u + n.q||^2 + ||u - n.q - s||^2 = ||s||^2

    over the element boundary.  Returns |lhs - rhs| / ||s||^2, evaluated
    with the face quadrature of the context (exact for these integrands).
    """
    ctx = ops.ctx
    nf = ctx.nf
    s = np.asarray(s, dtype=complex).reshape(3 * nf)
    x = ops.inv[elem] @ (ops.coupling[elem] @ s)
    u = x[: ctx.nv]
    qx = x[ctx.nv : 2 * ctx.nv]
    qy = x[2 * ctx.nv :]

    lhs = 0.0
    s_norm2 = 0.0
    for loc in range(3):
        tr = ctx.T[elem, loc]  # (nv, nq)
        n = ctx.normals[elem, loc]
        w = ctx.face_len[elem, loc] * ctx.face_w
        uv = u @ tr
        qn = (qx @ tr) * n[0] + (qy @ tr) * n[1]
        psi = ctx.face_leg / np.sqrt(ctx.face_len[elem, loc])
        sv = s[loc * nf : (loc + 1) * nf] @ psi
        lhs += np.sum(w * np.abs(uv + qn) ** 2)
        lhs += np.sum(w * np.abs(uv - qn - sv) ** 2)
        s_norm2 += np.sum(w * np.abs(sv) ** 2)
    if s_norm2 == 0.0:
        return float(abs(lhs))
    return float(abs(lhs - s_norm2) / s_norm2)
