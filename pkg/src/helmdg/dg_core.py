"""Upwind DG discretization of the first-order Helmholtz system.

The system solved on a domain Omega with wavenumber kappa is

    -i*kappa*u + div q = f1,      -i*kappa*q + grad u = 0,

with u = s_D on Dirichlet faces, n.q = s_N on Neumann faces and
u - n.q = s_R on Robin faces.  Interface coupling uses upwind numerical
fluxes; in terms of the outgoing characteristic g+ = u + n.q of an
element and the incoming characteristic g- = u' - n.q' of its neighbour
the upwind fluxes are (g+ + g-)/2 for the scalar flux and (g+ - g-)/2
for the normal flux.

Degrees of freedom are element-major: per element, the u coefficient
block, then the q_x block, then the q_y block.  An optional volume source
f1 enters the right-hand side of the first equation only.

:class:`ElementContext` precomputes all element and face tables (mass
and convection matrices, trace values on the globally oriented face
quadrature, orthonormal face-basis tables) shared by the plain DG
assembly and both hybridizations.  The same quadrature rules are used
everywhere, so data projections agree exactly between formulations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .basis import (
    VolumeBasis,
    scaled_legendre_table,
    segment_rule,
    trace_evaluate,
    triangle_rule,
)
from .mesh import INTERIOR, BoundaryTag, MeshError, TriangleMesh, locate_points

#: Data callables receive (points, normals); normals is None for volume data.
DataFunction = Callable[..., np.ndarray]


@dataclass
class ProblemConfig:
    """Wavenumber, polynomial degree and boundary/volume data.

    Boundary data callables take ``(points, normals)`` with arrays of
    shape (m, 2) and return complex values of shape (m,); the volume
    source takes ``(points,)`` only.  Missing data default to zero.
    """

    kappa: float
    degree: int
    dirichlet_data: DataFunction | None = None
    neumann_data: DataFunction | None = None
    robin_data: DataFunction | None = None
    volume_source: DataFunction | None = None

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise ValueError("kappa must be positive")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")


@dataclass
class ElementFields:
    """Per-element coefficients of the scalar field u and the flux q.

    ``coeffs`` has shape (n_elements, 3, n_dof_per_tri): component 0 is
    u, components 1 and 2 are q_x and q_y.
    """

    coeffs: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.coeffs.shape[0]

    @property
    def u(self) -> np.ndarray:
        return self.coeffs[:, 0, :]

    @property
    def q(self) -> np.ndarray:
        return self.coeffs[:, 1:, :]

    @classmethod
    def zeros(cls, n_elements: int, n_dof: int) -> "ElementFields":
        return cls(np.zeros((n_elements, 3, n_dof), dtype=complex))

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_elements: int, n_dof: int) -> "ElementFields":
        return cls(np.asarray(vec, dtype=complex).reshape(n_elements, 3, n_dof))

    def to_vector(self) -> np.ndarray:
        return self.coeffs.reshape(-1)


@dataclass
class SparseSystem:
    """Square complex sparse system with a dof layout descriptor."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: str

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz


def ndof_dg(n_triangles: int, degree: int) -> int:
    """Total DG unknowns: 3 * N_tri * (p+1)(p+2)/2."""
    return 3 * n_triangles * (degree + 1) * (degree + 2) // 2


class ElementContext:
    """Precomputed element and face tables for a mesh/degree pair.

    All heavy arrays are batched over elements; the volume rule is exact
    to degree ``2p+2`` and the face rule to ``2p+2`` by default, enough
    for every bilinear form of the method, so the discrete formulations
    built on one context are algebraically equivalent.
    """

    def __init__(
        self,
        mesh: TriangleMesh,
        degree: int,
        volume_exactness: int | None = None,
        face_exactness: int | None = None,
    ):
        self.mesh = mesh
        self.degree = degree
        self.basis = VolumeBasis(degree)
        self.nv = self.basis.n_funcs
        self.nf = degree + 1

        vol_exact = 2 * degree + 2 if volume_exactness is None else volume_exactness
        face_exact = 2 * degree + 2 if face_exactness is None else face_exactness

        # Reference volume tables.
        self.vol_ref_points, self.vol_ref_w = triangle_rule(vol_exact)
        self.phi = self.basis.values(self.vol_ref_points)  # (nv, nq)
        dphi = self.basis.gradients(self.vol_ref_points)  # (nv, nq, 2)
        w = self.vol_ref_w
        self.mass_ref = (self.phi * w) @ self.phi.T
        g_xi = (dphi[:, :, 0] * w) @ self.phi.T  # (i,j) = int phi_j d_xi phi_i
        g_eta = (dphi[:, :, 1] * w) @ self.phi.T

        # Geometry: x = v0 + J xi.
        tri_verts = mesh.vertices[mesh.triangles]  # (Ne, 3, 2)
        J = np.stack([tri_verts[:, 1] - tri_verts[:, 0], tri_verts[:, 2] - tri_verts[:, 0]], axis=-1)
        self.detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(self.detJ <= 0.0):
            raise MeshError("negative area: mesh must be counterclockwise")
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1] / self.detJ
        Jinv[:, 0, 1] = -J[:, 0, 1] / self.detJ
        Jinv[:, 1, 0] = -J[:, 1, 0] / self.detJ
        Jinv[:, 1, 1] = J[:, 0, 0] / self.detJ
        self._J = J
        self._v0 = tri_verts[:, 0]

        # Volume matrices: d/dx = Jinv[0,0] d_xi + Jinv[1,0] d_eta.
        d = self.detJ[:, None, None]
        self.M = d * self.mass_ref
        self.Gx = d * (Jinv[:, 0, 0, None, None] * g_xi + Jinv[:, 1, 0, None, None] * g_eta)
        self.Gy = d * (Jinv[:, 0, 1, None, None] * g_xi + Jinv[:, 1, 1, None, None] * g_eta)

        # Physical volume quadrature points and combined weights.
        self.vol_points = self._v0[:, None, :] + np.einsum(
            "eij,qj->eqi", J, self.vol_ref_points
        )
        self.vol_w = self.detJ[:, None] * w[None, :]

        # Face tables on the canonical (global) orientation.
        self.face_t, self.face_w = segment_rule(face_exact)
        nq = self.face_t.size
        tables = np.empty((3, 2, self.nv, nq))
        for loc in range(3):
            for rev in range(2):
                tables[loc, rev] = trace_evaluate(self.basis, loc, self.face_t, reverse=bool(rev))

        fids = mesh.elem_face  # (Ne, 3)
        fverts = mesh.faces[fids]  # (Ne, 3, 2) sorted global vertex pairs
        # Local face loc starts at local vertex loc; reversed when the
        # canonical (sorted) start differs from the local start.
        self.flip = (fverts[:, :, 0] != mesh.triangles).astype(np.int64)
        self.T = tables[np.arange(3)[None, :], self.flip]  # (Ne, 3, nv, nq)

        self.face_len = mesh.face_lengths[fids]  # (Ne, 3)
        self.normals = mesh.normals  # (Ne, 3, 2)
        self.face_tags = mesh.face_tags[fids]  # (Ne, 3)

        # Physical face quadrature points along the canonical orientation.
        p0 = mesh.vertices[fverts[:, :, 0]]  # (Ne, 3, 2)
        p1 = mesh.vertices[fverts[:, :, 1]]
        self.face_points = p0[:, :, None, :] + self.face_t[None, None, :, None] * (
            (p1 - p0)[:, :, None, :]
        )

        # Face mass and mixed volume/face-basis matrices.
        self.Lu = np.einsum(
            "el,elaq,q,elbq->elab", self.face_len, self.T, self.face_w, self.T
        )
        leg = scaled_legendre_table(degree, self.face_t)  # (nf, nq)
        self.face_leg = leg
        sqrt_len = np.sqrt(self.face_len)
        # P[e,l,a,m] = integral over face of phi_a * psi_m
        self.P = np.einsum(
            "el,elaq,q,mq->elam", sqrt_len, self.T, self.face_w, leg
        )

    # -- data integration helpers -------------------------------------------

    def _face_normals_at_quad(self) -> np.ndarray:
        nq = self.face_t.size
        return np.broadcast_to(
            self.normals[:, :, None, :], (self.mesh.n_triangles, 3, nq, 2)
        )

    def face_data_values(self, fn: DataFunction | None) -> np.ndarray:
        """Evaluate a boundary data function at all face quadrature points."""
        ne, _, nq, _ = self.face_points.shape
        if fn is None:
            return np.zeros((ne, 3, nq), dtype=complex)
        pts = self.face_points.reshape(-1, 2)
        nrm = self._face_normals_at_quad().reshape(-1, 2)
        vals = np.asarray(fn(pts, nrm), dtype=complex)
        return vals.reshape(ne, 3, nq)

    def project_face_data(self, fn: DataFunction | None) -> np.ndarray:
        """Coefficients of the face-basis L2 projection, shape (Ne, 3, nf)."""
        vals = self.face_data_values(fn)
        sqrt_len = np.sqrt(self.face_len)
        return np.einsum("el,elq,q,mq->elm", sqrt_len, vals, self.face_w, self.face_leg)

    def face_data_moments(self, fn: DataFunction | None) -> np.ndarray:
        """Moments of boundary data against volume traces, shape (Ne, 3, nv)."""
        vals = self.face_data_values(fn)
        return np.einsum("el,elq,q,elaq->ela", self.face_len, vals, self.face_w, self.T)

    def volume_load(self, fn: DataFunction | None) -> np.ndarray:
        """Moments of the volume source against the basis, shape (Ne, nv)."""
        if fn is None:
            return np.zeros((self.mesh.n_triangles, self.nv), dtype=complex)
        vals = np.asarray(fn(self.vol_points.reshape(-1, 2)), dtype=complex)
        vals = vals.reshape(self.mesh.n_triangles, -1)
        return np.einsum("eq,eq,aq->ea", self.vol_w, vals, self.phi)

    # -- element block builders ----------------------------------------------

    def volume_block(self, kappa: float) -> np.ndarray:
        """Volume part of the 3x3-component element operator, (Ne, 3nv, 3nv)."""
        ne, nv = self.mesh.n_triangles, self.nv
        blk = np.zeros((ne, 3, nv, 3, nv), dtype=complex)
        mk = -1j * kappa * self.M
        blk[:, 0, :, 0, :] = mk
        blk[:, 0, :, 1, :] = -self.Gx
        blk[:, 0, :, 2, :] = -self.Gy
        blk[:, 1, :, 0, :] = -self.Gx
        blk[:, 1, :, 1, :] = mk
        blk[:, 2, :, 0, :] = -self.Gy
        blk[:, 2, :, 2, :] = mk
        return blk.reshape(ne, 3 * nv, 3 * nv)

    def face_pattern_block(self, rowfac: np.ndarray, colfac: np.ndarray) -> np.ndarray:
        """Sum over local faces of rowfac x colfac outer products of Lu.

        ``rowfac`` and ``colfac`` have shape (Ne, 3, 3): per (element,
        local face), the coefficient multiplying the (u, q_x, q_y) test
        and trial rows of the face mass matrix.
        """
        ne, nv = self.mesh.n_triangles, self.nv
        blk = np.einsum("elr,elc,elab->erabc", rowfac, colfac, self.Lu + 0j)
        return blk.transpose(0, 1, 2, 4, 3).reshape(ne, 3 * nv, 3 * nv)

    def outgoing_pattern(self) -> np.ndarray:
        """(1, n_x, n_y) row pattern of the outgoing characteristic."""
        ne = self.mesh.n_triangles
        pat = np.empty((ne, 3, 3))
        pat[:, :, 0] = 1.0
        pat[:, :, 1:] = self.normals
        return pat

    def incoming_pattern(self) -> np.ndarray:
        """(1, -n_x, -n_y) row pattern of the incoming characteristic."""
        pat = self.outgoing_pattern()
        pat[:, :, 1:] *= -1.0
        return pat

    # -- dof layout ------------------------------------------------------------

    @property
    def ndof(self) -> int:
        return 3 * self.mesh.n_triangles * self.nv

    def dg_dof_indices(self) -> np.ndarray:
        """Global DG dof indices per element, shape (Ne, 3*nv)."""
        ne = self.mesh.n_triangles
        base = 3 * self.nv * np.arange(ne)[:, None]
        return base + np.arange(3 * self.nv)[None, :]


def _tag_weights(ctx: ElementContext) -> tuple[np.ndarray, np.ndarray]:
    """Per-(element, face) flux weights (c1 for eq. 1, c2 for eq. 2)."""
    tags = ctx.face_tags
    c1 = np.where(tags == INTERIOR, 0.5, 0.0)
    c2 = np.where(tags == INTERIOR, 0.5, 0.0)
    c1 = np.where(tags == BoundaryTag.DIRICHLET, 1.0, c1)
    c2 = np.where(tags == BoundaryTag.NEUMANN, 1.0, c2)
    c1 = np.where(tags == BoundaryTag.ROBIN, 0.5, c1)
    c2 = np.where(tags == BoundaryTag.ROBIN, 0.5, c2)
    return c1, c2


def assemble_dg(ctx: ElementContext, config: ProblemConfig) -> SparseSystem:
    """Assemble the upwind DG system on the given context.

    The matrix couples each element to itself and to its face
    neighbours; triplets are emitted in a fixed element/face order and
    summed on compression, so assembly is deterministic.
    """
    if config.degree != ctx.degree:
        raise ValueError("config degree does not match context")
    mesh = ctx.mesh
    if np.any((ctx.face_tags == INTERIOR) & (mesh.face_owners[ctx.mesh.elem_face][:, :, 1, 0] < 0)):
        raise MeshError("untagged boundary face")
    ne, nv = mesh.n_triangles, ctx.nv
    kappa = config.kappa

    # Diagonal blocks: volume terms plus own-side flux contributions.
    c1, c2 = _tag_weights(ctx)
    rowfac = np.empty((ne, 3, 3))
    rowfac[:, :, 0] = c1
    rowfac[:, :, 1] = c2 * ctx.normals[:, :, 0]
    rowfac[:, :, 2] = c2 * ctx.normals[:, :, 1]
    colfac = ctx.outgoing_pattern()
    diag = ctx.volume_block(kappa) + ctx.face_pattern_block(rowfac, colfac)

    dofs = ctx.dg_dof_indices()
    rows = [np.repeat(dofs, 3 * nv, axis=1).ravel()]
    cols = [np.tile(dofs, (1, 3 * nv)).ravel()]
    vals = [diag.ravel()]

    # Interior face coupling: each side receives -1/2 of the neighbour's
    # incoming-characteristic pattern.
    interior = np.flatnonzero(~mesh.is_boundary_face)
    if interior.size:
        own = mesh.face_owners[interior]
        for side in range(2):
            e_to, l_to = own[:, side, 0], own[:, side, 1]
            e_fr, l_fr = own[:, 1 - side, 0], own[:, 1 - side, 1]
            C = np.einsum(
                "f,faq,q,fbq->fab",
                mesh.face_lengths[interior],
                ctx.T[e_to, l_to],
                ctx.face_w,
                ctx.T[e_fr, l_fr],
            )
            n = ctx.normals[e_to, l_to]  # outward normal of the receiving side
            pat = np.empty((interior.size, 3))
            pat[:, 0] = 1.0
            pat[:, 1:] = -n
            blk = -0.5 * np.einsum("fr,fc,fab->frabc", pat, pat, C + 0j)
            blk = blk.transpose(0, 1, 2, 4, 3).reshape(interior.size, 3 * nv, 3 * nv)
            r = dofs[e_to]
            c = dofs[e_fr]
            rows.append(np.repeat(r, 3 * nv, axis=1).ravel())
            cols.append(np.tile(c, (1, 3 * nv)).ravel())
            vals.append(blk.ravel())

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ctx.ndof, ctx.ndof),
    ).tocsr()
    matrix.sum_duplicates()

    rhs = assemble_dg_rhs(ctx, config)
    return SparseSystem(matrix=matrix, rhs=rhs, layout="dg: element-major [u, qx, qy]")


def assemble_dg_rhs(ctx: ElementContext, config: ProblemConfig) -> np.ndarray:
    """Right-hand side of the DG system for the given data."""
    ne, nv = ctx.mesh.n_triangles, ctx.nv
    rhs = np.zeros((ne, 3, nv), dtype=complex)
    rhs[:, 0, :] = ctx.volume_load(config.volume_source)

    # Boundary data always enters through the incoming-characteristic test
    # pattern (v - n.p), scaled per condition type.
    tags = ctx.face_tags
    incoming = ctx.incoming_pattern()
    for tag, fn, scale in (
        (BoundaryTag.DIRICHLET, config.dirichlet_data, 1.0),
        (BoundaryTag.ROBIN, config.robin_data, 0.5),
        (BoundaryTag.NEUMANN, config.neumann_data, -1.0),
    ):
        sel = tags == tag
        if not np.any(sel) or fn is None:
            continue
        moments = ctx.face_data_moments(fn)  # (Ne, 3, nv)
        contrib = scale * np.einsum("elr,ela->era", incoming * sel[:, :, None], moments)
        rhs += contrib
    return rhs.reshape(-1)


def project_fields(
    ctx: ElementContext,
    u_fn: DataFunction | None,
    q_fn: DataFunction | None = None,
) -> ElementFields:
    """Element-wise L2 projection of smooth fields onto the DG space.

    ``q_fn`` returns shape (m, 2); either function may be None for zero.
    """
    ne, nv = ctx.mesh.n_triangles, ctx.nv
    coeffs = np.zeros((ne, 3, nv), dtype=complex)
    minv = np.linalg.inv(ctx.M)
    if u_fn is not None:
        vals = np.asarray(u_fn(ctx.vol_points.reshape(-1, 2)), dtype=complex).reshape(ne, -1)
        load = np.einsum("eq,eq,aq->ea", ctx.vol_w, vals, ctx.phi)
        coeffs[:, 0, :] = np.einsum("eab,eb->ea", minv, load)
    if q_fn is not None:
        vals = np.asarray(q_fn(ctx.vol_points.reshape(-1, 2)), dtype=complex).reshape(ne, -1, 2)
        for comp in range(2):
            load = np.einsum("eq,eq,aq->ea", ctx.vol_w, vals[:, :, comp], ctx.phi)
            coeffs[:, comp + 1, :] = np.einsum("eab,eb->ea", minv, load)
    return ElementFields(coeffs)


def evaluate_solution(
    ctx: ElementContext, fields: ElementFields, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Sample (u, q) at physical points; points must lie inside the mesh."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    elems = locate_points(ctx.mesh, pts)
    # Reference coordinates per point.
    d = pts - ctx._v0[elems]
    J = ctx._J[elems]
    det = ctx.detJ[elems]
    xi = (J[:, 1, 1] * d[:, 0] - J[:, 0, 1] * d[:, 1]) / det
    eta = (-J[:, 1, 0] * d[:, 0] + J[:, 0, 0] * d[:, 1]) / det
    vals = ctx.basis.values(np.column_stack([xi, eta]))  # (nv, m)
    coeffs = fields.coeffs[elems]  # (m, 3, nv)
    out = np.einsum("mcj,jm->mc", coeffs, vals)
    return out[:, 0], out[:, 1:]


def field_error_norms(
    ctx: ElementContext, fields: ElementFields, fields_ref: ElementFields
) -> float:
    """L2 norm of the coefficient-represented field difference."""
    diff = fields.coeffs - fields_ref.coeffs
    acc = np.einsum("ecj,ejk,eck->", diff.conj(), ctx.M + 0j, diff)
    return float(np.sqrt(abs(acc)))
