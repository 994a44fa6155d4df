import numpy as np
import pytest
import scipy.sparse.linalg as spla

from helmdg import bench
from helmdg.dg_core import (
    ElementContext,
    ElementFields,
    ProblemConfig,
    assemble_dg,
    field_error_norms,
)
from helmdg.hybrid_hdg import (
    assemble_reduced_hdg,
    factorize_local_hdg,
    gather_trace,
    local_residual,
    ndof_hdg,
    reconstruct_hdg,
)
from helmdg.mesh import BoundaryTag, generate_structured_unit_square
from helmdg.solvers import direct_solve

KAPPA = 2 * np.pi
DIR = np.array([np.cos(np.pi / 8), np.sin(np.pi / 8)])


def robin_data(points, normals):
    u = np.exp(1j * KAPPA * (points @ DIR))
    return (1.0 - normals @ DIR) * u


def make_setup(n=4, p=2, kappa=KAPPA, tags=BoundaryTag.ROBIN, **data):
    mesh = generate_structured_unit_square(n, tags=tags)
    ctx = ElementContext(mesh, p)
    if not data and tags == BoundaryTag.ROBIN:
        data = {"robin_data": robin_data}
    cfg = ProblemConfig(kappa=kappa, degree=p, **data)
    return ctx, cfg


class TestLocalFactorization:
    def test_all_factorizations_nonsingular(self):
        ctx, cfg = make_setup(n=6, p=3)
        factors = factorize_local_hdg(ctx, cfg)
        conds = factors.local_condition_numbers()
        assert np.all(np.isfinite(conds))
        assert np.all(conds >= 1.0)

    def test_zero_trace_zero_fields(self):
        ctx, cfg = make_setup(n=2, p=1, robin_data=None)
        factors = factorize_local_hdg(ctx, cfg)
        trace = np.zeros(ndof_hdg(ctx.mesh.n_faces, 1), dtype=complex)
        fields = reconstruct_hdg(factors, trace)
        assert np.abs(fields.coeffs).max() == 0.0

    def test_random_trace_satisfies_local_problems(self):
        ctx, cfg = make_setup(n=3, p=2)
        factors = factorize_local_hdg(ctx, cfg)
        rng = np.random.default_rng(5)
        trace = rng.standard_normal(ndof_hdg(ctx.mesh.n_faces, 2)) + 1j * rng.standard_normal(
            ndof_hdg(ctx.mesh.n_faces, 2)
        )
        fields = reconstruct_hdg(factors, trace)
        assert local_residual(factors, trace, fields) <= 1e-12

    def test_local_conditioning_grows_like_inverse_kh(self):
        # Sweep kappa at fixed mesh: cond ~ 1/(kappa h) for the trace
        # hybridization, log-log slope -1 +- 0.2.
        mesh = generate_structured_unit_square(8)
        kappas = np.array([0.5, 1.0, 2.0, 4.0])
        for p in (1, 2, 3):
            rep = bench.local_conditioning_sweep(mesh, [p], list(kappas), "hdg")
            conds = np.array(rep.values)
            slope = np.polyfit(np.log(kappas), np.log(conds), 1)[0]
            assert -1.2 <= slope <= -0.8


class TestReducedSystem:
    def test_dof_count_formula(self):
        assert ndof_hdg(953, 3) == 3812
        ctx, cfg = make_setup(n=3, p=3)
        system = assemble_reduced_hdg(ctx, cfg)
        assert system.n == ndof_hdg(ctx.mesh.n_faces, 3)

    def test_nnz_bound(self):
        ctx, cfg = make_setup(n=8, p=3)
        system = assemble_reduced_hdg(ctx, cfg)
        nf = ctx.nf
        assert system.nnz <= ctx.mesh.n_faces * 5 * nf * nf

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_equivalence_with_dg(self, p):
        ctx, cfg = make_setup(n=4, p=p)
        dg_sys = assemble_dg(ctx, cfg)
        x = spla.spsolve(dg_sys.matrix.tocsc(), dg_sys.rhs)
        f_dg = ElementFields.from_vector(x, ctx.mesh.n_triangles, ctx.nv)

        factors = factorize_local_hdg(ctx, cfg)
        system = assemble_reduced_hdg(ctx, cfg, factors)
        trace = direct_solve(system)
        f_hdg = reconstruct_hdg(factors, trace)

        zero = ElementFields.zeros(ctx.mesh.n_triangles, ctx.nv)
        rel = field_error_norms(ctx, f_hdg, f_dg) / field_error_norms(ctx, f_dg, zero)
        assert rel <= 1e-8

    def test_equivalence_with_volume_source(self):
        kappa = 2.5
        ctx, cfg = make_setup(
            n=4,
            p=2,
            kappa=kappa,
            tags=BoundaryTag.DIRICHLET,
            volume_source=lambda pts: np.full(pts.shape[0], 1j / kappa),
        )
        dg_sys = assemble_dg(ctx, cfg)
        x = spla.spsolve(dg_sys.matrix.tocsc(), dg_sys.rhs)
        f_dg = ElementFields.from_vector(x, ctx.mesh.n_triangles, ctx.nv)
        factors = factorize_local_hdg(ctx, cfg)
        trace = direct_solve(assemble_reduced_hdg(ctx, cfg, factors))
        f_hdg = reconstruct_hdg(factors, trace)
        zero = ElementFields.zeros(ctx.mesh.n_triangles, ctx.nv)
        rel = field_error_norms(ctx, f_hdg, f_dg) / field_error_norms(ctx, f_dg, zero)
        assert rel <= 1e-8

    def test_normal_flux_identity(self):
        # The upwind normal flux computed from the two-sided formula must
        # equal u + n.q - u_hat on every interior face side.
        ctx, cfg = make_setup(n=4, p=3)
        factors = factorize_local_hdg(ctx, cfg)
        system = assemble_reduced_hdg(ctx, cfg, factors)
        trace = direct_solve(system)
        fields = reconstruct_hdg(factors, trace)
        mesh = ctx.mesh
        nf = ctx.nf
        interior = np.flatnonzero(~mesh.is_boundary_face)
        leg = ctx.face_leg
        for fid in interior[:25]:
            (e1, l1), (e2, l2) = mesh.face_owners[fid]
            psi = leg / np.sqrt(mesh.face_lengths[fid])
            uhat = trace[fid * nf : (fid + 1) * nf] @ psi
            n1 = ctx.normals[e1, l1]
            tr1, tr2 = ctx.T[e1, l1], ctx.T[e2, l2]
            u1 = fields.coeffs[e1, 0] @ tr1
            u2 = fields.coeffs[e2, 0] @ tr2
            qn1 = (fields.coeffs[e1, 1] @ tr1) * n1[0] + (fields.coeffs[e1, 2] @ tr1) * n1[1]
            qn2 = (fields.coeffs[e2, 1] @ tr2) * n1[0] + (fields.coeffs[e2, 2] @ tr2) * n1[1]
            flux = 0.5 * (qn1 + qn2) + 0.5 * (u1 - u2)
            assert np.abs(flux - (u1 + qn1 - uhat)).max() <= 1e-12

    def test_single_element_consistency(self):
        # On a mesh whose faces are all Dirichlet, the solved trace is the
        # projected boundary data and reconstruction equals the local solve.
        ctx, cfg = make_setup(
            n=1, p=2, tags=BoundaryTag.DIRICHLET,
            dirichlet_data=lambda pts, nrm: (pts[:, 0] + 1j * pts[:, 1]) ** 2,
        )
        factors = factorize_local_hdg(ctx, cfg)
        system = assemble_reduced_hdg(ctx, cfg, factors)
        trace = direct_solve(system)
        proj = ctx.project_face_data(cfg.dirichlet_data)
        for e in range(ctx.mesh.n_triangles):
            for loc in range(3):
                fid = ctx.mesh.elem_face[e, loc]
                if ctx.mesh.face_tags[fid] == BoundaryTag.DIRICHLET:
                    got = trace[fid * ctx.nf : (fid + 1) * ctx.nf]
                    assert np.allclose(got, proj[e, loc], atol=1e-12)
        fields = reconstruct_hdg(factors, trace)
        assert local_residual(factors, trace, fields) <= 1e-12


class TestElementaryClosedForms:
    # Lowest-order square-element reference matrices and their condition
    # number formulas.
    @pytest.mark.parametrize("kh", [0.1, 1.0, 2.0, 10.0])
    def test_square_element_cond(self, kh):
        h = 0.3
        kappa = kh / h
        mat = bench.hdg_square_element_matrix(kappa, h)
        got = bench.spectral_condition_number(mat)
        assert got == pytest.approx(bench.hdg_square_cond_formula(kh), rel=1e-10)

    def test_cond_at_kh_2(self):
        mat = bench.hdg_square_element_matrix(2.0, 1.0)
        assert bench.spectral_condition_number(mat) == pytest.approx(np.sqrt(5.0), rel=1e-12)
