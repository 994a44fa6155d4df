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
from helmdg.hybrid_chdg import (
    apply_chdg_system,
    apply_chdg_system_adjoint,
    assemble_reduced_chdg,
    assemble_rhs_b,
    energy_identity_residual,
    exchange_apply,
    factorize_local_chdg,
    ndof_chdg,
    reconstruct_chdg,
    scattering_apply,
    scattering_apply_adjoint,
    system_rhs,
)
from helmdg.mesh import BoundaryTag, generate_structured_unit_square
from helmdg.solvers import direct_solve

KAPPA = 2 * np.pi
DIR = np.array([np.cos(np.pi / 8), np.sin(np.pi / 8)])


def robin_data(points, normals):
    u = np.exp(1j * KAPPA * (points @ DIR))
    return (1.0 - normals @ DIR) * u


def make_ops(n=4, p=2, kappa=KAPPA, tags=BoundaryTag.ROBIN, **data):
    mesh = generate_structured_unit_square(n, tags=tags)
    ctx = ElementContext(mesh, p)
    if not data and tags == BoundaryTag.ROBIN:
        data = {"robin_data": robin_data}
    cfg = ProblemConfig(kappa=kappa, degree=p, **data)
    return ctx, cfg, factorize_local_chdg(ctx, cfg)


def random_skeleton(ops, seed=0, k=None):
    rng = np.random.default_rng(seed)
    shape = (ops.ndof,) if k is None else (ops.ndof, k)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestExchangeOperator:
    def test_interior_swap(self):
        ctx, cfg, ops = make_ops(n=2, p=1)
        mesh = ctx.mesh
        g = random_skeleton(ops, seed=1)
        pg = exchange_apply(ops, g)
        nf = ctx.nf
        interior = np.flatnonzero(~mesh.is_boundary_face)
        for fid in interior:
            (e1, l1), (e2, l2) = mesh.face_owners[fid]
            b1, b2 = 3 * e1 + l1, 3 * e2 + l2
            assert np.array_equal(pg[b1 * nf : (b1 + 1) * nf], g[b2 * nf : (b2 + 1) * nf])
            assert np.array_equal(pg[b2 * nf : (b2 + 1) * nf], g[b1 * nf : (b1 + 1) * nf])

    def test_boundary_cases(self):
        ctx, cfg, ops = make_ops(
            n=2, p=1,
            tags={"left": BoundaryTag.DIRICHLET, "right": BoundaryTag.ROBIN,
                  "bottom": BoundaryTag.NEUMANN, "top": BoundaryTag.NEUMANN},
        )
        g = random_skeleton(ops, seed=2)
        pg = exchange_apply(ops, g)
        nf = ctx.nf
        layout = ops.layout
        for b in range(layout.n_blocks):
            if layout.partner[b] >= 0:
                continue
            tag = layout.tags[b]
            blk_in = g[b * nf : (b + 1) * nf]
            blk_out = pg[b * nf : (b + 1) * nf]
            if tag == BoundaryTag.DIRICHLET:
                assert np.array_equal(blk_out, -blk_in)
            elif tag == BoundaryTag.NEUMANN:
                assert np.array_equal(blk_out, blk_in)
            else:
                assert np.all(blk_out == 0.0)

    def test_involution_and_isometry_without_robin(self):
        ctx, cfg, ops = make_ops(n=5, p=3, tags=BoundaryTag.DIRICHLET)
        for seed in range(5):
            g = random_skeleton(ops, seed=seed)
            pg = exchange_apply(ops, g)
            assert np.abs(exchange_apply(ops, pg) - g).max() == 0.0
            assert abs(np.linalg.norm(pg) - np.linalg.norm(g)) <= 1e-14 * np.linalg.norm(g)

    def test_contraction_with_robin(self):
        ctx, cfg, ops = make_ops(n=4, p=2, tags=BoundaryTag.ROBIN)
        g = random_skeleton(ops, seed=3)
        assert np.linalg.norm(exchange_apply(ops, g)) < np.linalg.norm(g)


class TestScatteringOperator:
    def test_zero_maps_to_zero(self):
        ctx, cfg, ops = make_ops()
        assert np.abs(scattering_apply(ops, np.zeros(ops.ndof, complex))).max() == 0.0

    @pytest.mark.parametrize("tags", [BoundaryTag.ROBIN, BoundaryTag.DIRICHLET])
    def test_strict_contraction(self, tags):
        ctx, cfg, ops = make_ops(n=5, p=3, kappa=11.0, tags=tags)
        g = random_skeleton(ops, seed=4, k=30)
        norms_in = np.linalg.norm(g, axis=0)
        norms_s = np.linalg.norm(scattering_apply(ops, g), axis=0)
        norms_ps = np.linalg.norm(exchange_apply(ops, scattering_apply(ops, g)), axis=0)
        assert np.all(norms_s < norms_in)
        assert np.all(norms_ps < norms_in)

    def test_skeleton_norm_equals_trace_l2_norm(self):
        # Orthonormal face basis: coefficient 2-norm equals the L2 norm of
        # the expanded skeleton function.
        ctx, cfg, ops = make_ops(n=3, p=2)
        g = random_skeleton(ops, seed=5)
        nf = ctx.nf
        gb = g.reshape(ctx.mesh.n_triangles, 3, nf)
        acc = 0.0
        for e in range(ctx.mesh.n_triangles):
            for loc in range(3):
                L = ctx.face_len[e, loc]
                psi = ctx.face_leg / np.sqrt(L)
                vals = gb[e, loc] @ psi
                acc += L * np.sum(ctx.face_w * np.abs(vals) ** 2)
        assert np.sqrt(acc) == pytest.approx(np.linalg.norm(g), rel=1e-12)


class TestEnergyIdentity:
    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_random_data(self, p):
        ctx, cfg, ops = make_ops(n=4, p=p, kappa=9.0)
        rng = np.random.default_rng(6)
        for e in rng.integers(0, ctx.mesh.n_triangles, size=6):
            s = rng.standard_normal(3 * ctx.nf) + 1j * rng.standard_normal(3 * ctx.nf)
            assert energy_identity_residual(ops, int(e), s) <= 1e-11

    def test_zero_data(self):
        ctx, cfg, ops = make_ops(n=2, p=1)
        assert energy_identity_residual(ops, 0, np.zeros(3 * ctx.nf)) == 0.0

    def test_scaling_invariance(self):
        ctx, cfg, ops = make_ops(n=3, p=2)
        rng = np.random.default_rng(7)
        s = rng.standard_normal(3 * ctx.nf) + 1j * rng.standard_normal(3 * ctx.nf)
        r1 = energy_identity_residual(ops, 1, s)
        r2 = energy_identity_residual(ops, 1, 100.0 * s)
        assert r2 == pytest.approx(r1, rel=1e-6, abs=1e-13)


class TestRhs:
    def test_zero_data(self):
        ctx, cfg, ops = make_ops(n=2, p=1, robin_data=None)
        assert np.abs(assemble_rhs_b(ctx, cfg)).max() == 0.0

    def test_constant_dirichlet_projection(self):
        # s_D = 1 on a face of length L projects to a single coefficient
        # 2*sqrt(L) on that block.
        ctx, cfg, ops = make_ops(
            n=2, p=2, tags=BoundaryTag.DIRICHLET,
            dirichlet_data=lambda pts, nrm: np.ones(pts.shape[0], complex),
        )
        b = assemble_rhs_b(ctx, cfg).reshape(ctx.mesh.n_triangles, 3, ctx.nf)
        for e in range(ctx.mesh.n_triangles):
            for loc in range(3):
                fid = ctx.mesh.elem_face[e, loc]
                blk = b[e, loc]
                if ctx.mesh.face_tags[fid] == BoundaryTag.DIRICHLET:
                    L = ctx.mesh.face_lengths[fid]
                    assert blk[0] == pytest.approx(2.0 * np.sqrt(L), rel=1e-12)
                    assert np.abs(blk[1:]).max() <= 1e-12
                else:
                    assert np.abs(blk).max() <= 1e-12

    def test_interior_blocks_vanish(self):
        ctx, cfg, ops = make_ops(n=3, p=2)
        b = assemble_rhs_b(ctx, cfg).reshape(-1, ctx.nf)
        interior = ops.layout.partner >= 0
        assert np.abs(b[interior]).max() == 0.0


class TestReducedSystem:
    def test_dof_count(self):
        assert ndof_chdg(614, 3) == 7368
        ctx, cfg, ops = make_ops(n=3, p=3)
        system = assemble_reduced_chdg(ctx, cfg, ops)
        assert system.n == ndof_chdg(ctx.mesh.n_triangles, 3)

    def test_matrix_free_matches_explicit(self):
        ctx, cfg, ops = make_ops(n=4, p=3, kappa=7.0)
        system = assemble_reduced_chdg(ctx, cfg, ops)
        g = random_skeleton(ops, seed=8)
        assert np.abs(apply_chdg_system(ops, g) - system.matrix @ g).max() <= 1e-13 * np.abs(g).max()

    def test_adjoint_consistency(self):
        ctx, cfg, ops = make_ops(n=3, p=2, kappa=5.0)
        system = assemble_reduced_chdg(ctx, cfg, ops)
        x = random_skeleton(ops, seed=9)
        y = random_skeleton(ops, seed=10)
        lhs = np.vdot(y, apply_chdg_system(ops, x))
        rhs = np.vdot(apply_chdg_system_adjoint(ops, y), x)
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)
        # matrix-free adjoint equals the explicit conjugate transpose
        ah = system.matrix.getH()
        assert np.abs(apply_chdg_system_adjoint(ops, y) - ah @ y).max() <= 1e-12 * np.abs(y).max()
        sg = scattering_apply(ops, x)
        assert abs(np.vdot(y, sg) - np.vdot(scattering_apply_adjoint(ops, y), x)) <= 1e-12 * abs(
            np.vdot(y, sg)
        )

    def test_fixed_point_residual(self):
        ctx, cfg, ops = make_ops(n=4, p=2)
        system = assemble_reduced_chdg(ctx, cfg, ops)
        g = direct_solve(system)
        res = apply_chdg_system(ops, g) - system.rhs
        assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(system.rhs)

    def test_nnz_bound_and_diagonal_identity(self):
        ctx, cfg, ops = make_ops(n=8, p=3)
        system = assemble_reduced_chdg(ctx, cfg, ops)
        nf = ctx.nf
        assert system.nnz <= ctx.mesh.n_faces * 8 * nf * nf
        # interior-row diagonal blocks carry exactly the identity
        dense = system.matrix.toarray()
        layout = ops.layout
        b = int(np.flatnonzero(layout.partner >= 0)[0])
        blk = dense[b * nf : (b + 1) * nf, b * nf : (b + 1) * nf]
        assert np.array_equal(blk, np.eye(nf, dtype=complex))

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_equivalence_with_dg(self, p):
        ctx, cfg, ops = make_ops(n=4, p=p)
        dg_sys = assemble_dg(ctx, cfg)
        x = spla.spsolve(dg_sys.matrix.tocsc(), dg_sys.rhs)
        f_dg = ElementFields.from_vector(x, ctx.mesh.n_triangles, ctx.nv)
        system = assemble_reduced_chdg(ctx, cfg, ops)
        f_chdg = reconstruct_chdg(ops, direct_solve(system))
        zero = ElementFields.zeros(ctx.mesh.n_triangles, ctx.nv)
        rel = field_error_norms(ctx, f_chdg, f_dg) / field_error_norms(ctx, f_dg, zero)
        assert rel <= 1e-8

    def test_equivalence_with_volume_source(self):
        kappa = 2.5
        ctx, cfg, ops = make_ops(
            n=4, p=2, kappa=kappa, tags=BoundaryTag.DIRICHLET,
            volume_source=lambda pts: np.full(pts.shape[0], 1j / kappa),
        )
        dg_sys = assemble_dg(ctx, cfg)
        x = spla.spsolve(dg_sys.matrix.tocsc(), dg_sys.rhs)
        f_dg = ElementFields.from_vector(x, ctx.mesh.n_triangles, ctx.nv)
        f_chdg = reconstruct_chdg(ops, direct_solve(assemble_reduced_chdg(ctx, cfg, ops)))
        zero = ElementFields.zeros(ctx.mesh.n_triangles, ctx.nv)
        rel = field_error_norms(ctx, f_chdg, f_dg) / field_error_norms(ctx, f_dg, zero)
        assert rel <= 1e-8

    def test_zero_skeleton_zero_fields(self):
        ctx, cfg, ops = make_ops(n=2, p=1, robin_data=None)
        fields = reconstruct_chdg(ops, np.zeros(ops.ndof, complex))
        assert np.abs(fields.coeffs).max() == 0.0


class TestSwapAgainstPointwiseTraces:
    def test_swap_matches_physical_trace_exchange(self):
        # Project a globally smooth function's incoming characteristics on
        # both sides of each interior face; the exchange of outgoing data
        # must equal the pointwise-evaluated neighbour trace.
        ctx, cfg, ops = make_ops(n=3, p=3)
        mesh = ctx.mesh
        rng = np.random.default_rng(11)
        coeffs = rng.standard_normal((mesh.n_triangles, 3, ctx.nv)) + 1j * rng.standard_normal(
            (mesh.n_triangles, 3, ctx.nv)
        )
        # outgoing characteristic coefficients per (element, face)
        g_out = np.zeros((mesh.n_triangles, 3, ctx.nf), dtype=complex)
        for e in range(mesh.n_triangles):
            for loc in range(3):
                tr = ctx.T[e, loc]
                n = ctx.normals[e, loc]
                vals = (
                    coeffs[e, 0] @ tr
                    + (coeffs[e, 1] @ tr) * n[0]
                    + (coeffs[e, 2] @ tr) * n[1]
                )
                L = ctx.face_len[e, loc]
                psi = ctx.face_leg / np.sqrt(L)
                g_out[e, loc] = L * (psi * ctx.face_w) @ vals
        swapped = exchange_apply(ops, g_out.reshape(-1)).reshape(mesh.n_triangles, 3, ctx.nf)
        interior = np.flatnonzero(~mesh.is_boundary_face)
        for fid in interior:
            (e1, l1), (e2, l2) = mesh.face_owners[fid]
            assert np.allclose(swapped[e1, l1], g_out[e2, l2], atol=1e-13)


class TestElementaryClosedForms:
    @pytest.mark.parametrize("kh", [0.1, 1.0, 2.0, 10.0])
    def test_square_element_cond(self, kh):
        h = 0.45
        mat = bench.chdg_square_element_matrix(kh / h, h)
        got = bench.spectral_condition_number(mat)
        assert got == pytest.approx(bench.chdg_square_cond_formula(kh), rel=1e-10)

    def test_cond_at_kh_2(self):
        mat = bench.chdg_square_element_matrix(2.0, 1.0)
        assert bench.spectral_condition_number(mat) == pytest.approx(np.sqrt(1.6), rel=1e-12)

    def test_small_kh_limit(self):
        assert bench.chdg_square_cond_formula(1e-8) == pytest.approx(2.0, rel=1e-6)

    def test_system_rhs_includes_source_exchange(self):
        kappa = 3.0
        ctx, cfg, ops = make_ops(
            n=2, p=1, kappa=kappa, tags=BoundaryTag.DIRICHLET,
            volume_source=lambda pts: np.full(pts.shape[0], 1j / kappa),
        )
        b_boundary = assemble_rhs_b(ctx, cfg)
        assert np.abs(b_boundary).max() == 0.0  # homogeneous walls
        b_full = system_rhs(ops, cfg)
        expected = exchange_apply(ops, ops.source_outgoing)
        assert np.allclose(b_full, expected, atol=1e-14)
        assert np.abs(b_full).max() > 0.0
