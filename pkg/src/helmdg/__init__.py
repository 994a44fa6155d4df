"""Upwind DG solver for the 2D time-harmonic Helmholtz system.

The package discretizes the first-order system (-i*kappa*u + div q = f,
-i*kappa*q + grad u = 0) with upwind fluxes on triangles and offers two
hybridizations of the same discretization: static condensation onto the
numerical trace of u (``hybrid_hdg``) and onto incoming characteristic
variables (``hybrid_chdg``), whose reduced system (I - Pi S) g = b is a
fixed-point problem with a strictly contractive iteration operator.
"""

from .basis import FaceBasis, VolumeBasis, make_face_basis, make_volume_basis
from .bench import (
    BenchmarkCase,
    ErrorEvaluator,
    RunRecord,
    SpectrumReport,
    make_benchmark,
    prepare_workspace,
    reference_cavity,
    reference_plane_wave,
    reference_waveguide_oracle,
    relative_error,
    run_benchmark,
    spectral_radius,
)
from .dg_core import (
    ElementContext,
    ElementFields,
    ProblemConfig,
    SparseSystem,
    assemble_dg,
    evaluate_solution,
)
from .hybrid_chdg import (
    ChdgOperators,
    apply_chdg_system,
    assemble_reduced_chdg,
    assemble_rhs_b,
    exchange_apply,
    factorize_local_chdg,
    reconstruct_chdg,
    scattering_apply,
)
from .hybrid_hdg import (
    HdgLocalFactors,
    assemble_reduced_hdg,
    factorize_local_hdg,
    reconstruct_hdg,
)
from .mesh import (
    BoundaryTag,
    TriangleMesh,
    generate_rectangle,
    generate_structured_unit_square,
    read_mesh_file,
    validate,
    write_mesh_file,
)
from .solvers import SolveReport, cgn, direct_solve, gmres, richardson

__version__ = "0.1.0"

__all__ = [
    "BenchmarkCase",
    "BoundaryTag",
    "ChdgOperators",
    "ElementContext",
    "ElementFields",
    "ErrorEvaluator",
    "FaceBasis",
    "HdgLocalFactors",
    "ProblemConfig",
    "RunRecord",
    "SolveReport",
    "SparseSystem",
    "SpectrumReport",
    "TriangleMesh",
    "VolumeBasis",
    "apply_chdg_system",
    "assemble_dg",
    "assemble_reduced_chdg",
    "assemble_reduced_hdg",
    "assemble_rhs_b",
    "cgn",
    "direct_solve",
    "evaluate_solution",
    "exchange_apply",
    "factorize_local_chdg",
    "factorize_local_hdg",
    "generate_rectangle",
    "generate_structured_unit_square",
    "gmres",
    "make_benchmark",
    "make_face_basis",
    "make_volume_basis",
    "prepare_workspace",
    "read_mesh_file",
    "reconstruct_chdg",
    "reconstruct_hdg",
    "reference_cavity",
    "reference_plane_wave",
    "reference_waveguide_oracle",
    "relative_error",
    "richardson",
    "run_benchmark",
    "scattering_apply",
    "spectral_radius",
    "validate",
    "write_mesh_file",
]
