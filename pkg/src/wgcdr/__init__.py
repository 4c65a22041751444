"""Weak Galerkin finite elements for convection-diffusion-reaction on polygonal meshes."""

from .basis import EdgeBasis, ElementBasis, WgSpace, mass_matrix, project_Q0, project_Qb, project_Qr_vector
from .error_analysis import (
    ErrorReport,
    convergence_orders,
    energy_norm,
    h1_seminorm,
    project_exact,
    table_errors,
)
from .experiments import ExperimentConfig, benchmark_problem, run, sample_solution
from .mesh import MeshFamily, PolygonalMesh, element_edges, generate_mesh, read_mesh, validate, write_mesh
from .quadrature import QuadratureRule, edge_quadrature, polygon_quadrature, triangulate_polygon
from .weak_operators import WgDiscretization, check_commutation, local_weak_ops, weak_divergence, weak_gradient
from .wg_system import (
    ExactSolution,
    ModelProblem,
    assemble,
    local_matrix,
    solve,
    static_condense,
    upwind_partition,
)

__version__ = "0.1.0"
