"""
Boundary layers at small diffusion
==================================

Solve the boundary-layer problem with ``rho = 1e-9`` on a square grid and
check that the upwind scheme does not overshoot.
"""

####################################################################
# Solve
# -----

from wgcdr.error_analysis import table_errors
from wgcdr.experiments import ExperimentConfig, sample_solution, solve_case

config = ExperimentConfig(family="square", levels=(5,), k=1, rho=(1e-9,), solution="u2")
solution, problem = solve_case(config, 5, 1e-9)
errors = table_errors(solution, problem)
print(f"l2 error {errors.l2_error:.3e}, residual {errors.residual:.1e}")

####################################################################
# Sample the interior values
# --------------------------
# The exact solution lies in ``[0, 1]``, so ``max |u0|`` close to one
# means the layer is resolved without spurious oscillation.

samples = sample_solution(solution, resolution=4)
print(f"max |u0| = {samples.max_abs_interior:.4f}")
