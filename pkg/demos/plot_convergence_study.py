"""
Convergence on triangular meshes
================================

Sweep levels 3 to 5 for the smooth solution with ``k = 1`` and print the
error table with observed orders.
"""

####################################################################
# Configure and run
# -----------------
# ``write=False`` keeps the study in memory.

from wgcdr.experiments import ExperimentConfig, run

config = ExperimentConfig(family="triangular", levels=(3, 4, 5), k=1, rho=(1.0, 1e-6))
report = run(config, write=False)

####################################################################
# Results
# -------
# Expect L2 orders near 2 and weighted gradient orders near 1.

print(report.to_markdown())
for rho in config.rho:
    print(rho, report.orders(rho, "l2"), report.orders(rho, "grad"))
