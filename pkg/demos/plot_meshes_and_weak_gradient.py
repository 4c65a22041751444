"""
Polygonal meshes and the weak gradient
======================================

Build the three mesh families, check them and see how the weak gradient
reproduces the L2 projection of a true gradient.
"""

####################################################################
# Mesh families
# -------------
# Level ``n`` uses ``2**n`` cells per side of the default domain ``(-1, 1)^2``.

import numpy as np

from wgcdr import MeshFamily, WgSpace, generate_mesh, validate
from wgcdr.mesh import FAMILIES

for fam in FAMILIES:
    mesh = generate_mesh(MeshFamily(fam, 3))
    convex = np.mean(mesh.element_convex())
    print(f"{fam:>10}: {mesh.n_elements} elements, {mesh.n_edges} edges, "
          f"h = {mesh.mesh_size:.3f}, convex fraction {convex:.2f}, "
          f"violations {validate(mesh)}")

####################################################################
# Weak gradient of a polynomial
# -----------------------------
# For ``u`` in ``P_{r+1}`` the weak gradient of ``Q_h u`` equals ``grad u``
# up to round-off on every element, convex or not.

from wgcdr.experiments import commutation_defect


def u(x, y):
    return x ** 3 * y - y ** 2


def grad_u(x, y):
    return 3 * x ** 2 * y, x ** 3 - 2 * y


mesh = generate_mesh(MeshFamily("nonconvex", 2))
print("max relative commutation residual:",
      commutation_defect(mesh, WgSpace(2, r=4), u, grad_u))
