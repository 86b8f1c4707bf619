"""Finite elements for the fractional Laplacian on planar domains."""

from .analytic import (convergence_study, eigenvalue_lambda, energy_error, exact_pair,
                       integral_fu, jacobi, l2_error)
from .assembly import StiffnessSystem, assemble, load_element, load_vector, normalization_constant
from .errors import (FraclapError, MemoryBudgetError, MeshFormatError, MeshValidationError,
                     NumericalError, ValidationError)
from .kernels import (complement_block, edge_block, identical_block, nontouching_block,
                      psi_complement, vertex_block)
from .mesh import (Mesh, build_patches, classify_all_against, classify_pair, generate_disk_mesh,
                   load_mesh, save_mesh)
from .quadtables import QuadTables, build_tables, gauss_legendre_01, triangle_rules
from .solver import Solution, solve

__version__ = "0.1.0"
