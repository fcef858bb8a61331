"""Conforming Q1 (bilinear) finite elements on square cells."""
from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

__all__ = [
    "q1_cell_stiffness",
    "q1_cell_mass",
    "assemble_local",
    "assemble_global",
    "load_vector",
    "dump_matrix",
]

# corner order: (0,0), (1,0), (1,1), (0,1)
_K_REF = np.array([[4.0, -1.0, -2.0, -1.0],
                   [-1.0, 4.0, -1.0, -2.0],
                   [-2.0, -1.0, 4.0, -1.0],
                   [-1.0, -2.0, -1.0, 4.0]]) / 6.0
_M_REF = np.array([[4.0, 2.0, 1.0, 2.0],
                   [2.0, 4.0, 2.0, 1.0],
                   [1.0, 2.0, 4.0, 2.0],
                   [2.0, 1.0, 2.0, 4.0]]) / 36.0


def q1_cell_stiffness(a_c, h=1.0):
    """Exact ``a_c * grad(phi_i) . grad(phi_j)`` integrals on an h-by-h cell.

    In two dimensions the result does not depend on ``h``.
    """
    return a_c * _K_REF


def q1_cell_mass(h):
    return h * h * _M_REF


def _scatter(cell_nodes, blocks, n):
    rows = np.repeat(cell_nodes, 4, axis=1).ravel()
    cols = np.tile(cell_nodes, (1, 4)).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(n, n))


def assemble_local(grid, a_cells, h, mass=True):
    """Stiffness (and mass) on a :class:`LocalGrid` with cell values ``a_cells``."""
    cn = grid.cell_nodes
    a_cells = np.asarray(a_cells, dtype=float)
    K = _scatter(cn, a_cells[:, None, None] * _K_REF, grid.n_nodes)
    if not mass:
        return K
    M = _scatter(cn, np.broadcast_to(q1_cell_mass(h), (len(cn), 4, 4)), grid.n_nodes)
    return K, M


def assemble_global(fine, field, dirichlet=True):
    """Global stiffness and mass matrices.

    With ``dirichlet`` the rows and columns of boundary nodes are removed,
    leaving operators on ``fine.free_nodes``.
    """
    field.check(fine)
    K, M = assemble_local(fine.grid, field.values, fine.h)
    if dirichlet:
        free = fine.free_nodes
        K = K[free][:, free].tocsr()
        M = M[free][:, free].tocsr()
    return K, M


def load_vector(f_nodal, mass):
    """L2 pairing of the nodal interpolant of a source with every hat function."""
    return mass @ np.asarray(f_nodal, dtype=float)


def dump_matrix(path, A, comment=""):
    """Write a sparse or dense matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
