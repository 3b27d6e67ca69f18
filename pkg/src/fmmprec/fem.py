"""Sparse Q1 finite element test systems on the square [-1, 1]^2.

Poisson systems for three classic reference problems and a stabilized
Q1-P0 discretization of the leaky lid-driven cavity Stokes problem.

Grids are labelled by the customary mesh parameter ``h``: the grid with
label ``h = 2**-l`` has ``1/h`` square elements per side, i.e. a node
spacing of ``2*h`` on the domain of width 2.  (The label halves when the
grid is refined, exactly like the spacing.)  All assembled operators
eliminate the Dirichlet boundary: matrices act on interior nodes only and
the boundary data is folded into the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridGeometry",
    "PoissonProblem",
    "SaddleSystem",
    "grid_from_h",
    "poisson_problem",
    "assemble_poisson_q1",
    "assemble_stokes_q1p0",
    "pressure_mass_diag",
]


@dataclass(frozen=True)
class GridGeometry:
    """Uniform square grid on [-1, 1]^2."""

    h: float
    n_elements: int   # elements per side
    dx: float         # node spacing, 2 / n_elements

    @property
    def n_interior(self) -> int:
        """Interior nodes per side."""
        return self.n_elements - 1

    def interior_nodes(self) -> np.ndarray:
        """Coordinates of interior nodes, shape (m*m, 2), x index fastest."""
        m = self.n_interior
        t = -1.0 + self.dx * np.arange(1, m + 1)
        xx, yy = np.meshgrid(t, t, indexing="xy")
        return np.column_stack((xx.ravel(), yy.ravel()))


def grid_from_h(h: float) -> GridGeometry:
    n = round(1.0 / h)
    if n < 2 or abs(n * h - 1.0) > 1e-12 or n & (n - 1):
        raise ValueError("h must be 2**-l with l >= 1")
    return GridGeometry(h=h, n_elements=n, dx=2.0 / n)


@dataclass(frozen=True)
class PoissonProblem:
    """One member of the reference Poisson family -lap(u) = f, u = g on
    the boundary."""

    pid: str
    h: float
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    u_exact: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]]

    @property
    def grid(self) -> GridGeometry:
        return grid_from_h(self.h)


def _u_harmonic(x, y):
    return 2.0 * (1.0 + y) / ((3.0 + x) ** 2 + (1.0 + y) ** 2)


def _u_paraboloid(x, y):
    return x ** 2 + y ** 2


_PROBLEMS = {
    # constant forcing, homogeneous boundary
    "p1": (lambda x, y: np.ones_like(x), lambda x, y: np.zeros_like(x), None),
    # harmonic solution, inhomogeneous boundary
    "p2": (lambda x, y: np.zeros_like(x), _u_harmonic, _u_harmonic),
    # u = x^2 + y^2, forcing -4
    "p3": (lambda x, y: np.full_like(x, -4.0), _u_paraboloid, _u_paraboloid),
}


def poisson_problem(pid: str, h: float) -> PoissonProblem:
    if pid not in _PROBLEMS:
        raise ValueError(f"unknown problem id {pid!r} (use p1, p2 or p3)")
    f, g, u_exact = _PROBLEMS[pid]
    grid_from_h(h)  # validate early
    return PoissonProblem(pid=pid, h=h, f=f, g=g, u_exact=u_exact)


def _stiffness_mass_1d(n: int):
    """Assembled 1-D P1 stiffness and mass factors on n elements.

    The element size cancels out of the 2-D Q1 stiffness, so both factors
    are returned unscaled (stiffness tridiag(-1, 2, -1), mass
    tridiag(1, 4, 1) / 6, boundary rows halved).
    """
    d = np.full(n + 1, 2.0)
    d[0] = d[-1] = 1.0
    k1 = sp.diags([-np.ones(n), d, -np.ones(n)], [-1, 0, 1], format="csr")
    dm = np.full(n + 1, 4.0)
    dm[0] = dm[-1] = 2.0
    m1 = sp.diags([np.ones(n), dm, np.ones(n)], [-1, 0, 1], format="csr") / 6.0
    return k1, m1


def _q1_stiffness_full(n: int) -> sp.csr_matrix:
    """Q1 stiffness over all (n+1)^2 nodes of an n x n square grid."""
    k1, m1 = _stiffness_mass_1d(n)
    return (sp.kron(k1, m1) + sp.kron(m1, k1)).tocsr()


def _interior_mask(n: int) -> np.ndarray:
    ix, iy = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    return ((ix.ravel() > 0) & (ix.ravel() < n)
            & (iy.ravel() > 0) & (iy.ravel() < n))


def _node_coords(n: int):
    t = np.linspace(-1.0, 1.0, n + 1)
    xx, yy = np.meshgrid(t, t, indexing="xy")
    return xx.ravel(), yy.ravel()


def _load_vector(geom: GridGeometry, f) -> np.ndarray:
    """Nodal load integrals of f against Q1 basis, 2x2 Gauss per element."""
    n = geom.n_elements
    dx = geom.dx
    gp = 1.0 / np.sqrt(3.0)
    # reference coordinates in [0, 1]
    pts = [(0.5 * (1 + sx * gp), 0.5 * (1 + sy * gp))
           for sy in (-1, 1) for sx in (-1, 1)]
    ex, ey = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ex = ex.ravel()
    ey = ey.ravel()
    x0 = -1.0 + dx * ex
    y0 = -1.0 + dx * ey
    b = np.zeros((n + 1) * (n + 1))
    w = 0.25 * dx * dx  # gauss weight 1/4 of the element area each
    corners = ((0, 0), (1, 0), (1, 1), (0, 1))
    for xi, eta in pts:
        fx = f(x0 + dx * xi, y0 + dx * eta)
        shapes = {
            (0, 0): (1 - xi) * (1 - eta),
            (1, 0): xi * (1 - eta),
            (1, 1): xi * eta,
            (0, 1): (1 - xi) * eta,
        }
        for (cx, cy) in corners:
            node = (ey + cy) * (n + 1) + (ex + cx)
            np.add.at(b, node, w * shapes[(cx, cy)] * fx)
    return b


def assemble_poisson_q1(problem: PoissonProblem):
    """Assemble the interior stiffness matrix and right-hand side.

    Returns ``(A, b)`` with ``A`` symmetric positive definite CSR over the
    interior nodes (x index fastest) and the Dirichlet data eliminated
    into ``b``.
    """
    geom = problem.grid
    n = geom.n_elements
    a_full = _q1_stiffness_full(n)
    interior = _interior_mask(n)
    idx_int = np.flatnonzero(interior)
    idx_bdry = np.flatnonzero(~interior)

    b = _load_vector(geom, problem.f)
    x, y = _node_coords(n)
    gb = problem.g(x[idx_bdry], y[idx_bdry])
    b_int = b[idx_int] - a_full[idx_int][:, idx_bdry] @ gb
    a_int = a_full[idx_int][:, idx_int].tocsr()
    a_int.sort_indices()
    return a_int, b_int


def pressure_mass_diag(h: float) -> np.ndarray:
    """Diagonal of the P0 pressure mass matrix: one element area per cell."""
    geom = grid_from_h(h)
    return np.full(geom.n_elements ** 2, geom.dx ** 2)


@dataclass
class SaddleSystem:
    """Stabilized Q1-P0 Stokes system [[A, B^T], [B, -C]] [u; p] = rhs.

    Velocity unknowns are the interior nodes, component-major (all u_x
    then all u_y); pressures are one per element.
    """

    a: sp.csr_matrix
    b: sp.csr_matrix
    c: sp.csr_matrix
    rhs: np.ndarray
    geom: GridGeometry

    @property
    def n_velocity(self) -> int:
        return self.a.shape[0]

    @property
    def n_component(self) -> int:
        return self.a.shape[0] // 2

    @property
    def n_pressure(self) -> int:
        return self.c.shape[0]

    def full_matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.a, self.b.T], [self.b, -self.c]],
                       format="csr")


def assemble_stokes_q1p0(h: float, beta: float = 0.25) -> SaddleSystem:
    """Assemble the leaky lid-driven cavity at mesh parameter ``h``.

    The lid velocity (1, 0) is imposed on the whole top edge, corners
    included; all other boundary velocities vanish.  ``beta`` scales the
    macroelement pressure-jump stabilization.
    """
    geom = grid_from_h(h)
    n = geom.n_elements
    dx = geom.dx
    if n % 2:
        raise ValueError("stabilization needs an even number of elements")

    k_full = _q1_stiffness_full(n)
    interior = _interior_mask(n)
    idx_int = np.flatnonzero(interior)
    idx_bdry = np.flatnonzero(~interior)
    nc = idx_int.size

    # boundary data: u_x = 1 on the top row (leaky), zero elsewhere
    _, yb = _node_coords(n)
    ub_x = (yb[idx_bdry] == 1.0).astype(float)

    k_int = k_full[idx_int][:, idx_int].tocsr()
    a = sp.block_diag((k_int, k_int), format="csr")
    f_x = -k_full[idx_int][:, idx_bdry] @ ub_x
    rhs_u = np.concatenate((f_x, np.zeros(nc)))

    # divergence coupling: B[e, dof] = -int_e d(phi_dof)/dx_c
    node_to_int = -np.ones((n + 1) * (n + 1), dtype=np.int64)
    node_to_int[idx_int] = np.arange(nc)
    full_ub = np.zeros((n + 1) * (n + 1))
    full_ub[idx_bdry] = ub_x

    ex, ey = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ex = ex.ravel()
    ey = ey.ravel()
    elem = np.arange(n * n)
    # corner order SW, SE, NE, NW; +-dx/2 divergence integrals per corner
    corner_nodes = [
        (ey) * (n + 1) + ex,
        (ey) * (n + 1) + ex + 1,
        (ey + 1) * (n + 1) + ex + 1,
        (ey + 1) * (n + 1) + ex,
    ]
    coef_x = np.array([-0.5, 0.5, 0.5, -0.5]) * dx
    coef_y = np.array([-0.5, -0.5, 0.5, 0.5]) * dx

    rows, cols, vals = [], [], []
    rhs_p = np.zeros(n * n)
    for corner in range(4):
        node = corner_nodes[corner]
        loc = node_to_int[node]
        have = loc >= 0
        for comp, coef in ((0, coef_x[corner]), (1, coef_y[corner])):
            rows.append(elem[have])
            cols.append(loc[have] + comp * nc)
            vals.append(np.full(have.sum(), -coef))
        # eliminated boundary x-velocity contributes to the pressure rhs
        rhs_p += coef_x[corner] * full_ub[node]
    b = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * n, 2 * nc),
    ).tocsr()

    # jump stabilization on 2x2 macroelements (4-cycle graph Laplacian)
    jring = np.array([
        [2.0, -1.0, 0.0, -1.0],
        [-1.0, 2.0, -1.0, 0.0],
        [0.0, -1.0, 2.0, -1.0],
        [-1.0, 0.0, -1.0, 2.0],
    ])
    mx, my = np.meshgrid(np.arange(n // 2), np.arange(n // 2), indexing="xy")
    mx = 2 * mx.ravel()
    my = 2 * my.ravel()
    macro = np.stack([
        my * n + mx,
        my * n + mx + 1,
        (my + 1) * n + mx + 1,
        (my + 1) * n + mx,
    ])
    crows, ccols, cvals = [], [], []
    for i in range(4):
        for j in range(4):
            if jring[i, j] == 0.0:
                continue
            crows.append(macro[i])
            ccols.append(macro[j])
            cvals.append(np.full(macro.shape[1], beta * dx * dx * jring[i, j]))
    c = sp.coo_matrix(
        (np.concatenate(cvals), (np.concatenate(crows), np.concatenate(ccols))),
        shape=(n * n, n * n),
    ).tocsr()

    rhs = np.concatenate((rhs_u, rhs_p))
    return SaddleSystem(a=a, b=b, c=c, rhs=rhs, geom=geom)
