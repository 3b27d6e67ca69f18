"""Constant-element boundary integral solver for the square domain.

Solves -lap(u) = f on [-1, 1]^2 with Dirichlet data g through the boundary
representation

    u(x) = int_G q G dGamma - int_G g dG/dn dGamma + int_O f G dOmega,

where q = du/dn is recovered first from the collocated boundary system

    G_bb q = (I/2 + D_bb) g - V,    V_i = int_O f G(x_i, .) dOmega.

The boundary carries straight constant elements collocated at midpoints
(no node sits on a corner).  Piecewise boundary integrals use the exact
antiderivatives of the log kernel whenever the evaluation point is within
twice the element length of the segment, and Gauss-Legendre quadrature
otherwise.  Volume integrals use one point per interior grid node with the
node's cell area as weight and the smoothed kernel, and are evaluated with
the fast tree sum; they dominate the runtime, everything else is small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .fem import grid_from_h
from .fmm import fmm_evaluate
from .kernels import INV_TWO_PI, FmmConfig

__all__ = [
    "BoundaryElement",
    "BoundaryMesh",
    "VolumeSourceGrid",
    "BemOperators",
    "build_boundary_mesh",
    "single_layer_entry",
    "double_layer_entry",
    "assemble_bem",
    "solve_boundary_flux",
    "evaluate_interior",
    "bem_poisson_solve",
]

# analytic antiderivatives take over within this many element lengths
NEAR_FACTOR = 2.0


@dataclass(frozen=True)
class BoundaryElement:
    """One straight element with midpoint collocation."""

    first: tuple[float, float]
    second: tuple[float, float]
    midpoint: tuple[float, float]
    normal: tuple[float, float]
    length: float


class BoundaryMesh:
    """Constant elements tiling the boundary of [-1, 1]^2 counterclockwise."""

    def __init__(self, first, second, midpoint, tangent, normal, length,
                 n_per_side):
        self.first = first
        self.second = second
        self.midpoint = midpoint
        self.tangent = tangent
        self.normal = normal
        self.length = length
        self.n_per_side = n_per_side

    @property
    def n_elements(self) -> int:
        return self.midpoint.shape[0]

    @property
    def total_length(self) -> float:
        return float(self.length.sum())

    def element(self, i: int) -> BoundaryElement:
        return BoundaryElement(
            first=tuple(self.first[i]),
            second=tuple(self.second[i]),
            midpoint=tuple(self.midpoint[i]),
            normal=tuple(self.normal[i]),
            length=float(self.length[i]),
        )


def build_boundary_mesh(n_per_side: int) -> BoundaryMesh:
    """Split each side of the square into ``n_per_side`` equal elements."""
    if n_per_side < 1:
        raise ValueError("n_per_side must be >= 1")
    n = n_per_side
    t = np.linspace(-1.0, 1.0, n + 1)
    sides = (
        # (first points), tangent, normal
        (np.column_stack((t[:-1], np.full(n, -1.0))), (1.0, 0.0), (0.0, -1.0)),
        (np.column_stack((np.full(n, 1.0), t[:-1])), (0.0, 1.0), (1.0, 0.0)),
        (np.column_stack((t[::-1][:-1], np.full(n, 1.0))), (-1.0, 0.0), (0.0, 1.0)),
        (np.column_stack((np.full(n, -1.0), t[::-1][:-1])), (0.0, -1.0), (-1.0, 0.0)),
    )
    length = 2.0 / n
    first, second, tangent, normal = [], [], [], []
    for pts, tau, nrm in sides:
        first.append(pts)
        second.append(pts + length * np.asarray(tau))
        tangent.append(np.tile(tau, (n, 1)))
        normal.append(np.tile(nrm, (n, 1)))
    first = np.concatenate(first)
    second = np.concatenate(second)
    tangent = np.concatenate(tangent)
    normal = np.concatenate(normal)
    return BoundaryMesh(
        first=first,
        second=second,
        midpoint=0.5 * (first + second),
        tangent=tangent,
        normal=normal,
        length=np.full(4 * n, length),
        n_per_side=n,
    )


@dataclass(frozen=True)
class VolumeSourceGrid:
    """Interior quadrature nodes with per-node weights and source values."""

    nodes: np.ndarray    # (m, 2)
    weights: np.ndarray  # (m,)
    values: np.ndarray   # (m,)

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise ValueError("volume weights must be positive")
        if self.weights.sum() > 4.0 + 1e-9:
            raise ValueError("volume weights exceed the domain area")

    @property
    def strengths(self) -> np.ndarray:
        return self.values * self.weights


def _target_geometry(mesh: BoundaryMesh, targets: np.ndarray):
    """Tangential offset s and signed normal distance d, shape (nt, ne)."""
    rx = targets[:, 0:1] - mesh.midpoint[None, :, 0]
    ry = targets[:, 1:2] - mesh.midpoint[None, :, 1]
    s = rx * mesh.tangent[None, :, 0] + ry * mesh.tangent[None, :, 1]
    d = rx * mesh.normal[None, :, 0] + ry * mesh.normal[None, :, 1]
    return s, d


def _near_mask(mesh, s, d):
    half = 0.5 * mesh.length[None, :]
    along = np.maximum(np.abs(s) - half, 0.0)
    seg_dist = np.hypot(along, d)
    return seg_dist < NEAR_FACTOR * mesh.length[None, :]


def _single_layer_analytic(sv, dv, length):
    """Exact int log|x - y| over the segment, per flattened (s, d) pairs."""
    a = -0.5 * length - sv
    b = 0.5 * length - sv

    def antideriv(w):
        r2 = w * w + dv * dv
        with np.errstate(divide="ignore", invalid="ignore"):
            wlog = np.where(r2 > 0.0, 0.5 * w * np.log(r2), 0.0)
            datan = np.where(dv != 0.0, dv * np.arctan(w / np.where(dv != 0.0, dv, 1.0)), 0.0)
        return wlog - w + datan

    return antideriv(b) - antideriv(a)


def _double_layer_analytic(sv, dv, length):
    """Exact int d/dn log-kernel over the segment; zero in-plane (d == 0)."""
    a = -0.5 * length - sv
    b = 0.5 * length - sv
    safe = np.where(dv != 0.0, dv, 1.0)
    return np.where(dv != 0.0,
                    np.arctan(b / safe) - np.arctan(a / safe), 0.0)


def _layer_blocks(mesh, targets, q, want_single=True, want_double=True):
    """Single/double layer matrices for all (target, element) pairs.

    Gauss-Legendre of order ``q`` far from an element, exact antiderivatives
    within NEAR_FACTOR element lengths.  Entries follow the kernel
    -log(r)/(2 pi) and its normal derivative at the source point.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    s, d = _target_geometry(mesh, targets)
    near = _near_mask(mesh, s, d)
    gl_x, gl_w = np.polynomial.legendre.leggauss(q)
    half = 0.5 * mesh.length[None, :]

    single = None
    double = None
    if want_single:
        single = np.zeros(s.shape)
    if want_double:
        double = np.zeros(s.shape)
    for xi, wi in zip(gl_x, gl_w):
        # quadrature point offset along the element: t = xi * L/2
        w_off = s - xi * half
        r2 = w_off * w_off + d * d
        if want_single:
            single += (0.5 * wi) * np.log(r2)
        if want_double:
            double += wi * (d / r2)
    if want_single:
        single *= half
        sv = s[near]
        dv = d[near]
        ln = np.broadcast_to(mesh.length[None, :], s.shape)[near]
        single[near] = _single_layer_analytic(sv, dv, ln)
        single *= -INV_TWO_PI
    if want_double:
        double *= half
        sv = s[near]
        dv = d[near]
        ln = np.broadcast_to(mesh.length[None, :], s.shape)[near]
        double[near] = _double_layer_analytic(sv, dv, ln)
        double *= INV_TWO_PI
    return single, double


def single_layer_entry(mesh: BoundaryMesh, j: int, x, q: int = 4) -> float:
    """int over element j of -log|x - y| / (2 pi) dGamma(y)."""
    if q < 1:
        raise ValueError("quadrature order must be >= 1")
    sub = _submesh(mesh, j)
    single, _ = _layer_blocks(sub, np.asarray([x], dtype=float), q,
                              want_double=False)
    return float(single[0, 0])


def double_layer_entry(mesh: BoundaryMesh, j: int, x, q: int = 4) -> float:
    """int over element j of d/dn_y [-log|x - y| / (2 pi)] dGamma(y)."""
    if q < 1:
        raise ValueError("quadrature order must be >= 1")
    sub = _submesh(mesh, j)
    _, double = _layer_blocks(sub, np.asarray([x], dtype=float), q,
                              want_single=False)
    return float(double[0, 0])


def _submesh(mesh: BoundaryMesh, j: int) -> BoundaryMesh:
    sl = slice(j, j + 1)
    return BoundaryMesh(mesh.first[sl], mesh.second[sl], mesh.midpoint[sl],
                        mesh.tangent[sl], mesh.normal[sl], mesh.length[sl],
                        mesh.n_per_side)


@dataclass
class BemOperators:
    """Dense collocated boundary operators and a reusable factorization."""

    g_bb: np.ndarray
    h_bb: np.ndarray
    lu: tuple
    mesh: BoundaryMesh
    quad_order: int

    def solve_single_layer(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.lu, rhs)


def assemble_bem(mesh: BoundaryMesh, q: int = 4) -> BemOperators:
    """Collocate the single and double layer operators at the midpoints.

    ``h_bb`` is I/2 + D_bb with a vanishing double-layer self term (flat
    elements).  The single-layer matrix is factorized once for reuse.
    """
    single, double = _layer_blocks(mesh, mesh.midpoint, q)
    h_bb = double + 0.5 * np.eye(mesh.n_elements)
    try:
        lu = sla.lu_factor(single)
    except sla.LinAlgError as exc:
        raise ValueError("degenerate boundary system") from exc
    if not np.all(np.isfinite(lu[0])) or np.any(np.diag(lu[0]) == 0.0):
        raise ValueError("degenerate boundary system")
    return BemOperators(g_bb=single, h_bb=h_bb, lu=lu, mesh=mesh,
                        quad_order=q)


def _volume_potential(volume: VolumeSourceGrid | None, targets,
                      config: FmmConfig) -> np.ndarray:
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if volume is None or not np.any(volume.values):
        return np.zeros(targets.shape[0])
    return fmm_evaluate(volume.nodes, volume.strengths, targets, config)


def solve_boundary_flux(ops: BemOperators, u_gamma, volume, config) -> np.ndarray:
    """Normal flux du/dn at the collocation nodes for given boundary data."""
    u_gamma = np.asarray(u_gamma, dtype=float)
    rhs = ops.h_bb @ u_gamma
    rhs -= _volume_potential(volume, ops.mesh.midpoint, config)
    return ops.solve_single_layer(rhs)


def evaluate_interior(ops: BemOperators, mesh: BoundaryMesh, u_gamma, flux,
                      volume, targets, config,
                      chunk: int = 4096) -> np.ndarray:
    """Potential at interior targets from boundary densities plus sources.

    Boundary sums are dense matrix-vector products over the layer entries
    (built in target chunks and discarded); the volume sum is the
    tree-accelerated smoothed kernel.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    u_gamma = np.asarray(u_gamma, dtype=float)
    flux = np.asarray(flux, dtype=float)
    need_double = bool(np.any(u_gamma))
    out = np.zeros(targets.shape[0])
    for s in range(0, targets.shape[0], chunk):
        e = min(s + chunk, targets.shape[0])
        single, double = _layer_blocks(mesh, targets[s:e], ops.quad_order,
                                       want_double=need_double)
        out[s:e] = single @ flux
        if need_double:
            out[s:e] -= double @ u_gamma
    out += _volume_potential(volume, targets, config)
    return out


def bem_poisson_solve(f_nodes, g_mid, h: float, config: FmmConfig,
                      quad_order: int = 4) -> np.ndarray:
    """Solve the Dirichlet problem on the grid labelled ``h``.

    ``f_nodes`` holds the forcing at the interior grid nodes, ``g_mid`` the
    boundary data at the element midpoints (one element per boundary grid
    edge).  Returns the potential at the interior nodes.
    """
    geom = grid_from_h(h)
    mesh = build_boundary_mesh(geom.n_elements)
    nodes = geom.interior_nodes()
    f_nodes = np.asarray(f_nodes, dtype=float)
    if f_nodes.size != nodes.shape[0]:
        raise ValueError("forcing vector does not match the interior grid")
    volume = VolumeSourceGrid(
        nodes=nodes,
        weights=np.full(nodes.shape[0], geom.dx ** 2),
        values=f_nodes,
    )
    ops = assemble_bem(mesh, quad_order)
    flux = solve_boundary_flux(ops, g_mid, volume, config)
    return evaluate_interior(ops, mesh, g_mid, flux, volume, nodes, config)
