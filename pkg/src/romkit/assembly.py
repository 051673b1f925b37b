"""Structured P1 finite elements on the unit square.

Builds the uniform criss-cross-free triangulation (two triangles per cell,
bottom-left to top-right diagonal), tags the boundary, partitions the square
into BxB conductivity blocks, and assembles the parameter-independent
stiffness blocks and the base-edge load with the top-edge (Dirichlet)
degrees of freedom eliminated.

Node ordering is lexicographic by (row, column), i.e. node = iy*(n+1) + ix,
and the free-dof ordering inherits it; this keeps binary artifacts
reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError


@dataclass
class Mesh:
    """Uniform triangulation of the unit square with block/boundary tags."""

    n: int
    B: int
    nodes: np.ndarray          # (n_nodes, 2) coordinates
    triangles: np.ndarray      # (2*n*n, 3) node indices, counterclockwise
    triangle_block: np.ndarray  # (2*n*n,) block index in 1..B*B, row-major
    boundary_tags: dict = field(default_factory=dict)  # tag -> node indices

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_blocks(self):
        return self.B * self.B


@dataclass
class DofMap:
    """Free (non-Dirichlet) degrees of freedom, in node order."""

    free: np.ndarray   # node indices of free dofs
    n_free: int
    full_to_free: np.ndarray  # node index -> free index, -1 for constrained


def build_mesh(n: int, B: int) -> Mesh:
    """Triangulate the unit square with ``n`` cells per side and a BxB block map."""
    if n < 1 or B < 1:
        raise ConfigurationError(f"n and B must be >= 1, got n={n}, B={B}")
    if n % B != 0:
        raise ConfigurationError(f"B must divide n, got n={n}, B={B}")

    k = n + 1
    xs = np.linspace(0.0, 1.0, k)
    gx, gy = np.meshgrid(xs, xs)  # gy varies along axis 0 (rows)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangle_block = np.empty(2 * n * n, dtype=np.int64)
    cells_per_block = n // B
    t = 0
    for cy in range(n):
        for cx in range(n):
            ll = cy * k + cx
            lr = ll + 1
            ul = ll + k
            ur = ul + 1
            block = (cy // cells_per_block) * B + (cx // cells_per_block) + 1
            triangles[t] = (ll, lr, ur)
            triangles[t + 1] = (ll, ur, ul)
            triangle_block[t] = block
            triangle_block[t + 1] = block
            t += 2

    node_ids = np.arange(k * k)
    boundary_tags = {
        "base": node_ids[:k].copy(),
        "top": node_ids[-k:].copy(),
        "left": node_ids[::k].copy(),
        "right": node_ids[k - 1 :: k].copy(),
    }
    return Mesh(n=n, B=B, nodes=nodes, triangles=triangles,
                triangle_block=triangle_block, boundary_tags=boundary_tags)


def build_dofmap(mesh: Mesh) -> DofMap:
    """Eliminate the top-edge (Dirichlet) nodes, keeping node order."""
    constrained = np.zeros(mesh.n_nodes, dtype=bool)
    constrained[mesh.boundary_tags["top"]] = True
    free = np.flatnonzero(~constrained)
    full_to_free = np.full(mesh.n_nodes, -1, dtype=np.int64)
    full_to_free[free] = np.arange(free.size)
    return DofMap(free=free, n_free=free.size, full_to_free=full_to_free)


def _local_stiffness(coords):
    """Exact P1 stiffness of one triangle (vertex coordinates (3, 2))."""
    x = coords[:, 0]
    y = coords[:, 1]
    # gradients of the barycentric basis: grad phi_i = (b_i, c_i) / (2*area)
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    double_area = b[0] * c[1] - b[1] * c[0]
    if double_area <= 0:
        raise ConfigurationError("triangle with non-positive signed area")
    grads = np.column_stack([b, c]) / double_area
    return grads @ grads.T * (0.5 * double_area)


def _restrict(matrix_coo_rows, cols, vals, dofmap, n_nodes, n_free):
    rows_f = dofmap.full_to_free[matrix_coo_rows]
    cols_f = dofmap.full_to_free[cols]
    keep = (rows_f >= 0) & (cols_f >= 0)
    A = sp.coo_matrix(
        (vals[keep], (rows_f[keep], cols_f[keep])), shape=(n_free, n_free)
    )
    return A.tocsr()


def assemble_thermal_block_operators(mesh: Mesh, dofmap: DofMap):
    """Per-block stiffness matrices and the base-edge load on free dofs.

    Returns ``(A_list, f_list)`` where ``A_list[q-1]`` is the stiffness of
    block q restricted to the free dofs and ``f_list == [f_base]`` is the
    boundary-mass load of the bottom edge (exact trapezoid rule, which is
    exact for P1 traces).
    """
    n_free = dofmap.n_free
    rows = {q: [] for q in range(1, mesh.n_blocks + 1)}
    cols = {q: [] for q in range(1, mesh.n_blocks + 1)}
    vals = {q: [] for q in range(1, mesh.n_blocks + 1)}
    for tri, block in zip(mesh.triangles, mesh.triangle_block):
        K = _local_stiffness(mesh.nodes[tri])
        for a in range(3):
            for b in range(3):
                rows[block].append(tri[a])
                cols[block].append(tri[b])
                vals[block].append(K[a, b])

    A_list = []
    for q in range(1, mesh.n_blocks + 1):
        A = _restrict(
            np.asarray(rows[q]), np.asarray(cols[q]), np.asarray(vals[q]),
            dofmap, mesh.n_nodes, n_free,
        )
        A_list.append(A)

    # base-edge load: each edge of length h contributes h/2 to its endpoints
    h = 1.0 / mesh.n
    f_full = np.zeros(mesh.n_nodes)
    base = mesh.boundary_tags["base"]
    for a, b in zip(base[:-1], base[1:]):
        f_full[a] += 0.5 * h
        f_full[b] += 0.5 * h
    f_base = f_full[dofmap.free]
    return A_list, [f_base]


def assemble_inner_product(A_list, theta_bar):
    """Reference inner product X = sum_q theta_bar[q] * A_q (SPD on free dofs)."""
    theta_bar = np.asarray(theta_bar, dtype=float)
    if theta_bar.shape[0] != len(A_list):
        raise ConfigurationError(
            f"got {theta_bar.shape[0]} coefficients for {len(A_list)} operators"
        )
    if np.any(theta_bar <= 0):
        raise ConfigurationError(
            f"invalid reference parameter: all coefficients must be > 0, "
            f"got {theta_bar.tolist()}"
        )
    X = theta_bar[0] * A_list[0]
    for t, A in zip(theta_bar[1:], A_list[1:]):
        X = X + t * A
    return X.tocsr()
