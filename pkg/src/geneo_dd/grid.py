"""Uniform right-triangle meshes with P1 degrees of freedom."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Uniform triangulation of an axis-aligned rectangle.

    Nodes are numbered row-major (by y, then x). Each cell is split along
    its bottom-left to top-right diagonal into two counterclockwise
    triangles. Boundary nodes carry homogeneous Dirichlet data and are
    eliminated: ``free_dofs[node]`` is the interior dof index or -1.
    """

    rect: tuple[float, float, float, float]
    nx: int
    ny: int
    h: float
    nodes: np.ndarray
    elements: np.ndarray
    boundary_mask: np.ndarray
    free_dofs: np.ndarray
    dof_nodes: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.dof_nodes.shape[0]

    @property
    def element_area(self) -> float:
        return 0.5 * self.h * self.h

    def barycenters(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def element_cells(self) -> np.ndarray:
        """(i, j) cell indices of every element."""
        cell = np.arange(self.n_elements) // 2
        return np.column_stack([cell % self.nx, cell // self.nx])

    def node_element_incidence(self):
        """Sparse (n_nodes x n_elements) 0/1 incidence matrix."""
        import scipy.sparse as sp

        rows = self.elements.ravel()
        cols = np.repeat(np.arange(self.n_elements), 3)
        data = np.ones(rows.size, dtype=np.int64)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_elements))

    def dump(self, path) -> None:
        """Write node and element lists as plain text (debugging aid)."""
        with open(path, "w") as fh:
            fh.write(f"# nodes {self.n_nodes}\n")
            for k, (x, y) in enumerate(self.nodes):
                fh.write(f"{k} {x:.17g} {y:.17g} {int(self.boundary_mask[k])}\n")
            fh.write(f"# elements {self.n_elements}\n")
            for k, (a, b, c) in enumerate(self.elements):
                fh.write(f"{k} {a} {b} {c}\n")


def build_uniform_mesh(rect, nx: int, ny: int) -> Mesh:
    x0, x1, y0, y1 = (float(v) for v in rect)
    if nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {rect}")
    hx = (x1 - x0) / nx
    hy = (y1 - y0) / ny
    if abs(hx - hy) > 1e-12 * max(hx, hy):
        raise MeshError(f"cells are not square: hx={hx}, hy={hy}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i = i.ravel()
    j = j.ravel()
    n00 = j * (nx + 1) + i
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([n00, n10, n11])
    elements[1::2] = np.column_stack([n00, n11, n01])

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    boundary = ((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)).ravel()
    free = np.full(nodes.shape[0], -1, dtype=np.int64)
    dof_nodes = np.flatnonzero(~boundary)
    free[dof_nodes] = np.arange(dof_nodes.size)

    for arr in (nodes, elements, boundary, free, dof_nodes):
        arr.setflags(write=False)
    return Mesh((x0, x1, y0, y1), nx, ny, hx, nodes, elements, boundary, free, dof_nodes)


def centre_node(mesh: Mesh) -> int:
    """Free node nearest the rectangle centre (lowest index on ties)."""
    if mesh.n_dofs == 0:
        raise MeshError("mesh has no interior nodes")
    x0, x1, y0, y1 = mesh.rect
    c = np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])
    pts = mesh.nodes[mesh.dof_nodes]
    d = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
    best = d.min()
    candidates = np.flatnonzero(d <= best + 1e-9 * mesh.h)
    return int(mesh.dof_nodes[candidates[0]])
