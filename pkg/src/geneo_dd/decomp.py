"""Overlapping domain decompositions of a uniform mesh.

Vocabulary used throughout the package:

* ``dofs``      every free dof touched by an element of the subdomain
                (the local Neumann space).
* ``internal``  free dofs of the subdomain that are not on its internal
                boundary; local Dirichlet solves and the partition of
                unity live here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import Mesh


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    """Non-overlapping k x k block partition of the mesh cells (block sizes differ by at most one cell)."""

    mesh: Mesh
    k: int
    labels: np.ndarray      # subdomain id per element

    @property
    def n_subdomains(self) -> int:
        return self.k * self.k


@dataclass(frozen=True)
class Subdomain:
    index: int
    elements: np.ndarray
    dofs: np.ndarray
    internal: np.ndarray
    internal_pos: np.ndarray
    weights: np.ndarray
    bbox: tuple[float, float, float, float]

    @property
    def diameter(self) -> float:
        x0, x1, y0, y1 = self.bbox
        return float(np.hypot(x1 - x0, y1 - y0))

    @property
    def pou_diagonal(self) -> np.ndarray:
        """Partition-of-unity operator as a diagonal over ``dofs`` (zero off ``internal``)."""
        d = np.zeros(len(self.dofs))
        d[self.internal_pos] = self.weights
        return d

    def restrict(self, v: np.ndarray) -> np.ndarray:
        return v[self.internal]

    def extend(self, v_internal: np.ndarray, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=np.result_type(v_internal, float))
        out[self.internal] = v_internal
        return out

    def apply_pou(self, v_local: np.ndarray) -> np.ndarray:
        """Weighted restriction to ``internal`` of a vector over ``dofs``."""
        return self.weights * v_local[self.internal_pos]


@dataclass(frozen=True)
class DomainDecomposition:
    mesh: Mesh
    overlap: str
    layers: int
    subdomains: tuple[Subdomain, ...]
    multiplicity: np.ndarray
    element_count: np.ndarray

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)

    @property
    def k0(self) -> int:
        return int(self.element_count.max())

    @property
    def H(self) -> float:
        return max(s.diameter for s in self.subdomains)

    def __iter__(self):
        return iter(self.subdomains)

    def __getitem__(self, j: int) -> Subdomain:
        return self.subdomains[j]

    def write_multiplicity_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dof", "x", "y", "multiplicity"])
            xy = self.mesh.nodes[self.mesh.dof_nodes]
            for i, mu in enumerate(self.multiplicity):
                w.writerow([i, f"{xy[i, 0]:.17g}", f"{xy[i, 1]:.17g}", int(mu)])

    def write_summary_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subdomain", "elements", "dofs", "internal_dofs", "diameter"])
            for s in self.subdomains:
                w.writerow([s.index, len(s.elements), len(s.dofs), len(s.internal), f"{s.diameter:.6g}"])


def partition_square(mesh: Mesh, n_subdomains: int) -> Partition:
    k = int(round(np.sqrt(n_subdomains)))
    if n_subdomains < 1 or k * k != n_subdomains:
        raise DecompositionError(f"number of subdomains must be a perfect square, got {n_subdomains}")
    if k > mesh.nx or k > mesh.ny:
        raise DecompositionError(f"grid {mesh.nx}x{mesh.ny} is too coarse for {k}x{k} blocks")
    cells = mesh.element_cells()
    # near-equal blocks when k does not divide the cell count
    labels = (cells[:, 1] * k // mesh.ny) * k + cells[:, 0] * k // mesh.nx
    labels.setflags(write=False)
    return Partition(mesh, k, labels)


def _layers_for(mesh: Mesh, overlap: str, layers: int, delta: float | None) -> int:
    if overlap == "minimal":
        if layers < 1:
            raise DecompositionError("minimal overlap needs at least one layer")
        return layers
    if overlap == "generous":
        if delta is None or delta <= 0:
            raise DecompositionError("generous overlap needs a positive width delta")
        # delta is the width shared by two neighbours: delta/2 of growth per side
        per_side = delta / (2.0 * mesh.h)
        n = int(round(per_side))
        if n < 1 or abs(n - per_side) > 1e-8 * max(1.0, per_side):
            raise DecompositionError(f"overlap width {delta} is not a positive multiple of 2h = {2 * mesh.h}")
        return n
    raise DecompositionError(f"unknown overlap mode {overlap!r}")


def extend_overlap(partition: Partition, overlap: str = "minimal", layers: int = 1,
                   delta: float | None = None) -> DomainDecomposition:
    """Grow each block by layers of elements touching it and build the POU.

    ``minimal``  ``layers`` rounds of node-touch growth, POU weights 1/mu.
    ``generous`` growth of delta/2 per side (delta = overlap width between
                 neighbours) and a POU that decays linearly across the overlap.
    """
    mesh = partition.mesh
    n_layers = _layers_for(mesh, overlap, layers, delta)
    inc = mesh.node_element_incidence()
    inc_t = inc.T.tocsr()
    degree = np.asarray(inc.sum(axis=1)).ravel()

    masks = []
    for j in range(partition.n_subdomains):
        emask = partition.labels == j
        for _ in range(n_layers):
            nmask = (inc @ emask.astype(np.int64)) > 0
            emask = (inc_t @ nmask.astype(np.int64)) > 0
        masks.append(emask)

    n = mesh.n_dofs
    free = mesh.free_dofs
    raw = []
    multiplicity = np.zeros(n, dtype=np.int64)
    for j, emask in enumerate(masks):
        touch = inc @ emask.astype(np.int64)
        touched_nodes = np.flatnonzero(touch > 0)
        interior_nodes = np.flatnonzero(touch == degree)
        dofs = np.sort(free[touched_nodes][free[touched_nodes] >= 0])
        internal = np.sort(free[interior_nodes][free[interior_nodes] >= 0])
        multiplicity[internal] += 1
        raw.append((emask, dofs, internal, interior_nodes))

    if np.any(multiplicity == 0):
        bad = int(np.flatnonzero(multiplicity == 0)[0])
        raise DecompositionError(f"dof {bad} is internal to no subdomain")
    element_count = np.sum(masks, axis=0).astype(np.int64)

    if overlap == "generous":
        dist = _boundary_distances(mesh, [r[3] for r in raw], cap=2 * n_layers)
        total = np.zeros(n)
        for j, (_, _, internal, _) in enumerate(raw):
            total[internal] += dist[j][internal]

    subdomains = []
    for j, (emask, dofs, internal, _) in enumerate(raw):
        if overlap == "generous":
            weights = dist[j][internal] / total[internal]
        else:
            weights = 1.0 / multiplicity[internal]
        elements = np.flatnonzero(emask)
        pts = mesh.nodes[mesh.elements[elements]].reshape(-1, 2)
        bbox = (pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())
        internal_pos = np.searchsorted(dofs, internal)
        for arr in (elements, dofs, internal, internal_pos, weights):
            arr.setflags(write=False)
        subdomains.append(Subdomain(j, elements, dofs, internal, internal_pos, weights, bbox))

    multiplicity.setflags(write=False)
    element_count.setflags(write=False)
    return DomainDecomposition(mesh, overlap, n_layers, tuple(subdomains), multiplicity, element_count)


def _boundary_distances(mesh: Mesh, interior_node_sets, cap: int) -> list[np.ndarray]:
    """Per subdomain: graph distance (mesh edges) from each free dof to the
    nearest node outside the subdomain interior, capped at ``cap``."""
    inc = mesh.node_element_incidence()
    adj = ((inc @ inc.T) > 0).astype(np.int64).tocsr()
    out = []
    for interior in interior_node_sets:
        inside = np.zeros(mesh.n_nodes, dtype=bool)
        inside[interior] = True
        dist = np.where(inside, cap, 0).astype(float)
        reached = ~inside
        for step in range(1, cap):
            grown = (adj @ reached.astype(np.int64)) > 0
            new = grown & ~reached
            dist[new] = step
            reached |= grown
        out.append(dist[mesh.dof_nodes])
    return out


def decompose(mesh: Mesh, n_subdomains: int, overlap: str = "minimal", layers: int = 1,
              delta: float | None = None) -> DomainDecomposition:
    return extend_overlap(partition_square(mesh, n_subdomains), overlap, layers, delta)


def partition_of_unity(decomp: DomainDecomposition) -> list[np.ndarray]:
    """POU weights per subdomain, aligned with ``subdomain.internal``."""
    return [s.weights for s in decomp.subdomains]


def compute_k0(decomp: DomainDecomposition) -> int:
    return decomp.k0
