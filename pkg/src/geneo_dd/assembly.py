"""P1 finite element assembly with elementwise-constant coefficients.

Coefficients are sampled once at element barycentres. With constant data
on each triangle every integral below is exact:

* stiffness  a_e * area * grad(phi_i).grad(phi_j)
* mass       c_e * area/12 * [[2,1,1],[1,2,1],[1,1,2]]
* convection (b_e . grad(phi_j)) * area/3   in row i

Matrix entry (i, j) holds the bilinear form evaluated at (phi_j, phi_i), so
``B @ u`` realises the discrete operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .coeffs import ProblemCoefficients, ScalarField
from .grid import Mesh, centre_node

_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class ElementData:
    """Per-element geometry and barycentre samples of the coefficients."""

    area: np.ndarray        # (ne,)
    grads: np.ndarray       # (ne, 3, 2)
    a: np.ndarray
    b: np.ndarray           # (ne, 2)
    div_b: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray

    @property
    def c_tilde(self) -> np.ndarray:
        return self.c_minus - self.div_b


def element_geometry(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    p = mesh.nodes[mesh.elements]                     # (ne, 3, 2)
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    if np.any(det <= 0):
        raise AssemblyError("mesh has non-positive element orientation")
    grads = np.empty((mesh.n_elements, 3, 2))
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= det[:, None, None]
    return 0.5 * det, grads


def sample_coefficients(mesh: Mesh, coeffs: ProblemCoefficients) -> ElementData:
    area, grads = element_geometry(mesh)
    bc = mesh.barycenters()
    x, y = bc[:, 0], bc[:, 1]
    return ElementData(
        area=area,
        grads=grads,
        a=coeffs.a(x, y),
        b=coeffs.b(x, y),
        div_b=coeffs.b.divergence(x, y),
        c_plus=coeffs.c_plus(x, y),
        c_minus=coeffs.c_minus(x, y),
    )


def sample_coefficients_geometry_only(mesh: Mesh) -> ElementData:
    area, grads = element_geometry(mesh)
    z = np.zeros(mesh.n_elements)
    return ElementData(area, grads, np.ones_like(z), np.zeros((mesh.n_elements, 2)), z, z, z)


def element_stiffness(data: ElementData, weight: np.ndarray | None = None) -> np.ndarray:
    k = np.einsum("eid,ejd->eij", data.grads, data.grads) * data.area[:, None, None]
    if weight is not None:
        k *= weight[:, None, None]
    return k


def element_mass(data: ElementData, weight: np.ndarray | None = None) -> np.ndarray:
    w = data.area if weight is None else data.area * weight
    return w[:, None, None] * _MASS_REF[None, :, :]


def element_convection(data: ElementData, b: np.ndarray | None = None) -> np.ndarray:
    b = data.b if b is None else b
    bg = np.einsum("ed,ejd->ej", b, data.grads)      # b_e . grad(phi_j)
    return np.broadcast_to((data.area / 3.0)[:, None, None] * bg[:, None, :], (len(bg), 3, 3)).copy()


def scatter(mesh: Mesh, local: np.ndarray, elements: np.ndarray | None = None,
            dofs: np.ndarray | None = None) -> sp.csr_matrix:
    """Sum element matrices into a CSR matrix.

    ``elements`` restricts the sum to a subset; ``dofs`` (sorted free-dof
    indices) selects and renumbers the rows/columns. Nodes outside ``dofs``
    (including Dirichlet nodes) are dropped.
    """
    if elements is None:
        elements = np.arange(mesh.n_elements)
    if dofs is None:
        node_map = mesh.free_dofs
        n = mesh.n_dofs
    else:
        node_map = np.full(mesh.n_nodes, -1, dtype=np.int64)
        node_map[mesh.dof_nodes[dofs]] = np.arange(len(dofs))
        n = len(dofs)
    conn = node_map[mesh.elements[elements]]         # (k, 3)
    vals = local[elements]
    rows = np.repeat(conn, 3, axis=1).ravel()
    cols = np.tile(conn, (1, 3)).ravel()
    vals = vals.ravel()
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


class Assembler:
    """Caches element matrices for one mesh/coefficient pair."""

    def __init__(self, mesh: Mesh, coeffs: ProblemCoefficients):
        self.mesh = mesh
        self.coeffs = coeffs
        self.data = sample_coefficients(mesh, coeffs)
        self.stiffness = element_stiffness(self.data, self.data.a)
        self.mass_plus = element_mass(self.data, self.data.c_plus)
        self.mass_minus = element_mass(self.data, self.data.c_minus)
        self.convection = element_convection(self.data)

    @property
    def local_a(self) -> np.ndarray:
        return self.stiffness + self.mass_plus

    @property
    def local_b(self) -> np.ndarray:
        return self.stiffness + self.mass_plus + self.mass_minus + self.convection

    def A(self, elements=None, dofs=None) -> sp.csr_matrix:
        return scatter(self.mesh, self.local_a, elements, dofs)

    def B(self, elements=None, dofs=None) -> sp.csr_matrix:
        return scatter(self.mesh, self.local_b, elements, dofs)

    def convection_matrix(self) -> sp.csr_matrix:
        return scatter(self.mesh, self.convection)

    def mass_matrix(self, weight: np.ndarray | None = None) -> sp.csr_matrix:
        return scatter(self.mesh, element_mass(self.data, weight))


def assemble_A(mesh: Mesh, coeffs: ProblemCoefficients) -> sp.csr_matrix:
    """Energy matrix of a(u, v) = (a grad u, grad v) + (c+ u, v)."""
    return Assembler(mesh, coeffs).A()


def assemble_B(mesh: Mesh, coeffs: ProblemCoefficients) -> sp.csr_matrix:
    """System matrix of b(u, v) = a(u, v) + (b.grad u, v) + (c- u, v)."""
    return Assembler(mesh, coeffs).B()


def assemble_mass(mesh: Mesh, weight: ScalarField | None = None) -> sp.csr_matrix:
    data = sample_coefficients_geometry_only(mesh)
    w = None
    if weight is not None:
        bc = mesh.barycenters()
        w = weight(bc[:, 0], bc[:, 1])
    return scatter(mesh, element_mass(data, w))


def assemble_local_neumann(mesh: Mesh, coeffs: ProblemCoefficients | Assembler, subdomain):
    """(A_j, B_j) over the subdomain's full dof list, from its elements only."""
    asm = coeffs if isinstance(coeffs, Assembler) else Assembler(mesh, coeffs)
    elements = np.asarray(subdomain.elements)
    if elements.size == 0:
        raise AssemblyError("subdomain has no elements")
    dofs = np.asarray(subdomain.dofs)
    return asm.A(elements, dofs), asm.B(elements, dofs)


def point_source_rhs(mesh: Mesh) -> np.ndarray:
    """Unit nodal load at the free node nearest the domain centre."""
    f = np.zeros(mesh.n_dofs)
    f[mesh.free_dofs[centre_node(mesh)]] = 1.0
    return f


# edge-midpoint rule, exact for quadratics
_QP_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def load_vector(mesh: Mesh, f) -> np.ndarray:
    """(f, phi_i) for a callable f(x, y), by the edge-midpoint rule."""
    p = mesh.nodes[mesh.elements]                     # (ne, 3, 2)
    qp = np.einsum("qk,ekd->eqd", _QP_BARY, p)        # (ne, 3 qp, 2)
    fq = np.asarray(f(qp[..., 0], qp[..., 1]), dtype=float)
    area = 0.5 * mesh.h * mesh.h
    local = area / 3.0 * np.einsum("eq,qi->ei", fq, _QP_BARY)
    dof = mesh.free_dofs[mesh.elements].ravel()
    keep = dof >= 0
    return np.bincount(dof[keep], weights=local.ravel()[keep], minlength=mesh.n_dofs)


def export_matrix_market(path, matrix, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), comment=comment, precision=17)
