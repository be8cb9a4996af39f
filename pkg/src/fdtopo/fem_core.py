"""P2 vector / P1 scalar finite elements on triangles.

Displacement dofs are interleaved: dof ``2*k + c`` is component ``c`` of
P2 node ``k``. Coefficient fields (the Heaviside weight, level sets,
directions) are P1 nodal arrays.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import BoundaryLabel, Mesh

logger = logging.getLogger(__name__)

# 6-point symmetric rule, exact for degree 4 (Dunavant)
_Q_A1, _Q_W1 = 0.445948490915965, 0.223381589678011
_Q_A2, _Q_W2 = 0.091576213509771, 0.109951743655322

# 3-point Gauss-Legendre on [0, 1]
_G3_T = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
_G3_W = np.array([5.0, 8.0, 5.0]) / 18.0


class GeometryError(ValueError):
    pass


class SolverError(RuntimeError):
    """CG did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class Material:
    lambda_s: float
    mu_s: float

    def __post_init__(self):
        if not (self.lambda_s > 0 and self.mu_s > 0):
            raise ValueError(f"Lame coefficients must be positive: {self}")

    @classmethod
    def from_young_poisson(cls, young: float, poisson: float, plane: str = "strain") -> "Material":
        mu = young / (2.0 * (1.0 + poisson))
        if plane == "strain":
            lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
        elif plane == "stress":
            lam = young * poisson / (1.0 - poisson ** 2)
        else:
            raise ValueError(f"plane must be 'strain' or 'stress', got {plane!r}")
        return cls(lam, mu)

    @property
    def voigt(self) -> np.ndarray:
        """Constitutive matrix acting on (e11, e22, 2 e12)."""
        lam, mu = self.lambda_s, self.mu_s
        return np.array([[lam + 2 * mu, lam, 0.0],
                         [lam, lam + 2 * mu, 0.0],
                         [0.0, 0.0, mu]])


@dataclass(frozen=True)
class Loads:
    body_force: tuple[float, float] = (0.0, 0.0)
    traction: tuple[float, float] = (0.0, 0.0)


def quadrature_rule() -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (6, 3) and weights (6,) summing to 1."""
    a1, b1 = _Q_A1, 1 - 2 * _Q_A1
    a2, b2 = _Q_A2, 1 - 2 * _Q_A2
    pts = np.array([[b1, a1, a1], [a1, b1, a1], [a1, a1, b1],
                    [b2, a2, a2], [a2, b2, a2], [a2, a2, b2]])
    w = np.array([_Q_W1] * 3 + [_Q_W2] * 3)
    return pts, w


def p2_basis(bary: np.ndarray) -> np.ndarray:
    """P2 shape function values, (n, 6) for barycentric points (n, 3)."""
    L0, L1, L2 = bary[:, 0], bary[:, 1], bary[:, 2]
    return np.column_stack([L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1),
                            4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0])


def p2_basis_dbary(bary: np.ndarray) -> np.ndarray:
    """Derivatives of the P2 shape functions w.r.t. barycentric coordinates, (n, 6, 3)."""
    n = len(bary)
    L0, L1, L2 = bary[:, 0], bary[:, 1], bary[:, 2]
    d = np.zeros((n, 6, 3))
    d[:, 0, 0] = 4 * L0 - 1
    d[:, 1, 1] = 4 * L1 - 1
    d[:, 2, 2] = 4 * L2 - 1
    d[:, 3, 0], d[:, 3, 1] = 4 * L1, 4 * L0
    d[:, 4, 1], d[:, 4, 2] = 4 * L2, 4 * L1
    d[:, 5, 2], d[:, 5, 0] = 4 * L0, 4 * L2
    return d


def barycentric_gradients(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the barycentric coordinates and signed areas.

    ``coords`` is (nt, 3, 2); returns ((nt, 3, 2), (nt,)).
    """
    x, y = coords[..., 0], coords[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    if np.any(area <= 0):
        bad = np.flatnonzero(area <= 0)
        raise GeometryError(f"{len(bad)} degenerate or clockwise triangle(s), first index {bad[0]}")
    grads = np.empty(coords.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, j] - y[:, k]) / (2 * area)
        grads[:, i, 1] = (x[:, k] - x[:, j]) / (2 * area)
    return grads, area


def strain_operator(coords: np.ndarray, bary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strain-displacement matrices at barycentric points.

    Returns ``B`` of shape (nt, nq, 3, 12) mapping interleaved element dofs
    to (e11, e22, 2 e12), and the triangle areas.
    """
    gl, area = barycentric_gradients(coords)
    gn = np.einsum("qab,tbc->tqac", p2_basis_dbary(bary), gl)  # (nt, nq, 6, 2)
    B = np.zeros(gn.shape[:2] + (3, 12))
    B[:, :, 0, 0::2] = gn[..., 0]
    B[:, :, 1, 1::2] = gn[..., 1]
    B[:, :, 2, 0::2] = gn[..., 1]
    B[:, :, 2, 1::2] = gn[..., 0]
    return B, area


def _nodal_stiffness_parts(coords: np.ndarray, material: Material) -> np.ndarray:
    """(nt, 3, 12, 12) element matrices weighted by each P1 hat function."""
    bary, w = quadrature_rule()
    B, area = strain_operator(coords, bary)
    DB = np.einsum("ab,tqbj->tqaj", material.voigt, B)
    weights = area[:, None, None] * (w[:, None] * bary)[None]  # (nt, nq, 3)
    return np.einsum("tqk,tqai,tqaj->tkij", weights, B, DB, optimize=True)


def element_stiffness(coords, material: Material, h_coeff) -> np.ndarray:
    """12x12 stiffness of one triangle for a P1 coefficient with nodal values ``h_coeff``."""
    coords = np.asarray(coords, dtype=float).reshape(1, 3, 2)
    parts = _nodal_stiffness_parts(coords, material)[0]
    return np.einsum("k,kij->ij", np.asarray(h_coeff, dtype=float), parts)


def _csr_pattern(rows: np.ndarray, cols: np.ndarray, n: int):
    """Sorted unique (row, col) pattern and the scatter map from COO slots."""
    keys = rows.astype(np.int64) * n + cols
    uniq, inverse = np.unique(keys, return_inverse=True)
    r, c = np.divmod(uniq, n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    return np.cumsum(indptr), c, r, inverse.ravel()


class P2Elasticity:
    """Precomputed assembly data for the weighted elasticity operator on a mesh.

    ``dirichlet_nodes`` defaults to every P2 node of the ``SigmaD`` edges;
    both displacement components are fixed there.
    """

    def __init__(self, mesh: Mesh, material: Material, dirichlet_nodes=None):
        self.mesh = mesh
        self.material = material
        self.n_dofs = 2 * mesh.n_p2
        coords = mesh.vertices[mesh.triangles]
        self.parts = _nodal_stiffness_parts(coords, material)
        self.bary, self.qw = quadrature_rule()
        self.B, self.area = strain_operator(coords, self.bary)

        p2 = mesh.p2_triangles
        dofs = np.empty((mesh.n_triangles, 12), dtype=np.int64)
        dofs[:, 0::2] = 2 * p2
        dofs[:, 1::2] = 2 * p2 + 1
        self.elem_dofs = dofs
        rows = np.repeat(dofs, 12, axis=1)
        cols = np.tile(dofs, (1, 12))
        self.indptr, self.indices, self._rows, self._scatter = _csr_pattern(rows, cols, self.n_dofs)
        self.nnz = len(self.indices)

        if dirichlet_nodes is None:
            dirichlet_nodes = mesh.p2_nodes_on(BoundaryLabel.SigmaD)
        nodes = np.asarray(dirichlet_nodes, dtype=np.int64)
        self.fixed_dofs = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
        fixed = np.zeros(self.n_dofs, dtype=bool)
        fixed[self.fixed_dofs] = True
        self.fixed_mask = fixed
        self._drop = fixed[self._rows] | fixed[self.indices]
        self._unit_diag = self._drop & (self._rows == self.indices)

    def element_matrices(self, h_nodal: np.ndarray) -> np.ndarray:
        h_el = np.asarray(h_nodal, dtype=float)[self.mesh.triangles]
        return np.einsum("tk,tkij->tij", h_el, self.parts)

    def stiffness(self, h_nodal: np.ndarray, eliminate: bool = True) -> sp.csr_matrix:
        data = np.bincount(self._scatter, weights=self.element_matrices(h_nodal).ravel(),
                           minlength=self.nnz)
        if eliminate:
            data[self._drop] = 0.0
            data[self._unit_diag] = 1.0
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n_dofs, self.n_dofs))

    def h_at_quadrature(self, h_nodal: np.ndarray) -> np.ndarray:
        """P1 interpolation of nodal values at the quadrature points, (nt, nq)."""
        return np.asarray(h_nodal, dtype=float)[self.mesh.triangles] @ self.bary.T

    def rhs(self, loads: Loads, h_nodal: np.ndarray, traction_label=BoundaryLabel.GammaN,
            eliminate: bool = True) -> np.ndarray:
        b = np.zeros(self.n_dofs)
        f = np.asarray(loads.body_force, dtype=float)
        if np.any(f):
            phi = p2_basis(self.bary)  # (nq, 6)
            hq = self.h_at_quadrature(h_nodal) * self.area[:, None] * self.qw[None]
            loc = hq @ phi  # (nt, 6): integral of H * phi_a
            p2 = self.mesh.p2_triangles
            for c in range(2):
                b += np.bincount((2 * p2 + c).ravel(), weights=(f[c] * loc).ravel(),
                                 minlength=self.n_dofs)
        t = np.asarray(loads.traction, dtype=float)
        if np.any(t):
            ids = self.mesh.boundary_edge_ids(traction_label)
            if len(ids):
                ends = self.mesh.edges[ids]
                length = np.linalg.norm(self.mesh.vertices[ends[:, 1]] - self.mesh.vertices[ends[:, 0]], axis=1)
                s = _G3_T
                trace = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
                wts = _G3_W @ trace  # integral of each 1D P2 shape over [0, 1]
                nodes = np.column_stack([ends, ids + self.mesh.n_vertices])
                for c in range(2):
                    b += np.bincount((2 * nodes + c).ravel(),
                                     weights=(t[c] * length[:, None] * wts[None]).ravel(),
                                     minlength=self.n_dofs)
        if eliminate:
            b[self.fixed_mask] = 0.0
        return b

    def strains(self, u: np.ndarray) -> np.ndarray:
        """(e11, e22, 2 e12) at every quadrature point, shape (nt, nq, 3)."""
        return np.einsum("tqaj,tj->tqa", self.B, np.asarray(u)[self.elem_dofs])

    def energy_density(self, u: np.ndarray) -> np.ndarray:
        """lambda (div u)^2 + 2 mu e(u):e(u) at the quadrature points."""
        e = self.strains(u)
        return np.einsum("tqa,ab,tqb->tq", e, self.material.voigt, e)

    def displacement_at_quadrature(self, u: np.ndarray) -> np.ndarray:
        """(nt, nq, 2) displacement values at quadrature points."""
        phi = p2_basis(self.bary)
        uu = np.asarray(u).reshape(-1, 2)[self.mesh.p2_triangles]  # (nt, 6, 2)
        return np.einsum("qa,tac->tqc", phi, uu)

    def integrate(self, values_q: np.ndarray) -> float:
        """Quadrature of a (nt, nq) array of point values over the mesh."""
        return float(np.sum((values_q @ self.qw) * self.area))


def elasticity(mesh: Mesh, material: Material) -> P2Elasticity:
    """Cached assembler for the default ``SigmaD`` constraints."""
    key = ("elasticity", material)
    if key not in mesh._cache:
        mesh._cache[key] = P2Elasticity(mesh, material)
    return mesh._cache[key]


def assemble_system(mesh: Mesh, material: Material, h_field: np.ndarray) -> sp.csr_matrix:
    return elasticity(mesh, material).stiffness(h_field)


def assemble_rhs(mesh: Mesh, loads: Loads, h_field: np.ndarray, material: Material | None = None) -> np.ndarray:
    material = material or Material(1.0, 1.0)  # the load vector does not depend on it
    return elasticity(mesh, material).rhs(loads, h_field)


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, dofs: np.ndarray, values: np.ndarray):
    """Symmetric elimination of ``u[dofs] = values`` from an unconstrained system."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    u_fixed = np.zeros(n)
    u_fixed[dofs] = values
    b = b - A @ u_fixed
    keep = np.ones(n)
    keep[dofs] = 0.0
    K = sp.diags(keep)
    A_mod = (K @ A @ K + sp.diags(1.0 - keep)).tocsr()
    b[dofs] = values
    return A_mod, b


class P1ReactionDiffusion:
    """P1 matrices for ``gamma * grad u . grad v + u v`` with natural boundary conditions."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        coords = mesh.vertices[mesh.triangles]
        gl, area = barycentric_gradients(coords)
        self.stiff_local = area[:, None, None] * np.einsum("tac,tbc->tab", gl, gl)
        mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
        self.mass_local = area[:, None, None] * mass[None]
        rows = np.repeat(mesh.triangles, 3, axis=1)
        cols = np.tile(mesh.triangles, (1, 3))
        n = mesh.n_vertices
        self.indptr, self.indices, _, self._scatter = _csr_pattern(rows, cols, n)
        self.nnz = len(self.indices)
        self.lumped_mass = np.bincount(mesh.triangles.ravel(), weights=np.repeat(area / 3.0, 3),
                                       minlength=n)

    def _csr(self, local: np.ndarray) -> sp.csr_matrix:
        n = self.mesh.n_vertices
        data = np.bincount(self._scatter, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def matrix(self, gamma: float) -> sp.csr_matrix:
        return self._csr(gamma * self.stiff_local + self.mass_local)

    def stiffness(self) -> sp.csr_matrix:
        return self._csr(self.stiff_local)

    def mass(self) -> sp.csr_matrix:
        return self._csr(self.mass_local)


def reaction_diffusion(mesh: Mesh) -> P1ReactionDiffusion:
    if "p1" not in mesh._cache:
        mesh._cache["p1"] = P1ReactionDiffusion(mesh)
    return mesh._cache["p1"]


def solve_spd(A: sp.spmatrix, b: np.ndarray, rel_tol: float = 1e-10, max_iter: int | None = None,
              x0: np.ndarray | None = None, info: dict | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||b - A x|| <= rel_tol * ||b||``. Raises ``SolverError``
    if that does not happen within ``max_iter`` iterations (default
    ``10 * n``).
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        if info is not None:
            info.update(iterations=0, residual=0.0)
        return np.zeros(n)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("non-positive diagonal entry", np.inf, 0)
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    target = rel_tol * bnorm
    rnorm = np.linalg.norm(r)
    k = 0
    while rnorm > target:
        if k >= max_iter:
            raise SolverError("conjugate gradients did not converge", rnorm / bnorm, k)
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("matrix is not positive definite", rnorm / bnorm, k)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = inv_diag * r
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
        rnorm = np.linalg.norm(r)
        k += 1
    logger.debug("cg converged in %d iterations, residual %.2e", k, rnorm / bnorm)
    if info is not None:
        info.update(iterations=k, residual=rnorm / bnorm)
    return x
