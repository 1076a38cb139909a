"""Linear-triangle axisymmetric assembly of div(k grad u) and sparse solves.

The element matrix of a P1 triangle for the weak form of ``div(k grad u)`` on
a body of revolution is ``k * rbar * A * grad N_i . grad N_j`` with ``rbar``
the centroid radius; ``rbar * A`` is the exact integral of ``r`` over the
triangle, so for elementwise constant ``k`` the stiffness is integrated
exactly. The common factor ``2*pi`` is dropped everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InvalidFrequency, SingularElement, SolverFailure
from .geometry import Boundary, Mesh

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class _Kernel:
    grad: np.ndarray  # (m, 3, 2) basis gradients
    weight: np.ndarray  # (m,) rbar * area
    unit: np.ndarray  # (m, 9) rbar * area * grad N_i . grad N_j
    load: np.ndarray  # (m, 3) integral of N_i * r
    inverse: np.ndarray  # COO slot -> CSR data slot
    indptr: np.ndarray
    indices: np.ndarray
    n: int


def _kernel(mesh: Mesh) -> _Kernel:
    if "fem_kernel" in mesh._cache:
        return mesh._cache["fem_kernel"]
    tri = mesh.triangles
    p = mesh.nodes[tri]
    r, z = p[..., 0], p[..., 1]
    area = mesh.signed_areas()
    if np.any(np.abs(area) <= 1e-300) or np.any(area <= 0):
        bad = int(np.flatnonzero(area <= 1e-300)[0])
        raise SingularElement(f"triangle {bad} has non-positive area {area[bad]:.3e}")
    b = np.stack([z[:, 1] - z[:, 2], z[:, 2] - z[:, 0], z[:, 0] - z[:, 1]], axis=1)
    c = np.stack([r[:, 2] - r[:, 1], r[:, 0] - r[:, 2], r[:, 1] - r[:, 0]], axis=1)
    grad = np.stack([b, c], axis=2) / (2.0 * area)[:, None, None]
    rbar = r.mean(axis=1)
    weight = rbar * area
    unit = (weight[:, None, None] * np.einsum("mik,mjk->mij", grad, grad)).reshape(-1, 9)
    # exact integral of N_i * r over the triangle
    load = (area / 12.0)[:, None] * (r.sum(axis=1)[:, None] + r)

    n = mesh.n_nodes
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    keys, inverse = np.unique(rows * n + cols, return_inverse=True)
    krow = keys // n
    indptr = np.concatenate([[0], np.cumsum(np.bincount(krow, minlength=n))])
    k = _Kernel(grad, weight, unit, load, inverse.ravel(), indptr, (keys % n).astype(np.int64), n)
    mesh._cache["fem_kernel"] = k
    return k


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    # after apply_dirichlet: reduced system on free nodes plus the lifting data
    fixed: np.ndarray | None = None
    fixed_values: np.ndarray | None = None
    free: np.ndarray | None = None
    reduced_matrix: sp.csr_matrix | None = None
    reduced_rhs: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def constrained(self) -> bool:
        return self.fixed is not None


@dataclass(frozen=True, eq=False)
class ElementField:
    E_r: np.ndarray
    E_z: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.E_r, self.E_z)


def _csr(k: _Kernel, values: np.ndarray) -> sp.csr_matrix:
    if np.iscomplexobj(values):
        data = (np.bincount(k.inverse, weights=values.real, minlength=len(k.indices))
                + 1j * np.bincount(k.inverse, weights=values.imag, minlength=len(k.indices)))
    else:
        data = np.bincount(k.inverse, weights=values, minlength=len(k.indices))
    return sp.csr_matrix((data, k.indices, k.indptr), shape=(k.n, k.n))


def assemble(mesh: Mesh, coeff, rhs=None) -> SparseSystem:
    """Global stiffness of div(coeff grad u) with per-element ``coeff``."""
    k = _kernel(mesh)
    coeff = np.broadcast_to(np.asarray(coeff), (mesh.n_triangles,))
    if not np.all(np.isfinite(coeff)):
        raise ValueError("element coefficients must be finite")
    A = _csr(k, (coeff[:, None] * k.unit).ravel())
    b = np.zeros(k.n, dtype=A.dtype) if rhs is None else np.asarray(rhs)
    return SparseSystem(A, b)


def assemble_complex(mesh: Mesh, eps, sigma, f: float) -> SparseSystem:
    """Phasor operator with element coefficient ``eps - 1j*sigma/(2 pi f)``."""
    if not f > 0:
        raise InvalidFrequency(f"frequency must be positive, got {f}")
    coeff = np.asarray(eps, dtype=float) - 1j * np.asarray(sigma, dtype=float) / (2.0 * np.pi * f)
    return assemble(mesh, coeff)


def load_vector(mesh: Mesh, source) -> np.ndarray:
    """Consistent load of an elementwise constant volume source."""
    k = _kernel(mesh)
    q = np.broadcast_to(np.asarray(source, dtype=float), (mesh.n_triangles,))
    return np.bincount(mesh.triangles.ravel(), weights=(q[:, None] * k.load).ravel(),
                       minlength=mesh.n_nodes)


def apply_dirichlet(system: SparseSystem, bc) -> SparseSystem:
    """Eliminate constrained rows and columns symmetrically.

    ``bc`` is a mapping node -> value or a pair ``(nodes, values)``.
    """
    if isinstance(bc, dict):
        nodes = np.array(list(bc.keys()), dtype=np.int64)
        values = np.array(list(bc.values()), dtype=float if not bc else None)
    else:
        nodes, values = bc
        nodes = np.asarray(nodes, dtype=np.int64)
        values = np.broadcast_to(np.asarray(values), nodes.shape)
    order = np.argsort(nodes, kind="stable")
    nodes, values = nodes[order], values[order]
    n = system.dimension
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= n):
        raise IndexError("Dirichlet node index out of range")
    mask = np.zeros(n, dtype=bool)
    mask[nodes] = True
    free = np.flatnonzero(~mask)
    A = system.matrix
    A_ff = A[free][:, free].tocsr()
    b_f = system.rhs[free] - A[free][:, nodes] @ values
    return SparseSystem(A, system.rhs, nodes, values, free, A_ff, b_f)


class Factorization:
    """Sparse LU of a constrained system's reduced matrix, reusable for new right-hand sides."""

    def __init__(self, matrix: sp.spmatrix):
        self.matrix = matrix.tocsc()
        try:
            self._lu = splu(self.matrix) if matrix.shape[0] else None
        except RuntimeError as exc:  # exactly singular
            raise SolverFailure(f"factorization failed: {exc}") from None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            return np.zeros(0, dtype=rhs.dtype)
        x = self._lu.solve(rhs)
        res = _relative_residual(self.matrix, x, rhs)
        if res > RESIDUAL_TOL:
            # one step of iterative refinement
            x = x + self._lu.solve(rhs - self.matrix @ x)
            res = _relative_residual(self.matrix, x, rhs)
        if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL:
            raise SolverFailure(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}", residual=res)
        return x


def _relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    nr = np.linalg.norm(A @ x - b)
    return float(nr / nb) if nb > 0 else float(nr)


def expand(system: SparseSystem, x_free: np.ndarray) -> np.ndarray:
    x = np.zeros(system.dimension, dtype=np.result_type(x_free, system.fixed_values))
    x[system.free] = x_free
    x[system.fixed] = system.fixed_values
    return x


def solve(system: SparseSystem) -> np.ndarray:
    """Nodal solution of a constrained system (residual <= 1e-10 relative)."""
    if not system.constrained:
        system = apply_dirichlet(system, {})
    x_free = Factorization(system.reduced_matrix).solve(system.reduced_rhs)
    return expand(system, x_free)


def gradient(mesh: Mesh, phi: np.ndarray) -> ElementField:
    """Element field ``E = -grad(phi)``; exact for the linear interpolant."""
    k = _kernel(mesh)
    vals = np.asarray(phi)[mesh.triangles]
    g = np.einsum("mi,mik->mk", vals, k.grad)
    return ElementField(-g[:, 0], -g[:, 1])


def electrode_bc(mesh: Mesh, conductor_value, enclosure_value=0.0):
    """Dirichlet data for conductor and enclosure nodes (conductor wins at shared nodes)."""
    cond = mesh.boundary_nodes(Boundary.CONDUCTOR)
    encl = np.setdiff1d(mesh.boundary_nodes(Boundary.ENCLOSURE), cond)
    nodes = np.concatenate([cond, encl])
    values = np.concatenate([np.full(len(cond), conductor_value), np.full(len(encl), enclosure_value)])
    return nodes, values


def energy(system: SparseSystem, x: np.ndarray) -> float:
    return float(np.real(np.conj(x) @ (system.matrix @ x)))


def write_matrix_market(system: SparseSystem, path):
    scipy.io.mmwrite(str(path), system.matrix)
