"""Linear solvers for the implicit systems of the time schemes.

Two operator shapes occur:

* scalar Helmholtz systems (alpha I - L Laplacian) per tensor component,
  diagonalized exactly by the orthonormal DST-I of the interior values;
* the component-coupled system (alpha I - L1 Laplacian - L23 Dc) arising
  when the cross-elastic constant is nonzero, solved matrix-free by
  conjugate gradients preconditioned with the exact DST inverse of the
  Helmholtz part.

A dense-assembly oracle (operator columns from unit basis fields, pivoted
LU solve) backs the tests on small grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, dirichlet_spectrum, laplacian
from .qtensor import QTensorField, component_weights, cross_derivative

# Residual postconditions are verified on every call in debug runs
# (python without -O); flip off for production timing runs.
CHECK_RESIDUALS = __debug__

_DST_RESIDUAL_BOUND = 1e-11


class SolverConvergenceError(RuntimeError):
    """Krylov iteration exhausted; carries the final relative residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class HelmholtzOperator:
    """alpha I - L Laplacian with alpha > 0 (always invertible)."""

    alpha: float
    L: float
    mesh: Mesh

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.L < 0:
            raise ValueError(f"diffusion weight must be nonnegative, got {self.L}")


def apply_helmholtz(op: HelmholtzOperator, u: np.ndarray) -> np.ndarray:
    out = op.alpha * u - op.L * laplacian(op.mesh, u)
    return out


def solve_helmholtz_dst(op: HelmholtzOperator, rhs: np.ndarray) -> np.ndarray:
    """Exact solve of (alpha I - L Laplacian) u = rhs by DST diagonalization."""
    mesh = op.mesh
    spec = dirichlet_spectrum(mesh)
    rhat = spec.transform(rhs[mesh.interior])
    rhat /= op.alpha - op.L * spec.symbol
    out = np.zeros_like(rhs)
    out[mesh.interior] = spec.inverse(rhat)
    if CHECK_RESIDUALS:
        res = apply_helmholtz(op, out) - rhs
        rnorm = math.sqrt(float(np.sum(rhs * rhs)))
        if math.sqrt(float(np.sum(res * res))) > _DST_RESIDUAL_BOUND * max(rnorm, 1e-300):
            raise AssertionError("DST Helmholtz solve violated its residual bound")
    return out


@dataclass(frozen=True)
class CoupledOperator:
    """alpha I - L1 Laplacian - L23 Dc acting componentwise on tensor fields."""

    alpha: float
    L1: float
    L23: float
    mesh: Mesh
    dim: int

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.L1 < 0:
            raise ValueError(f"L1 must be nonnegative, got {self.L1}")


def apply_coupled(op: CoupledOperator, Q: QTensorField) -> QTensorField:
    out = op.alpha * Q.comps - op.L1 * np.stack(
        [laplacian(op.mesh, comp) for comp in Q.comps]
    )
    if op.L23 != 0.0:
        out = out - op.L23 * cross_derivative(Q).comps
    return QTensorField(op.mesh, op.dim, out)


def _weighted_dot(a: QTensorField, b: QTensorField) -> float:
    w = component_weights(a.dim)
    inner = a.mesh.interior
    return float(sum(w[k] * np.sum(a.comps[k][inner] * b.comps[k][inner])
                     for k in range(len(w))))


def solve_coupled_krylov(op: CoupledOperator, rhs: QTensorField,
                         tol: float = 1e-10,
                         max_iter: int | None = None) -> QTensorField:
    """Preconditioned CG on the matrix-free coupled operator.

    The operator is self-adjoint positive definite in the Frobenius-weighted
    inner product on (nearly) trace-free symmetric fields; the exact DST
    inverse of the alpha/L1 part leaves only the L23 coupling to the
    iteration, so counts stay mesh independent.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    mesh = op.mesh
    n_unknowns = len(rhs.comps) * (mesh.M - 1) ** mesh.dim
    if max_iter is None:
        max_iter = 10 * math.ceil(math.sqrt(n_unknowns))
    helm = HelmholtzOperator(op.alpha, op.L1, mesh)

    def precondition(r: QTensorField) -> QTensorField:
        return QTensorField(mesh, op.dim, np.stack(
            [solve_helmholtz_dst(helm, comp) for comp in r.comps]
        ))

    rhs_norm = math.sqrt(max(_weighted_dot(rhs, rhs), 0.0))
    x = QTensorField.zeros(mesh, op.dim)
    if rhs_norm == 0.0:
        return x
    r = rhs
    z = precondition(r)
    p = z
    rz = _weighted_dot(r, z)
    for _ in range(max_iter):
        Ap = apply_coupled(op, p)
        pAp = _weighted_dot(p, Ap)
        if pAp <= 0.0:
            raise SolverConvergenceError(
                "coupled operator is not positive definite on this data",
                math.sqrt(_weighted_dot(r, r)) / rhs_norm,
            )
        step = rz / pAp
        x = x + step * p
        r = r - step * Ap
        if math.sqrt(_weighted_dot(r, r)) <= tol * rhs_norm:
            return x
        z = precondition(r)
        rz_new = _weighted_dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverConvergenceError(
        f"conjugate gradients did not converge within {max_iter} iterations",
        math.sqrt(_weighted_dot(r, r)) / rhs_norm,
    )


# --- dense oracle -----------------------------------------------------------

_DENSE_LIMIT = 20_000


def _flatten(op, field) -> np.ndarray:
    if isinstance(op, HelmholtzOperator):
        return field[op.mesh.interior].ravel()
    return field.comps[(slice(None),) + op.mesh.interior].ravel()


def _unflatten(op, vec: np.ndarray):
    mesh = op.mesh
    n_int = mesh.M - 1
    if isinstance(op, HelmholtzOperator):
        out = mesh.zeros()
        out[mesh.interior] = vec.reshape((n_int,) * mesh.dim)
        return out
    Q = QTensorField.zeros(mesh, op.dim)
    Q.comps[(slice(None),) + mesh.interior] = vec.reshape(
        (len(Q.comps),) + (n_int,) * mesh.dim
    )
    return Q


def _apply_any(op, field):
    if isinstance(op, HelmholtzOperator):
        return apply_helmholtz(op, field)
    return apply_coupled(op, field)


def dense_matrix(op) -> np.ndarray:
    """Assemble the operator by applying it to every unit basis field."""
    mesh = op.mesh
    n_int = (mesh.M - 1) ** mesh.dim
    ncomp = 1 if isinstance(op, HelmholtzOperator) else \
        len(QTensorField.zeros(mesh, op.dim).comps)
    n = ncomp * n_int
    if n > _DENSE_LIMIT:
        raise ValueError(f"dense assembly limited to {_DENSE_LIMIT} unknowns, got {n}")
    A = np.empty((n, n))
    basis = np.zeros(n)
    for k in range(n):
        basis[k] = 1.0
        A[:, k] = _flatten(op, _apply_any(op, _unflatten(op, basis)))
        basis[k] = 0.0
    return A


def dense_oracle(op, rhs_flat: np.ndarray) -> np.ndarray:
    """Pivoted-LU solve of the densely assembled operator (test oracle)."""
    A = dense_matrix(op)
    if rhs_flat.shape != (A.shape[0],):
        raise ValueError(f"rhs length {rhs_flat.shape}, expected ({A.shape[0]},)")
    return np.linalg.solve(A, rhs_flat)


def dense_solve_field(op, rhs):
    """Dense-oracle solve returning a grid field of the operator's kind."""
    return _unflatten(op, dense_oracle(op, _flatten(op, rhs)))
