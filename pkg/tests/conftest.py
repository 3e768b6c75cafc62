"""Shared helpers: random admissible fields and loop-based stencil oracles.

The oracles here are deliberately written with plain index loops and ghost
lookups so they share no code path with the vectorized operators they
check.
"""

from __future__ import annotations

import numpy as np
import pytest

from ldgflow.mesh import Mesh, build_mesh, zero_boundary
from ldgflow.qtensor import QTensorField, component_pairs, frobenius_sup_norm


def random_interior_field(mesh: Mesh, rng) -> np.ndarray:
    u = mesh.zeros()
    u[mesh.interior] = rng.standard_normal((mesh.M - 1,) * mesh.dim)
    return u


def random_traceless(mesh: Mesh, dim: int, rng, sup: float | None = None) -> QTensorField:
    comps = rng.standard_normal((len(component_pairs(dim)),) + mesh.shape)
    Q = QTensorField(mesh, dim, comps)
    tr = Q.trace()
    for i in range(dim):
        Q.component(i, i)[...] -= tr / dim
    Q = QTensorField(mesh, dim, np.stack([zero_boundary(mesh, c) for c in Q.comps]))
    if sup is not None:
        cur = frobenius_sup_norm(Q)
        if cur > 0:
            Q = Q * (sup / cur)
    return Q


def random_traceless_symmetric_matrices(dim: int, n: int, rng,
                                        max_norm: float | None = None) -> np.ndarray:
    A = rng.standard_normal((n, dim, dim))
    A = 0.5 * (A + A.transpose(0, 2, 1))
    trace = np.einsum("nii->n", A)
    A -= trace[:, None, None] * np.eye(dim) / dim
    if max_norm is not None:
        norms = np.sqrt(np.einsum("nij,nij->n", A, A))
        scale = max_norm * rng.uniform(0.05, 1.0, size=n) / np.maximum(norms, 1e-30)
        A *= scale[:, None, None]
    return A


def ghost(u: np.ndarray, idx: tuple[int, ...]) -> float:
    """Node value with zero ghosts outside 0..M."""
    for k, n in zip(idx, u.shape):
        if k < 0 or k >= n:
            return 0.0
    return float(u[idx])


def oracle_laplacian(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    out = mesh.zeros()
    M, h2 = mesh.M, mesh.h**2
    for idx in np.ndindex(*mesh.shape):
        if any(k == 0 or k == M for k in idx):
            continue
        acc = -2.0 * mesh.dim * u[idx]
        for ax in range(mesh.dim):
            for step in (-1, 1):
                nb = list(idx)
                nb[ax] += step
                acc += ghost(u, tuple(nb))
        out[idx] = acc / h2
    return out


def oracle_centered(mesh: Mesh, u: np.ndarray, axis: int) -> np.ndarray:
    out = mesh.zeros()
    for idx in np.ndindex(*mesh.shape):
        hi = list(idx)
        lo = list(idx)
        hi[axis] += 1
        lo[axis] -= 1
        out[idx] = (ghost(u, tuple(hi)) - ghost(u, tuple(lo))) / (2.0 * mesh.h)
    return out


def oracle_cross_derivative(Q: QTensorField) -> QTensorField:
    """Componentwise loops over the definition of the cross-elastic operator."""
    mesh, d = Q.mesh, Q.dim
    second = {}
    for k in range(d):
        for l in range(d):
            for i in range(d):
                for j in range(i, d):
                    key = (k, l, i, j)
                    second[key] = oracle_centered(
                        mesh, oracle_centered(mesh, Q.component(i, j), l), k
                    )

    def d2(k, l, i, j):
        return second[(k, l, min(i, j), max(i, j))]

    trace_part = mesh.zeros()
    for k in range(d):
        for l in range(d):
            trace_part = trace_part + d2(l, k, l, k)
    out = QTensorField.zeros(mesh, d)
    for i in range(d):
        for j in range(i, d):
            val = mesh.zeros()
            for k in range(d):
                val = val + d2(j, k, i, k) + d2(i, k, j, k)
            if i == j:
                val = val - (2.0 / d) * trace_part
            out.component(i, j)[...] = zero_boundary(mesh, val)
    return out


def oracle_bulk_force(Q: QTensorField, a, b, c) -> QTensorField:
    """Nodewise matrix arithmetic straight from the force definition."""
    mesh, d = Q.mesh, Q.dim
    out = QTensorField.zeros(mesh, d)
    F = Q.full()
    for idx in np.ndindex(*mesh.shape):
        mat = F[(slice(None), slice(None)) + idx]
        tr2 = float(np.trace(mat @ mat))
        f = -a * mat + b * (mat @ mat - tr2 * np.eye(d) / d) - c * tr2 * mat
        for i in range(d):
            for j in range(i, d):
                out.component(i, j)[idx] = f[i, j]
    return out


def oracle_bulk_energy(Q: QTensorField, a, b, c) -> float:
    mesh = Q.mesh
    F = Q.full()
    total = 0.0
    M = mesh.M
    for idx in np.ndindex(*mesh.shape):
        if any(k == 0 or k == M for k in idx):
            continue
        mat = F[(slice(None), slice(None)) + idx]
        tr2 = float(np.trace(mat @ mat))
        tr3 = float(np.trace(mat @ mat @ mat))
        total += 0.5 * a * tr2 - (b / 3.0) * tr3 + 0.25 * c * tr2**2
    return mesh.h**mesh.dim * total


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def mesh8():
    return build_mesh(2, 8, 1.0)


@pytest.fixture
def mesh3d():
    return build_mesh(3, 6, 1.0)
