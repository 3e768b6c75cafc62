"""Uniform Cartesian meshes with homogeneous Dirichlet boundaries.

The domain is the cube [0, L]^d (d = 2 or 3) partitioned into M intervals
per axis, h = L/M.  Grid functions live on all nodes (index 0..M per axis)
and vanish on the boundary; ghost values outside the domain are taken as
zero.  This module provides the compact difference operators (forward,
backward, centered), the discrete Laplacian, the interior inner products
and norms, and the sine-transform diagonalization of the 1D Dirichlet
Laplacian used by the fast solvers.

Conventions fixed here for reproducibility:

* the interior inner product sums node indices 1..M-1 per axis with
  weight h^d;
* the edge (gradient) norm is the telescoped sum over all M edges per
  axis with weight h^d, which equals the averaged edge inner product
  when the node average includes boundary nodes with zero ghost edges.
  With this convention <Laplacian u, v> = -[grad u, grad v] holds exactly
  (to roundoff), which the tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dstn


@dataclass(frozen=True)
class Mesh:
    """Uniform cubic grid: `M` intervals of size `h` per axis, d = `dim`."""

    dim: int
    M: int
    domain_length: float
    h: float

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M + 1,) * self.dim

    @property
    def interior(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * self.dim

    @property
    def volume(self) -> float:
        return self.domain_length**self.dim

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def axis_coordinates(self) -> np.ndarray:
        """Node coordinates 0, h, ..., L along one axis."""
        return np.linspace(0.0, self.domain_length, self.M + 1)

    def node_coordinates(self) -> tuple[np.ndarray, ...]:
        """Per-axis coordinate arrays broadcastable to the node shape."""
        x = self.axis_coordinates()
        return tuple(
            x.reshape((1,) * ax + (-1,) + (1,) * (self.dim - ax - 1))
            for ax in range(self.dim)
        )


def build_mesh(dim: int, M: int, domain_length: float) -> Mesh:
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if M < 4:
        raise ValueError(f"need at least 4 intervals per axis, got M={M}")
    if not domain_length > 0:
        raise ValueError(f"domain_length must be positive, got {domain_length}")
    return Mesh(dim=dim, M=int(M), domain_length=float(domain_length),
                h=float(domain_length) / int(M))


def _check_field(mesh: Mesh, u: np.ndarray) -> None:
    if u.shape != mesh.shape:
        raise ValueError(f"field shape {u.shape} does not match mesh {mesh.shape}")


def _axis_slice(dim: int, axis: int, sl: slice,
                rest: slice = slice(None)) -> tuple[slice, ...]:
    out = [rest] * dim
    out[axis] = sl
    return tuple(out)


def laplacian(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Compact (2d+1)-point Laplacian; zero on boundary nodes."""
    _check_field(mesh, u)
    out = np.zeros_like(u)
    inner = mesh.interior
    acc = (-2.0 * mesh.dim) * u[inner]
    for ax in range(mesh.dim):
        lo = [slice(1, -1)] * mesh.dim
        hi = [slice(1, -1)] * mesh.dim
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        acc = acc + u[tuple(lo)] + u[tuple(hi)]
    out[inner] = acc / mesh.h**2
    return out


def forward_diff(mesh: Mesh, u: np.ndarray, axis: int) -> np.ndarray:
    """Forward difference onto the M edges of `axis` (edge-centered values)."""
    _check_field(mesh, u)
    return np.diff(u, axis=axis) / mesh.h


def centered_diff(mesh: Mesh, u: np.ndarray, axis: int) -> np.ndarray:
    """Centered first difference at every node, ghost values zero.

    Boundary nodes keep their (generally nonzero) one-sided value so that
    composed second differences D^c_k D^c_l see the correct stencil.
    """
    _check_field(mesh, u)
    out = np.empty_like(u)
    d = mesh.dim
    two_h = 2.0 * mesh.h
    mid = _axis_slice(d, axis, slice(1, -1))
    out[mid] = (u[_axis_slice(d, axis, slice(2, None))]
                - u[_axis_slice(d, axis, slice(0, -2))]) / two_h
    out[_axis_slice(d, axis, slice(0, 1))] = \
        u[_axis_slice(d, axis, slice(1, 2))] / two_h
    out[_axis_slice(d, axis, slice(-1, None))] = \
        -u[_axis_slice(d, axis, slice(-2, -1))] / two_h
    return out


def centered_second(mesh: Mesh, u: np.ndarray, ax1: int, ax2: int) -> np.ndarray:
    """Composed centered second difference D^c_{ax1} D^c_{ax2} u."""
    return centered_diff(mesh, centered_diff(mesh, u, ax2), ax1)


def zero_boundary(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Return a copy of `u` with all boundary nodes set to zero."""
    out = np.zeros_like(u)
    out[mesh.interior] = u[mesh.interior]
    return out


def inner_product(mesh: Mesh, u: np.ndarray, v: np.ndarray) -> float:
    """Interior inner product <u, v>_h = h^d sum over nodes 1..M-1."""
    _check_field(mesh, u)
    if v.shape != u.shape:
        raise ValueError("mesh mismatch between fields")
    return mesh.h**mesh.dim * float(np.sum(u[mesh.interior] * v[mesh.interior]))


def norm_sq(mesh: Mesh, u: np.ndarray) -> float:
    return inner_product(mesh, u, u)


def grad_norm_sq(mesh: Mesh, u: np.ndarray) -> float:
    """Discrete H^1 seminorm ||grad u||_h^2 over all forward-difference edges.

    Equals -<Laplacian u, u>_h for fields vanishing on the boundary.
    """
    _check_field(mesh, u)
    total = 0.0
    for ax in range(mesh.dim):
        d = np.diff(u, axis=ax)
        total += float(np.sum(d * d))
    return total * mesh.h ** (mesh.dim - 2)


@dataclass(frozen=True)
class DirichletSpectrum:
    """Eigen-data of the 1D Dirichlet Laplacian and its Kronecker sum.

    `axis_eigenvalues[k-1]` = -(4/h^2) sin^2(k pi / 2M), k = 1..M-1; the
    d-dimensional symbol is the Kronecker sum over axes.  Transforms are
    orthonormal DST-I, which is involutive, so forward and inverse coincide.
    """

    mesh: Mesh
    axis_eigenvalues: np.ndarray
    symbol: np.ndarray

    def transform(self, u_interior: np.ndarray) -> np.ndarray:
        return dstn(u_interior, type=1, norm="ortho")

    inverse = transform


def dirichlet_eigenvalues(M: int, h: float) -> np.ndarray:
    """Spectrum of the 1D second-difference matrix with Dirichlet ends."""
    k = np.arange(1, M)
    return -(4.0 / h**2) * np.sin(k * np.pi / (2.0 * M)) ** 2


@lru_cache(maxsize=32)
def dirichlet_spectrum(mesh: Mesh) -> DirichletSpectrum:
    lam = dirichlet_eigenvalues(mesh.M, mesh.h)
    symbol = np.zeros((mesh.M - 1,) * mesh.dim)
    for ax in range(mesh.dim):
        shape = [1] * mesh.dim
        shape[ax] = mesh.M - 1
        symbol = symbol + lam.reshape(shape)
    symbol.setflags(write=False)
    lam.setflags(write=False)
    return DirichletSpectrum(mesh=mesh, axis_eigenvalues=lam, symbol=symbol)
