"""Symmetric traceless tensor fields and the Landau-de Gennes energies.

A Q-tensor field stores the d(d+1)/2 upper-triangle components of a
symmetric d x d matrix per grid node, each as a scalar grid function.
Symmetry therefore holds by construction, while tracelessness is a
property of the data that the time schemes are expected to preserve
(and that the tests measure rather than enforce).

The bulk free-energy density is the truncated expansion

    (a/2) tr(Q^2) - (b/3) tr(Q^3) + (c/4) tr^2(Q^2),

with a real, b >= 0 and c > 0, and the elastic part combines the
Dirichlet seminorm of all components with the squared centered-difference
divergence rows weighted by (L2+L3)/2.  Radius bounds for the Frobenius
maximum principle and the matching stabilization constant are provided in
closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .mesh import (
    Mesh,
    centered_diff,
    forward_diff,
    grad_norm_sq,
    norm_sq,
    zero_boundary,
)

# Upper-triangle storage order and the double weight of off-diagonal
# entries in full-matrix sums.
_COMPONENTS = {
    2: ((0, 0), (0, 1), (1, 1)),
    3: ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)),
}
_WEIGHTS = {
    d: np.array([1.0 if i == j else 2.0 for (i, j) in comps])
    for d, comps in _COMPONENTS.items()
}
_INDEX = {
    d: {ij: k for k, ij in enumerate(comps)}
    for d, comps in _COMPONENTS.items()
}


def component_pairs(dim: int) -> tuple[tuple[int, int], ...]:
    return _COMPONENTS[dim]


def component_weights(dim: int) -> np.ndarray:
    return _WEIGHTS[dim]


class QTensorField:
    """Per-node symmetric d x d tensor values on a mesh.

    `comps` has shape (ncomp, *mesh.shape) in the order given by
    `component_pairs(dim)`.  Instances are treated as values: operations
    return new fields and never mutate their inputs.
    """

    __slots__ = ("mesh", "dim", "comps")

    def __init__(self, mesh: Mesh, dim: int, comps: np.ndarray):
        if dim not in _COMPONENTS:
            raise ValueError(f"tensor dimension must be 2 or 3, got {dim}")
        comps = np.asarray(comps, dtype=float)
        expected = (len(_COMPONENTS[dim]),) + mesh.shape
        if comps.shape != expected:
            raise ValueError(f"component array shape {comps.shape}, expected {expected}")
        self.mesh = mesh
        self.dim = dim
        self.comps = comps

    @classmethod
    def zeros(cls, mesh: Mesh, dim: int) -> "QTensorField":
        return cls(mesh, dim, np.zeros((len(_COMPONENTS[dim]),) + mesh.shape))

    def copy(self) -> "QTensorField":
        return QTensorField(self.mesh, self.dim, self.comps.copy())

    def component(self, i: int, j: int) -> np.ndarray:
        return self.comps[_INDEX[self.dim][(min(i, j), max(i, j))]]

    def full(self) -> np.ndarray:
        """Dense (d, d, *shape) view with the symmetric entries filled in."""
        d = self.dim
        out = np.empty((d, d) + self.mesh.shape)
        for k, (i, j) in enumerate(_COMPONENTS[d]):
            out[i, j] = self.comps[k]
            if i != j:
                out[j, i] = self.comps[k]
        return out

    def trace(self) -> np.ndarray:
        return sum(self.component(i, i) for i in range(self.dim))

    def frobenius(self) -> np.ndarray:
        """Nodewise Frobenius norm of the full matrix (off-diagonals twice)."""
        w = _WEIGHTS[self.dim].reshape((-1,) + (1,) * self.mesh.dim)
        return np.sqrt(np.sum(w * self.comps**2, axis=0))

    # Value-style arithmetic used by the time steppers.
    def __add__(self, other: "QTensorField") -> "QTensorField":
        return QTensorField(self.mesh, self.dim, self.comps + other.comps)

    def __sub__(self, other: "QTensorField") -> "QTensorField":
        return QTensorField(self.mesh, self.dim, self.comps - other.comps)

    def __mul__(self, scalar: float) -> "QTensorField":
        return QTensorField(self.mesh, self.dim, self.comps * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ModelParams:
    """Bulk and elastic constants plus the scheme constants kappa, C*, eta."""

    a: float
    b: float
    c: float
    L1: float
    L2: float = 0.0
    L3: float = 0.0
    kappa: float = 0.0
    c_star: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"bulk constant c must be positive, got {self.c}")
        if self.b < 0:
            raise ValueError(f"bulk constant b must be nonnegative, got {self.b}")
        if not self.L1 > 0:
            raise ValueError(f"elastic constant L1 must be positive, got {self.L1}")
        if self.kappa < 0:
            raise ValueError(f"stabilization kappa must be nonnegative, got {self.kappa}")

    @property
    def L23(self) -> float:
        """Half the combined cross-elastic constant, (L2+L3)/2."""
        return 0.5 * (self.L2 + self.L3)

    @property
    def L(self) -> float:
        """Scalar diffusion weight L1 + (L2+L3)/2 of the reduced operator."""
        return self.L1 + self.L23

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def _weights_col(dim: int, mesh_dim: int) -> np.ndarray:
    return _WEIGHTS[dim].reshape((-1,) + (1,) * mesh_dim)


def tensor_inner(A: QTensorField, B: QTensorField) -> float:
    """Sum over all d^2 components of the interior inner products."""
    inner = A.mesh.interior
    w = _WEIGHTS[A.dim]
    total = 0.0
    for k in range(len(w)):
        total += w[k] * float(np.sum(A.comps[k][inner] * B.comps[k][inner]))
    return A.mesh.h**A.mesh.dim * total


def tensor_norm(A: QTensorField) -> float:
    return math.sqrt(max(tensor_inner(A, A), 0.0))


def tensor_grad_norm_sq(A: QTensorField) -> float:
    """||grad Q||_h^2 summed over all d^2 components."""
    w = _WEIGHTS[A.dim]
    return float(sum(w[k] * grad_norm_sq(A.mesh, A.comps[k])
                     for k in range(len(w))))


def bulk_force(Q: QTensorField, params: ModelParams) -> QTensorField:
    """Nodewise f(Q) = -aQ + b(Q^2 - tr(Q^2)I/d) - c tr(Q^2) Q."""
    d = Q.dim
    F = Q.full()
    tr2 = np.einsum("ij...,ij...->...", F, F)
    if params.b != 0.0:
        F2 = np.einsum("ik...,kj...->ij...", F, F)
    out = np.empty_like(Q.comps)
    for k, (i, j) in enumerate(_COMPONENTS[d]):
        val = (-params.a - params.c * tr2) * F[i, j]
        if params.b != 0.0:
            val = val + params.b * (F2[i, j] - (tr2 / d if i == j else 0.0))
        out[k] = val
    return QTensorField(Q.mesh, d, out)


def bulk_energy(Q: QTensorField, params: ModelParams) -> float:
    """Discrete bulk energy E_1h[Q] over interior nodes."""
    inner = Q.mesh.interior
    F = Q.full()[(slice(None), slice(None)) + inner]
    tr2 = np.einsum("ij...,ij...->...", F, F)
    density = 0.5 * params.a * tr2 + 0.25 * params.c * tr2**2
    if params.b != 0.0:
        tr3 = np.einsum("ij...,jk...,ki...->...", F, F, F)
        density = density - (params.b / 3.0) * tr3
    return Q.mesh.h**Q.mesh.dim * float(np.sum(density))


def centered_divergence(Q: QTensorField) -> list[np.ndarray]:
    """Row divergences sum_k D^c_k Q^{ik}, one raw field per row i."""
    mesh = Q.mesh
    return [
        sum(centered_diff(mesh, Q.component(i, k), k) for k in range(Q.dim))
        for i in range(Q.dim)
    ]


def cross_derivative(Q: QTensorField) -> QTensorField:
    """Cross-elastic operator sum_k (D^c_{jk} Q^{ik} + D^c_{ik} Q^{jk})
    minus the (2/d) tr delta^{ij} correction; output vanishes on the boundary.

    Uses D^c_j (sum_k D^c_k Q^{ik}) = sum_k D^c_{jk} Q^{ik}, so only the d
    row divergences need differentiating.
    """
    mesh, d = Q.mesh, Q.dim
    div = centered_divergence(Q)
    T = [[centered_diff(mesh, div[i], j) for j in range(d)] for i in range(d)]
    tr_T = sum(T[i][i] for i in range(d))
    out = np.empty_like(Q.comps)
    for k, (i, j) in enumerate(_COMPONENTS[d]):
        val = T[i][j] + T[j][i]
        if i == j:
            val = val - (2.0 / d) * tr_T
        out[k] = zero_boundary(mesh, val)
    return QTensorField(mesh, d, out)


def elastic_energy(Q: QTensorField, params: ModelParams) -> float:
    """(L1/2)||grad Q||_h^2 + ((L2+L3)/2) sum_i ||sum_k D^c_k Q^{ik}||^2.

    Both quadratic forms are the exact discrete adjoints of the implicit
    spatial operators under the interior pairing: the gradient term sums
    every forward-difference edge, and the divergence term sums every node
    including the boundary (where the centered normal derivative of an
    interior-supported component does not vanish).  Dropping the boundary
    row would break the step-by-step energy decay identity.
    """
    e = 0.5 * params.L1 * tensor_grad_norm_sq(Q)
    if params.L2 + params.L3 != 0.0:
        hd = Q.mesh.h**Q.mesh.dim
        div = centered_divergence(Q)
        e += 0.5 * (params.L2 + params.L3) * sum(
            hd * float(np.sum(s * s)) for s in div
        )
    return e


def total_energy(Q: QTensorField, s: float, params: ModelParams) -> float:
    """Modified energy E_h[Q, s] = E_el[Q] + s."""
    return elastic_energy(Q, params) + s


def frobenius_sup_norm(Q: QTensorField) -> float:
    """Max over all nodes of the full-matrix Frobenius norm."""
    return float(np.max(Q.frobenius()))


def eta_bound(params: ModelParams, q0_sup: float, d: int) -> float:
    """Frobenius invariant-ball radius eta^(d) for the gradient flow."""
    if not params.c > 0:
        raise ValueError("eta bound requires c > 0")
    if q0_sup < 0:
        raise ValueError("initial sup norm must be nonnegative")
    if d == 2:
        a_minus = max(0.0, -params.a)
        return max(q0_sup, math.sqrt(a_minus / params.c))
    if d == 3:
        a, b, c = params.a, params.b, params.c
        if a <= b**2 / (24.0 * c):
            root = (abs(b) + math.sqrt(b**2 - 24.0 * a * c)) / (2.0 * math.sqrt(6.0) * c)
            return max(q0_sup, root)
        return q0_sup
    raise ValueError(f"dimension must be 2 or 3, got {d}")


def fbar(xi, params: ModelParams):
    """Radial envelope -a xi + (b/sqrt 6) xi^2 - c xi^3 of the bulk force.

    Callers in the 2D maximum-principle path must use b = 0.
    """
    xi = np.asarray(xi, dtype=float)
    val = -params.a * xi + (params.b / math.sqrt(6.0)) * xi**2 - params.c * xi**3
    return float(val) if val.ndim == 0 else val


def _fbar_prime(xi: float, params: ModelParams) -> float:
    return -params.a + (2.0 * params.b / math.sqrt(6.0)) * xi - 3.0 * params.c * xi**2


def kappa_min(params: ModelParams, eta: float) -> float:
    """Smallest stabilization constant max{a + c eta^2, max |fbar'| on [0, eta]}.

    fbar' is a concave quadratic, so its absolute maximum over [0, eta] is
    attained at an endpoint or at the vertex b/(3 sqrt(6) c).
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    candidates = [0.0, eta]
    vertex = params.b / (3.0 * math.sqrt(6.0) * params.c)
    if 0.0 < vertex < eta:
        candidates.append(vertex)
    slope = max(abs(_fbar_prime(x, params)) for x in candidates)
    return max(params.a + params.c * eta**2, slope)


def default_c_star(params: ModelParams, eta: float, volume: float) -> float:
    """Valid lower-bound constant: -volume * min of the radial bulk density.

    The radial density (a/2)x^2 - (b/(3 sqrt 6))x^3 + (c/4)x^4 minorizes the
    bulk density for |Q|_F = x; its stationary points are x = 0 and the roots
    of c x^2 - (b/sqrt 6) x + a, all of which lie in [0, eta] by construction
    of eta, so the global minimum is found among those candidates and eta.
    """
    a, b, c = params.a, params.b, params.c

    def psi(x: float) -> float:
        return 0.5 * a * x**2 - (b / (3.0 * math.sqrt(6.0))) * x**3 + 0.25 * c * x**4

    candidates = [0.0, eta]
    disc = (b / math.sqrt(6.0)) ** 2 - 4.0 * a * c
    if disc >= 0.0:
        for sgn in (-1.0, 1.0):
            root = (b / math.sqrt(6.0) + sgn * math.sqrt(disc)) / (2.0 * c)
            if 0.0 < root < eta:
                candidates.append(root)
    return max(0.0, -volume * min(psi(x) for x in candidates))


# --- nodewise eigen-analysis (defect diagnostics, director output) ---


def _eigh_batch_2x2(a11, a12, a22):
    """Eigenvalues (descending) and major eigenvector of [[a11,a12],[a12,a22]]."""
    half_tr = 0.5 * (a11 + a22)
    half_diff = 0.5 * (a11 - a22)
    r = np.sqrt(half_diff**2 + a12**2)
    lam1, lam2 = half_tr + r, half_tr - r
    # Stable eigenvector branch: (r + |half_diff|, a12) flipped by the sign
    # of half_diff; degenerate nodes (r = 0) get a zero vector.
    vx = np.where(half_diff >= 0, r + half_diff, a12)
    vy = np.where(half_diff >= 0, a12, r - half_diff)
    nrm = np.sqrt(vx**2 + vy**2)
    safe = nrm > 0
    vx = np.where(safe, vx / np.where(safe, nrm, 1.0), 0.0)
    vy = np.where(safe, vy / np.where(safe, nrm, 1.0), 0.0)
    return lam1, lam2, vx, vy


def _jacobi_eigh_3x3(mats: np.ndarray, tol: float = 1e-12,
                     max_sweeps: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a batch of symmetric 3x3 matrices.

    Returns (eigenvalues (n,3) descending, eigenvectors (n,3,3) as columns).
    Sweeps stop once every off-diagonal norm is below tol * max(1, |A|_F).
    """
    a = np.array(mats, dtype=float)
    n = a.shape[0]
    v = np.tile(np.eye(3), (n, 1, 1))
    scale = np.maximum(1.0, np.sqrt(np.einsum("nij,nij->n", a, a)))
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * (a[:, 0, 1]**2 + a[:, 0, 2]**2 + a[:, 1, 2]**2))
        if np.all(off <= tol * scale):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[:, p, q]
            active = np.abs(apq) > 0.0
            if not np.any(active):
                continue
            theta = np.zeros(n)
            theta[active] = (a[active, q, q] - a[active, p, p]) / (2.0 * apq[active])
            t = np.where(
                active,
                np.sign(theta) / (np.abs(theta) + np.sqrt(1.0 + theta**2)),
                0.0,
            )
            # sign(0) = 0 would annihilate the rotation for theta = 0.
            t = np.where(active & (theta == 0.0), 1.0, t)
            cs = 1.0 / np.sqrt(1.0 + t**2)
            sn = t * cs
            for rot in (a,):
                row_p = rot[:, p, :].copy()
                row_q = rot[:, q, :].copy()
                rot[:, p, :] = cs[:, None] * row_p - sn[:, None] * row_q
                rot[:, q, :] = sn[:, None] * row_p + cs[:, None] * row_q
                col_p = rot[:, :, p].copy()
                col_q = rot[:, :, q].copy()
                rot[:, :, p] = cs[:, None] * col_p - sn[:, None] * col_q
                rot[:, :, q] = sn[:, None] * col_p + cs[:, None] * col_q
            col_p = v[:, :, p].copy()
            col_q = v[:, :, q].copy()
            v[:, :, p] = cs[:, None] * col_p - sn[:, None] * col_q
            v[:, :, q] = sn[:, None] * col_p + cs[:, None] * col_q
    lam = np.stack([a[:, 0, 0], a[:, 1, 1], a[:, 2, 2]], axis=1)
    order = np.argsort(-lam, axis=1, kind="stable")
    lam_sorted = np.take_along_axis(lam, order, axis=1)
    vec_sorted = np.take_along_axis(v, order[:, None, :], axis=2)
    return lam_sorted, vec_sorted


def eigen_gap_field(Q: QTensorField, shift: float) -> np.ndarray:
    """Nodewise difference of the two largest eigenvalues of Q + shift*I.

    Zeros of the gap mark defects (locally isotropic orientation).  The gap
    itself is invariant under the spectral shift; the parameter only matches
    the convention used when plotting Q + I/d.
    """
    if Q.dim == 2:
        lam1, lam2, _, _ = _eigh_batch_2x2(
            Q.component(0, 0) + shift, Q.component(0, 1), Q.component(1, 1) + shift
        )
        return lam1 - lam2
    mats = np.moveaxis(Q.full(), (0, 1), (-2, -1)).reshape(-1, 3, 3)
    mats = mats + shift * np.eye(3)
    lam, _ = _jacobi_eigh_3x3(mats)
    return (lam[:, 0] - lam[:, 1]).reshape(Q.mesh.shape)


def dominant_director(Q: QTensorField) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue, shape (*mesh.shape, d).

    Directors are headless, so the sign is fixed by making the entry of
    largest magnitude positive.  Nodes where Q vanishes exactly (isotropic,
    e.g. the boundary) get the zero vector.
    """
    shape = Q.mesh.shape
    if Q.dim == 2:
        _, _, vx, vy = _eigh_batch_2x2(
            Q.component(0, 0), Q.component(0, 1), Q.component(1, 1)
        )
        vec = np.stack([vx, vy], axis=-1)
    else:
        mats = np.moveaxis(Q.full(), (0, 1), (-2, -1)).reshape(-1, 3, 3)
        lam, v = _jacobi_eigh_3x3(mats)
        vec = v[:, :, 0].reshape(shape + (3,))
    iso = Q.frobenius() == 0.0
    vec = np.where(iso[..., None], 0.0, vec)
    # Headless sign convention: largest-magnitude entry positive.
    lead = np.take_along_axis(
        vec, np.argmax(np.abs(vec), axis=-1)[..., None], axis=-1
    )
    sign = np.where(lead < 0, -1.0, 1.0)
    return vec * sign
