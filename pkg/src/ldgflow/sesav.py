"""Stabilized exponential-auxiliary-variable time integrators.

The evolving unknown is the pair (Q_h, s) where s tracks the bulk energy
through the positive weight g(Q, s) = exp(s - E_1h[Q]).  Each step solves
one linear system per tensor component, updates the auxiliary scalar with
the matching discrete inner products (so the modified energy
E_h = E_el + s decays identically in exact arithmetic), and finally clamps

    s <- max{s~, -C* - E_el[Q]}

which keeps the modified energy bounded below without breaking the decay.

Four steppers are provided: first/second order with the full cross-elastic
operator, and the reduced variants (2D, or 3D with L2+L3 = 0) whose spatial
part collapses to a scalar Laplacian and is solved exactly by DST.  The
reduced first-order scheme preserves the Frobenius bound eta for any step
size when kappa is large enough; the second-order one does so under a step
restriction computed by `mbp_tau_max`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .linsolve import (
    CoupledOperator,
    HelmholtzOperator,
    solve_coupled_krylov,
    solve_helmholtz_dst,
)
from .qtensor import (
    ModelParams,
    QTensorField,
    bulk_energy,
    bulk_force,
    elastic_energy,
    frobenius_sup_norm,
    tensor_inner,
)

# Exponent magnitude past which g over/underflows into a useless regime;
# reaching it means the trajectory blew up.
_G_EXPONENT_LIMIT = 700.0

# Componentwise agreement with the dense-oracle step at 1e-10 needs the
# Krylov path solved a bit tighter than its 1e-10 public default.
_CG_TOL = 1e-12


class BlowUpError(ArithmeticError):
    """The auxiliary exponent left the representable range (diverged run)."""


@dataclass(frozen=True)
class SavState:
    """Solution bundle: tensor field Q, auxiliary scalar s, current time."""

    Q: QTensorField
    s: float
    t: float


@dataclass(frozen=True)
class StepReport:
    """One accepted step: new state plus the diagnostics of the update."""

    state: SavState
    tau_used: float
    energy: float
    sup_norm: float
    g_value: float
    clamped: bool


@dataclass
class AdaptiveController:
    """Energy-rate-based step controller with hard bounds [tau_min, tau_max]."""

    tau_min: float
    tau_max: float
    alpha: float
    prev_energy: float

    def __post_init__(self):
        if not (0 < self.tau_min <= self.tau_max):
            raise ValueError("need 0 < tau_min <= tau_max")


def initial_state(Q0: QTensorField, params: ModelParams, t: float = 0.0) -> SavState:
    """Start state with s initialized to the discrete bulk energy of Q0."""
    return SavState(Q=Q0, s=bulk_energy(Q0, params), t=t)


def g_value(Q: QTensorField, s: float, params: ModelParams) -> float:
    """Auxiliary weight exp(s - E_1h[Q]), computed as a single exponential."""
    exponent = s - bulk_energy(Q, params)
    if not math.isfinite(exponent) or abs(exponent) > _G_EXPONENT_LIMIT:
        raise BlowUpError(
            f"auxiliary exponent {exponent:.3e} out of range; the run diverged"
        )
    return math.exp(exponent)


def g_star_bound(state: SavState, params: ModelParams) -> float:
    """Constructive upper bound exp(E_h[Q, s] + C*) valid from `state` on.

    Energy decay makes the bound evaluated at any state dominate g along
    the rest of the trajectory.
    """
    return math.exp(total_energy_of(state, params) + params.c_star)


def total_energy_of(state: SavState, params: ModelParams) -> float:
    return elastic_energy(state.Q, params) + state.s


def mbp_tau_max(params: ModelParams, h: float, d: int, g_star_upper: float) -> float:
    """Step bound (kappa G*/2 + 2^(d-1) L / h^2)^(-1) for the reduced
    second-order scheme, with L = L1 + (L2+L3)/2."""
    if not h > 0:
        raise ValueError("mesh spacing must be positive")
    if not g_star_upper > 0:
        raise ValueError("g upper bound must be positive")
    return 1.0 / (0.5 * params.kappa * g_star_upper
                  + 2.0 ** (d - 1) * params.L / h**2)


def adaptive_tau(controller: AdaptiveController, energy_now: float,
                 tau_prev: float) -> float:
    """Next step size max{tau_min, tau_max / sqrt(1 + alpha (dE/dt)^2)}."""
    if not tau_prev > 0:
        raise ValueError("previous step size must be positive")
    rate = (energy_now - controller.prev_energy) / tau_prev
    controller.prev_energy = energy_now
    return max(controller.tau_min,
               controller.tau_max / math.sqrt(1.0 + controller.alpha * rate * rate))


def _solve_componentwise(mesh, alpha: float, L: float,
                         rhs: QTensorField) -> QTensorField:
    op = HelmholtzOperator(alpha, L, mesh)
    return QTensorField(mesh, rhs.dim, np.stack(
        [solve_helmholtz_dst(op, comp) for comp in rhs.comps]
    ))


def _solve_implicit(mesh, dim, alpha: float, cL1: float, cL23: float,
                    rhs: QTensorField) -> QTensorField:
    if cL23 == 0.0:
        return _solve_componentwise(mesh, alpha, cL1, rhs)
    op = CoupledOperator(alpha=alpha, L1=cL1, L23=cL23, mesh=mesh, dim=dim)
    return solve_coupled_krylov(op, rhs, tol=_CG_TOL)


def _clamp(s_tilde: float, Q_new: QTensorField,
           params: ModelParams) -> tuple[float, float, bool]:
    e_el = elastic_energy(Q_new, params)
    floor = -params.c_star - e_el
    if s_tilde < floor:
        return floor, e_el, True
    return s_tilde, e_el, False


def _first_order_step(state: SavState, tau: float, params: ModelParams,
                      cL1: float, cL23: float) -> StepReport:
    if not tau > 0:
        raise ValueError(f"step size must be positive, got {tau}")
    Q, s = state.Q, state.s
    g = g_value(Q, s, params)
    f = bulk_force(Q, params)
    alpha = 1.0 / tau + params.kappa * g
    rhs = alpha * Q + g * f
    Q_new = _solve_implicit(Q.mesh, Q.dim, alpha, cL1, cL23, rhs)
    s_tilde = s - g * tensor_inner(f, Q_new - Q)
    s_new, e_el, clamped = _clamp(s_tilde, Q_new, params)
    return StepReport(
        state=SavState(Q=Q_new, s=s_new, t=state.t + tau),
        tau_used=tau,
        energy=e_el + s_new,
        sup_norm=frobenius_sup_norm(Q_new),
        g_value=g,
        clamped=clamped,
    )


def _second_order_step(state: SavState, tau: float, params: ModelParams,
                       cL1: float, cL23: float,
                       predictor) -> StepReport:
    if not tau > 0:
        raise ValueError(f"step size must be positive, got {tau}")
    Q, s = state.Q, state.s
    half = predictor(state, 0.5 * tau, params)
    Q_star, s_star = half.state.Q, half.state.s
    g = g_value(Q_star, s_star, params)
    f_star = bulk_force(Q_star, params)

    # Crank-Nicolson split: implicit coefficients are halved, the explicit
    # half of the spatial operator and the stabilization move to the rhs.
    alpha = 1.0 / tau + 0.5 * params.kappa * g
    explicit = _apply_spatial(Q, cL1, cL23)
    rhs = (1.0 / tau - 0.5 * params.kappa * g) * Q + explicit \
        + g * (f_star + params.kappa * Q_star)
    Q_new = _solve_implicit(Q.mesh, Q.dim, alpha, cL1, cL23, rhs)

    dQ = Q_new - Q
    Q_mid = 0.5 * (Q_new + Q)
    s_tilde = s - g * tensor_inner(f_star, dQ) \
        + params.kappa * g * tensor_inner(Q_mid - Q_star, dQ)
    s_new, e_el, clamped = _clamp(s_tilde, Q_new, params)
    return StepReport(
        state=SavState(Q=Q_new, s=s_new, t=state.t + tau),
        tau_used=tau,
        energy=e_el + s_new,
        sup_norm=frobenius_sup_norm(Q_new),
        g_value=g,
        clamped=clamped,
    )


def _apply_spatial(Q: QTensorField, cL1: float, cL23: float) -> QTensorField:
    from .mesh import laplacian
    from .qtensor import cross_derivative

    out = cL1 * np.stack([laplacian(Q.mesh, comp) for comp in Q.comps])
    if cL23 != 0.0:
        out = out + cL23 * cross_derivative(Q).comps
    return QTensorField(Q.mesh, Q.dim, out)


def sesav1_step(state: SavState, tau: float, params: ModelParams) -> StepReport:
    """First-order step with the full elastic operator (L1 and cross terms)."""
    return _first_order_step(state, tau, params, params.L1, params.L23)


def sesav2_step(state: SavState, tau: float, params: ModelParams) -> StepReport:
    """Second-order Crank-Nicolson step; predictor is a half sesav1 step."""
    return _second_order_step(state, tau, params, 0.5 * params.L1,
                              0.5 * params.L23, sesav1_step)


def _require_mbp_regime(dim: int, params: ModelParams) -> None:
    if dim == 2:
        if params.b != 0.0:
            raise ValueError("2D maximum-principle scheme requires b = 0")
    elif params.L23 != 0.0:
        raise ValueError("3D maximum-principle scheme requires L2 + L3 = 0")


def mbp_sesav1_step(state: SavState, tau: float, params: ModelParams) -> StepReport:
    """First-order step of the reduced scheme (scalar Laplacian, DST solve).

    Valid for d = 2 with b = 0, and d = 3 with L2 + L3 = 0; preserves the
    Frobenius bound eta for any tau once kappa >= kappa_min.
    """
    _require_mbp_regime(state.Q.dim, params)
    return _first_order_step(state, tau, params, params.L, 0.0)


def mbp_sesav2_step(state: SavState, tau: float, params: ModelParams) -> StepReport:
    """Second-order reduced step; predictor is a half mbp_sesav1 step.

    Steps beyond `mbp_tau_max` only forfeit the Frobenius-bound guarantee
    (energy decay is unconditional), so they warn instead of failing.
    """
    _require_mbp_regime(state.Q.dim, params)
    bound = mbp_tau_max(params, state.Q.mesh.h, state.Q.dim,
                        g_star_bound(state, params))
    if tau > bound:
        warnings.warn(
            f"step {tau:.3g} exceeds the maximum-principle bound {bound:.3g}; "
            "the Frobenius bound is no longer guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
    return _second_order_step(state, tau, params, 0.5 * params.L, 0.0,
                              mbp_sesav1_step)


STEPPERS = {
    "sesav1": sesav1_step,
    "sesav2": sesav2_step,
    "mbp_sesav1": mbp_sesav1_step,
    "mbp_sesav2": mbp_sesav2_step,
}
