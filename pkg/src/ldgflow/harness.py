"""Experiment presets, the simulation driver, and convergence studies.

Three named experiments are bundled:

* ``convergence2d`` -- smooth double-sine director data on the unit square,
  the setup used for the space/time accuracy tables;
* ``hole2d`` -- a normalized director with a mismatch line on [0,2]^2 that
  collapses through a shrinking defect ring;
* ``orient3d`` -- piecewise axis-aligned director boxes in [0,2]^3 run with
  the adaptive step controller.

The driver checks the structural guarantees while it runs: the modified
energy must never increase, and in the reduced (maximum-principle) regime
the Frobenius sup norm must stay inside the eta ball.  Violations abort
with the offending step index, because they indicate an implementation bug
rather than a numerical accident.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .mesh import Mesh, build_mesh, zero_boundary
from .qtensor import (
    ModelParams,
    QTensorField,
    component_pairs,
    default_c_star,
    eigen_gap_field,
    eta_bound,
    frobenius_sup_norm,
    tensor_grad_norm_sq,
    tensor_norm,
    total_energy,
)
from .sesav import (
    STEPPERS,
    AdaptiveController,
    SavState,
    adaptive_tau,
    g_star_bound,
    initial_state,
    mbp_tau_max,
)

ENERGY_SLACK = 1e-12
MBP_SLACK = 1e-12
_TIME_EPS = 1e-12


class InvariantViolation(RuntimeError):
    """A structural guarantee (energy decay, Frobenius bound) failed."""


@dataclass(frozen=True)
class AdaptiveSpec:
    tau_min: float
    tau_max: float
    alpha: float

    def __post_init__(self):
        if not (0 < self.tau_min <= self.tau_max):
            raise ValueError("need 0 < tau_min <= tau_max")
        if self.alpha < 0:
            raise ValueError("adaptive weight alpha must be nonnegative")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one run."""

    dim: int
    M: int
    domain_length: float
    params: ModelParams
    scheme: str
    T: float
    initial: str
    tau: float | None = None
    adaptive: AdaptiveSpec | None = None
    snapshot_every: int = 0
    out_format: str = "vtk"

    def __post_init__(self):
        if self.scheme not in STEPPERS:
            raise ValueError(f"unknown scheme {self.scheme!r}; "
                             f"choose from {sorted(STEPPERS)}")
        if not self.T > 0:
            raise ValueError("time horizon T must be positive")
        if (self.tau is None) == (self.adaptive is None):
            raise ValueError("exactly one of tau and adaptive must be set")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("step size tau must be positive")
        if self.snapshot_every < 0:
            raise ValueError("snapshot cadence must be nonnegative")
        if self.out_format not in ("vtk", "csv"):
            raise ValueError("output format must be 'vtk' or 'csv'")

    def mesh(self) -> Mesh:
        return build_mesh(self.dim, self.M, self.domain_length)


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    time: float
    tau: float
    energy: float
    sup_norm: float
    s: float
    g: float
    clamped: bool


class Snapshot(NamedTuple):
    step: int
    time: float
    state: SavState


class SimulationResult(NamedTuple):
    state: SavState
    records: list[DiagnosticsRecord]
    snapshots: list[Snapshot]


# --- presets ----------------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    name: str
    dim: int
    M: int
    domain_length: float
    a: float
    b: float
    c: float
    L1: float
    kappa: float
    scheme: str
    T: float
    description: str
    L2: float = 0.0
    L3: float = 0.0
    c_star: float | None = None  # None: computed valid lower bound
    tau: float | None = None
    adaptive: AdaptiveSpec | None = None
    normalized: bool = False  # Q0 = nn^T/|n|^2 - I/d instead of nn^T - |n|^2 I/d
    director: Callable[..., list[np.ndarray]] = None  # type: ignore[assignment]


def _director_convergence2d(x, y):
    phi = np.sin(2.0 * np.pi * x) * np.sin(2.0 * np.pi * y)
    return [phi, phi.copy()]


def _director_hole2d(x, y):
    return [
        x * (2.0 - x) * y * (2.0 - y) / 16.0,
        np.sin(np.pi * x) * np.sin(np.pi * y),
    ]


def _director_orient3d(x, y, z):
    in_x_box = (x >= 1.15) & (x <= 1.65) & (y >= 0.75) & (y <= 1.25) \
        & (z >= 0.35) & (z <= 0.85)
    in_z_box = (x >= 0.35) & (x <= 0.85) & (y >= 0.75) & (y <= 1.25) \
        & (z >= 1.15) & (z <= 1.65)
    nx = np.where(in_x_box, 1.0, 0.0)
    nz = np.where(in_z_box, 1.0, 0.0)
    ny = np.where(in_x_box | in_z_box, 0.0, 1.0)
    return [nx, ny, nz]


PRESETS = {
    "convergence2d": Preset(
        name="convergence2d", dim=2, M=256, domain_length=1.0,
        a=-0.25, b=1.0, c=1.0, L1=1.0e-3, kappa=2.0, c_star=1.0,
        scheme="sesav2", T=1.0, tau=1.0 / 512.0,
        normalized=False, director=_director_convergence2d,
        description="smooth double-sine director on the unit square "
                    "(accuracy-table setup)",
    ),
    "hole2d": Preset(
        name="hole2d", dim=2, M=80, domain_length=2.0,
        a=-4.0, b=0.0, c=4.0, L1=4.5e-3, kappa=8.0, c_star=None,
        scheme="mbp_sesav2", T=2.0, tau=0.01,
        normalized=True, director=_director_hole2d,
        description="disappearing-hole relaxation with a shrinking defect ring",
    ),
    "orient3d": Preset(
        name="orient3d", dim=3, M=100, domain_length=2.0,
        a=-1.25, b=0.25, c=1.0, L1=1.0e-3, kappa=6.0, c_star=None,
        scheme="mbp_sesav2", T=30.0,
        adaptive=AdaptiveSpec(tau_min=5.0e-4, tau_max=0.05, alpha=1.0e5),
        normalized=True, director=_director_orient3d,
        description="piecewise axis-aligned director boxes, adaptive stepping",
    ),
}


def _preset_base_params(preset: Preset) -> ModelParams:
    return ModelParams(a=preset.a, b=preset.b, c=preset.c, L1=preset.L1,
                       L2=preset.L2, L3=preset.L3, kappa=preset.kappa)


def _build_director_field(mesh: Mesh, director, normalized: bool,
                          dim: int) -> QTensorField:
    coords = mesh.node_coordinates()
    n = [np.broadcast_to(comp, mesh.shape).astype(float)
         for comp in director(*coords)]
    norm2 = sum(comp * comp for comp in n)
    comps = np.empty((len(component_pairs(dim)),) + mesh.shape)
    for k, (i, j) in enumerate(component_pairs(dim)):
        outer = n[i] * n[j]
        if normalized:
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(norm2 > 0.0, outer / np.where(norm2 > 0.0, norm2, 1.0), 0.0)
            if i == j:
                val = np.where(norm2 > 0.0, val - 1.0 / dim, 0.0)
        else:
            val = outer - (norm2 / dim if i == j else 0.0)
        comps[k] = val
    # homogeneous Dirichlet data: boundary nodes are zeroed uniformly
    comps = np.stack([zero_boundary(mesh, comp) for comp in comps])
    return QTensorField(mesh, dim, comps)


_EXPR_NAMESPACE = {
    "np": np, "pi": np.pi, "sin": np.sin, "cos": np.cos, "exp": np.exp,
    "sqrt": np.sqrt, "tanh": np.tanh, "abs": np.abs, "where": np.where,
}


def _expr_director(spec: str):
    parts = [p.strip() for p in spec.split(";") if p.strip()]

    def director(*coords):
        local = dict(zip("xyz", coords))
        return [np.asarray(eval(part, dict(_EXPR_NAMESPACE), local), dtype=float)
                + np.zeros(np.broadcast_shapes(*(c.shape for c in coords)))
                for part in parts]

    return director, len(parts)


def initial_tensor_field(initial: str, mesh: Mesh) -> QTensorField:
    """Build the Q0 field for a preset name, 'zero', or an 'expr:' director."""
    if initial == "zero":
        return QTensorField.zeros(mesh, mesh.dim)
    if initial.startswith("expr:"):
        director, n_parts = _expr_director(initial[len("expr:"):])
        if n_parts != mesh.dim:
            raise ValueError(
                f"director expression has {n_parts} components, mesh is {mesh.dim}D"
            )
        return _build_director_field(mesh, director, normalized=False, dim=mesh.dim)
    preset = PRESETS.get(initial)
    if preset is None:
        raise ValueError(f"unknown initial condition {initial!r}; "
                         f"presets: {sorted(PRESETS)}, or 'zero', or 'expr:...'")
    if preset.dim != mesh.dim:
        raise ValueError(f"preset {initial!r} is {preset.dim}D, mesh is {mesh.dim}D")
    return _build_director_field(mesh, preset.director, preset.normalized, preset.dim)


def build_initial(initial: str, mesh: Mesh, params: ModelParams) -> SavState:
    return initial_state(initial_tensor_field(initial, mesh), params)


def preset_initial(name: str, mesh: Mesh) -> SavState:
    """Initial state of a named preset on `mesh` (s = bulk energy of Q0)."""
    preset = PRESETS.get(name)
    if preset is None:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return build_initial(name, mesh, _preset_base_params(preset))


def finalize_params(base: ModelParams, mesh: Mesh, q0_sup: float,
                    c_star: float | None = None,
                    eta: float | None = None) -> ModelParams:
    """Fill eta from the initial data and C* from the closed-form bound."""
    if eta is None:
        eta = eta_bound(base, q0_sup, mesh.dim)
    if c_star is None:
        c_star = default_c_star(base, max(eta, 1e-12), mesh.volume)
    return base.with_(eta=eta, c_star=c_star)


def preset_config(name: str, M: int | None = None, scheme: str | None = None,
                  tau: float | None = None, T: float | None = None,
                  snapshot_every: int = 0) -> ExperimentConfig:
    """Materialize the full run configuration of a named preset."""
    preset = PRESETS.get(name)
    if preset is None:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    mesh = build_mesh(preset.dim, M or preset.M, preset.domain_length)
    base = _preset_base_params(preset)
    q0_sup = frobenius_sup_norm(initial_tensor_field(name, mesh))
    params = finalize_params(base, mesh, q0_sup, c_star=preset.c_star)
    adaptive = preset.adaptive
    if tau is not None:
        adaptive = None
    return ExperimentConfig(
        dim=preset.dim, M=mesh.M, domain_length=preset.domain_length,
        params=params, scheme=scheme or preset.scheme, T=T or preset.T,
        tau=tau if tau is not None else (preset.tau if adaptive is None else None),
        adaptive=adaptive, initial=name, snapshot_every=snapshot_every,
    )


# --- driver -----------------------------------------------------------------


def run_simulation(config: ExperimentConfig) -> SimulationResult:
    """Advance the configured scheme to T, recording per-step diagnostics.

    Raises InvariantViolation as soon as the modified energy increases
    beyond roundoff slack or, in the reduced regime, the Frobenius sup norm
    leaves the eta ball while the theory guarantees containment.
    """
    mesh = config.mesh()
    params = config.params
    state = build_initial(config.initial, mesh, params)
    step_fn = STEPPERS[config.scheme]

    energy_prev = total_energy(state.Q, state.s, params)
    check_mbp_always = config.scheme == "mbp_sesav1"
    mbp_bound = None
    if config.scheme == "mbp_sesav2":
        mbp_bound = mbp_tau_max(params, mesh.h, mesh.dim,
                                g_star_bound(state, params))

    controller = None
    if config.adaptive is not None:
        controller = AdaptiveController(
            tau_min=config.adaptive.tau_min, tau_max=config.adaptive.tau_max,
            alpha=config.adaptive.alpha, prev_energy=energy_prev,
        )
        tau_next = config.adaptive.tau_min
    else:
        tau_next = config.tau

    records: list[DiagnosticsRecord] = []
    snapshots: list[Snapshot] = [Snapshot(0, 0.0, state)]
    horizon = config.T * (1.0 - _TIME_EPS)
    n = 0
    while state.t < horizon:
        tau_step = min(tau_next, config.T - state.t)
        report = step_fn(state, tau_step, params)
        n += 1
        if report.energy > energy_prev + ENERGY_SLACK:
            raise InvariantViolation(
                f"energy increased at step {n}: "
                f"{energy_prev!r} -> {report.energy!r}"
            )
        if check_mbp_always or (mbp_bound is not None and tau_step <= mbp_bound):
            if report.sup_norm > params.eta + MBP_SLACK:
                raise InvariantViolation(
                    f"Frobenius bound violated at step {n}: "
                    f"{report.sup_norm!r} > eta = {params.eta!r}"
                )
        records.append(DiagnosticsRecord(
            step=n, time=report.state.t, tau=tau_step, energy=report.energy,
            sup_norm=report.sup_norm, s=report.state.s, g=report.g_value,
            clamped=report.clamped,
        ))
        energy_prev = report.energy
        state = report.state
        if config.snapshot_every and n % config.snapshot_every == 0:
            snapshots.append(Snapshot(n, state.t, state))
        if controller is not None:
            tau_next = adaptive_tau(controller, report.energy, tau_step)
    if not snapshots or snapshots[-1].step != n:
        snapshots.append(Snapshot(n, state.t, state))
    return SimulationResult(state=state, records=records, snapshots=snapshots)


def defect_node_count(Q: QTensorField, threshold: float = 0.02) -> int:
    """Interior nodes whose eigenvalue gap of Q + I/d falls below threshold."""
    gap = eigen_gap_field(Q, 1.0 / Q.dim)
    return int(np.count_nonzero(gap[Q.mesh.interior] < threshold))


# --- convergence studies ----------------------------------------------------


@dataclass(frozen=True)
class RateRow:
    resolution: float
    error_grad: float
    error_L2: float
    error_s: float
    rate_grad: float | None
    rate_L2: float | None
    rate_s: float | None


@dataclass(frozen=True)
class RateTable:
    label: str  # resolution column meaning: "tau" or "h"
    rows: tuple[RateRow, ...]

    @classmethod
    def from_errors(cls, label, resolutions, err_grad, err_L2, err_s) -> "RateTable":
        def rate(prev, cur):
            if prev <= 0.0 or cur <= 0.0:
                return None
            return math.log2(prev / cur)

        rows = []
        for k, res in enumerate(resolutions):
            if k == 0:
                rates = (None, None, None)
            else:
                rates = (rate(err_grad[k - 1], err_grad[k]),
                         rate(err_L2[k - 1], err_L2[k]),
                         rate(err_s[k - 1], err_s[k]))
            rows.append(RateRow(res, err_grad[k], err_L2[k], err_s[k], *rates))
        return cls(label=label, rows=tuple(rows))

    def format_text(self) -> str:
        head = (f"{self.label:>12}  {'err_grad':>12} {'rate':>6}  "
                f"{'err_L2':>12} {'rate':>6}  {'err_s':>12} {'rate':>6}")
        lines = [head]
        for row in self.rows:
            def fmt(r):
                return f"{r:6.2f}" if r is not None else "   ---"
            lines.append(
                f"{row.resolution:>12.6g}  {row.error_grad:>12.4e} {fmt(row.rate_grad)}  "
                f"{row.error_L2:>12.4e} {fmt(row.rate_L2)}  "
                f"{row.error_s:>12.4e} {fmt(row.rate_s)}"
            )
        return "\n".join(lines)


def _difference_norms(A: SavState, B: SavState) -> tuple[float, float, float]:
    diff = A.Q - B.Q
    return (math.sqrt(tensor_grad_norm_sq(diff)), tensor_norm(diff),
            abs(A.s - B.s))


def convergence_study_time(config: ExperimentConfig, taus: list[float],
                           reference_tau: float) -> RateTable:
    """Errors against a fine-step reference run, maxima over all step times.

    All runs share the mesh and scheme of `config`; every tau (and T) must
    be an integer multiple of the reference step so states can be compared
    at exactly common times.  Streams the reference once and advances each
    coarse run whenever the times align.
    """
    if not taus:
        raise ValueError("need at least one step size")
    if not reference_tau < min(taus) / 4.0:
        raise ValueError("reference step must be finer than min(taus)/4")
    taus = sorted(taus, reverse=True)

    def exact_multiple(big: float, small: float) -> int:
        ratio = big / small
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-9 * n:
            raise ValueError(f"{big} is not an integer multiple of {small}")
        return n

    periods = [exact_multiple(tau, reference_tau) for tau in taus]
    n_ref = exact_multiple(config.T, reference_tau)
    for tau in taus:
        exact_multiple(config.T, tau)

    mesh = config.mesh()
    params = config.params
    step_fn = STEPPERS[config.scheme]
    state0 = build_initial(config.initial, mesh, params)

    ref = state0
    runs = [state0] * len(taus)
    err = np.zeros((len(taus), 3))
    for m in range(1, n_ref + 1):
        ref = step_fn(ref, reference_tau, params).state
        for i, (tau, period) in enumerate(zip(taus, periods)):
            if m % period == 0:
                runs[i] = step_fn(runs[i], tau, params).state
                norms = _difference_norms(runs[i], ref)
                err[i] = np.maximum(err[i], norms)
    return RateTable.from_errors("tau", taus, err[:, 0], err[:, 1], err[:, 2])


def restrict_to_coarse(Q_fine: QTensorField, coarse: Mesh) -> QTensorField:
    """Exact restriction of a field on the doubled mesh onto coarse nodes."""
    fine = Q_fine.mesh
    if fine.dim != coarse.dim or fine.M != 2 * coarse.M \
            or fine.domain_length != coarse.domain_length:
        raise ValueError("fine mesh must halve the coarse spacing on the same domain")
    picker = (slice(None),) + (slice(None, None, 2),) * coarse.dim
    return QTensorField(coarse, Q_fine.dim, Q_fine.comps[picker].copy())


def convergence_study_space(config: ExperimentConfig, Ms: list[int]) -> RateTable:
    """Richardson h-vs-h/2 differences of final states at T, shared fine tau."""
    if len(Ms) < 1:
        raise ValueError("need at least one resolution")
    if config.tau is None:
        raise ValueError("spatial study needs a fixed time step")
    for prev, cur in zip(Ms, Ms[1:]):
        if cur != 2 * prev:
            raise ValueError(f"resolutions must double: {prev} -> {cur}")
    finals: list[SavState] = []
    for M in Ms + [2 * Ms[-1]]:
        run_cfg = replace(config, M=M, snapshot_every=0)
        finals.append(run_simulation(run_cfg).state)
    resolutions, eg, e2, es = [], [], [], []
    for k, M in enumerate(Ms):
        coarse_mesh = build_mesh(config.dim, M, config.domain_length)
        diff = finals[k].Q - restrict_to_coarse(finals[k + 1].Q, coarse_mesh)
        resolutions.append(config.domain_length / M)
        eg.append(math.sqrt(tensor_grad_norm_sq(diff)))
        e2.append(tensor_norm(diff))
        es.append(abs(finals[k].s - finals[k + 1].s))
    return RateTable.from_errors("h", resolutions, eg, e2, es)
