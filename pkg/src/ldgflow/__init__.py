"""Energy-stable sESAV finite-difference solvers for Q-tensor gradient flow."""

from .harness import (
    AdaptiveSpec,
    DiagnosticsRecord,
    ExperimentConfig,
    InvariantViolation,
    PRESETS,
    RateTable,
    SimulationResult,
    convergence_study_space,
    convergence_study_time,
    defect_node_count,
    preset_config,
    preset_initial,
    run_simulation,
)
from .linsolve import SolverConvergenceError
from .mesh import Mesh, build_mesh, dirichlet_spectrum
from .qtensor import (
    ModelParams,
    QTensorField,
    bulk_energy,
    bulk_force,
    elastic_energy,
    eta_bound,
    frobenius_sup_norm,
    kappa_min,
    total_energy,
)
from .sesav import (
    AdaptiveController,
    BlowUpError,
    SavState,
    StepReport,
    adaptive_tau,
    g_value,
    initial_state,
    mbp_sesav1_step,
    mbp_sesav2_step,
    mbp_tau_max,
    sesav1_step,
    sesav2_step,
)

__version__ = "0.1.0"
