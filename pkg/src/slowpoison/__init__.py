"""Certified-removal unlearning for regularized linear models, a slow-down
poisoning toolkit, and a seeded experiment harness measuring retrain
intervals under crafted erasure requests."""

from .attack import (
    AttackConfig,
    AttackContext,
    CostFunctionKind,
    NormBallConstraint,
    PoisonBatch,
    attacker_objective,
    backtracking_line_search,
    cost_gradient_norm,
    cost_grnb,
    cost_influence_norm,
    dykstra_project,
    objective_gradient,
    pgd_craft,
    project_ball,
)
from .certified_removal import (
    ModelState,
    OneVsRestState,
    RemovalBudget,
    UnlearnOutcome,
    beta_trigger,
    gradient_residual_norm,
    grn_increment,
    influence_update,
    learn,
    learn_ovr,
    unlearn,
    unlearn_ovr,
)
from .data import (
    RawDataset,
    SplitSpec,
    binarize,
    load_delimited,
    load_idx,
    make_split,
    normalize,
    synth_gaussian,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    TrialResult,
    accuracy,
    retrain_interval,
    run_experiment,
    run_trial,
    sweep,
)
from .model_core import (
    LOGISTIC_GAMMA,
    Dataset,
    LossFunction,
    hessian_solve,
    perturbed_risk,
    risk,
    risk_gradient,
    risk_hessian,
    spectral_norm,
)
from .solver import SolverConfig, SolverError, SolverReport, minimize

__version__ = "0.1.0"
