"""Fairness-accuracy frontiers and fair model stacking."""

__version__ = "0.1.0"

from fairfrontier.errors import ValidationError
from fairfrontier.frontier import (
    ModelRecord,
    TafCurve,
    TafiCurve,
    WeightFunction,
    build_tafi,
    fauc,
    fauci,
    pareto_filter,
    taf_eval,
    tafi_eval,
    weight_mass,
)
from fairfrontier.metrics import (
    ContrastSpec,
    EvaluationSet,
    GroupAssignment,
    brier_loss,
    classification_accuracy,
    dp_fairness,
    ensemble_score_bias,
    eo_fairness,
    regression_accuracy,
    score_bias,
    threshold_decisions,
)
from fairfrontier.stacker import (
    EnsembleSolution,
    PenaltyConfig,
    StackingProblem,
    build_problem,
    cv_select_alpha,
    lambda_path,
    monotonicity_audit,
    path_to_records,
    solve_newton,
    solve_squared,
)
