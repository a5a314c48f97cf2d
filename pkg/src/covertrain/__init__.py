"""covertrain: construct cover-task training subsets that pass an MMD
two-sample detector while teaching a hidden binary classification task."""

from .data import (
    CandidateSet,
    DataError,
    Dataset,
    LabeledInstance,
    RngState,
    load_dataset,
    sample_subset,
    save_dataset,
    split_train_test,
)
from .detector import (
    DetectionVerdict,
    DetectorConfig,
    DetectorError,
    PoolKernel,
    augment,
    detect,
    gram,
    label_scale,
    median_heuristic_sigma,
    mmd,
    mmd_threshold,
    psi,
    rbf_kernel,
    weighted_mmd,
)
from .harness import (
    EvaluationRow,
    ExperimentConfig,
    StageError,
    oracle_baseline,
    random_baseline,
    rerun_from_manifest,
    run_experiment,
    select_cover_task,
)
from .learner import (
    LearnerConfig,
    ModelParams,
    TrainingError,
    WeightedTrainingView,
    empirical_risk,
    logistic_loss,
    loss_gradients,
    predict_error,
    risk_gradient_wrt_weights,
    stationarity_residual,
    train,
    training_objective,
)
from .solvers import (
    FEASIBILITY_SLACK,
    NlpOptions,
    RelaxedSolution,
    SolverBudget,
    SolverError,
    SolverReport,
    neighbors,
    project_capped_simplex,
    round_relaxed,
    rounding_candidates,
    solve_beam,
    solve_nlp,
    solve_relaxed,
    solve_uniform,
)
from .synth import SyntheticSpec, acceptance_spec, generate

__version__ = "0.1.0"
