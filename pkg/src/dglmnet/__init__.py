"""Feature-partitioned parallel block-coordinate descent for L1-regularized
logistic regression, with deterministic tree all-reduce transports, a
warmstarted regularization path, and oracle-grade reference implementations
for testing."""

from .data import (
    FeaturePosting,
    FeatureShard,
    FitReport,
    IterationStats,
    ModelState,
    as_labels,
    nnz,
    recompute_margins,
    to_dense,
    validate_shard_set,
)
from .driver import SolverConfig, check_convergence, fit, fit_rank, outer_step
from .errors import (
    DataError,
    DglmnetError,
    InvalidInputError,
    NoConvergenceError,
    NumericalError,
    ProtocolError,
    ReductionError,
    StalledLineSearchError,
    UndefinedMetricError,
)
from .glm import (
    QuadraticWorkspace,
    build_workspace,
    class_probability,
    gradient_direction_product,
    negated_log_likelihood,
    objective,
    quadratic_model_loss,
)
from .ingest import (
    ByExampleRecord,
    FeaturePartition,
    convert_to_by_feature,
    feature_nnz,
    load_dataset,
    load_labels,
    load_manifest,
    load_shard,
    parse_by_example,
    parse_by_example_file,
    partition_features,
    record_labels,
    record_margins,
    records_to_dense,
    records_to_shards,
    reshard,
    write_by_example,
)
from .linesearch import (
    LineSearchConfig,
    LineSearchResult,
    armijo_slope,
    candidate_objective,
    line_search,
)
from .metrics import EvaluationResult, auprc, evaluate_scores, log_loss
from .modelfile import load_model, save_model
from .oracle import (
    finite_difference_gradient,
    kkt_residual,
    logistic_gradient,
    proximal_gradient_oracle,
)
from .reduction import (
    InProcessReduction,
    allreduce_max,
    tree_allreduce_reference,
    tree_children,
    tree_parent,
)
from .regpath import (
    PathConfig,
    PathPoint,
    iter_regularization_path,
    lambda_max,
    lambda_max_rank,
    regularization_path,
    write_path_csv,
)
from .subproblem import (
    SubproblemResult,
    coordinate_moments,
    coordinate_update,
    soft_threshold,
    solve_subproblem,
)
from .synth import (
    SyntheticTruth,
    dense_logistic_instance,
    sparse_logistic_records,
    split_records,
)
from .tcp import TcpReductionGroup

__version__ = "0.1.0"
