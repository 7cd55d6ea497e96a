"""Communication-efficient distributed sparse logistic regression.

One-shot merge estimators (naive averaging, optimal weighted averaging)
followed by iterated surrogate-likelihood updates solved with a damped
proximal-Newton coordinate-descent engine, over simulated data partitions
with explicit communication accounting.
"""

from .data import (
    LabeledDataset,
    PartitionSet,
    SparseDesignMatrix,
    SyntheticSpec,
    generate_synthetic,
    parse_libsvm,
    partition,
    split_train_test,
    write_libsvm,
)
from .harness import (
    OracleCache,
    SweepSpec,
    evaluate,
    lambda_grid,
    objective_error,
    run_sweep,
    support_metrics,
)
from .merge import LocalSolutionMatrix, OwaConfig, naive_average, owa_merge, ridge_logistic_solve
from .objective import (
    CurvatureState,
    GradientSnapshot,
    Regularization,
    csl_objective,
    curvature_at,
    local_gradient,
    local_objective,
    logistic_loss,
    nnz,
)
from .orchestrator import (
    Message,
    MessageLog,
    PartitionWorker,
    RoundReport,
    global_gradient_round,
    run_local_fits,
    run_proxcsl,
)
from .solver import (
    SolveResult,
    SolverConfig,
    SolverDivergedError,
    coordinate_update,
    csl_update,
    divergence_check,
    inner_cd_pass,
    linesearch,
    solve_local,
    solve_quadratic_subproblem,
)

__version__ = "0.1.0"
