"""Jointly learned per-user recommendation profiles with a factored prior.

Each user's profile is a K-dimensional logistic-regression weight vector;
profiles are tied together by a shared K x H factor matrix whose columns
act as latent interest directions. Two factored variants (one-hot and
free mixing) plus two baselines (independent L2 logistic regression and a
single shared prior) train through an alternating block scheme with
closed-form factor updates.
"""

from .corpus import (
    Document,
    LabeledExample,
    SparseVector,
    UserDataset,
    Vocabulary,
    build_vocabulary,
    load_datasets,
    load_vocabulary,
    sample_negatives,
    save_datasets,
    save_vocabulary,
    split_dataset,
    tokenize,
    vectorize,
)
from .errors import DataError, NumericalError, UsageError
from .evaluation import (
    ConfusionCounts,
    GroupReport,
    UserMetrics,
    evaluate_model,
    group_users,
    macro_f1,
    paired_t_test,
    score_user,
    top_factor_features,
    top_items_per_cluster,
    user_metrics,
)
from .models import (
    Hyperparams,
    ModelState,
    UserProfile,
    Variant,
    fit_user_mult,
    fit_user_norm,
    full_objective,
    load_model,
    predict,
    save_model,
    solve_lambda_norm,
    train,
    update_factor_matrix,
)
from .solver import (
    ExampleMatrix,
    MinimizeResult,
    SolverSettings,
    anchored_gradient,
    anchored_objective,
    logistic_loss,
    minimize,
)
from .synthetic import (
    GroundTruth,
    SyntheticConfig,
    brute_force_subproblem,
    generate,
    match_clusters,
)

__version__ = "0.1.0"

__all__ = [
    "Document", "Vocabulary", "SparseVector", "LabeledExample", "UserDataset",
    "tokenize", "build_vocabulary", "vectorize", "sample_negatives", "split_dataset",
    "save_vocabulary", "load_vocabulary", "save_datasets", "load_datasets",
    "SolverSettings", "ExampleMatrix", "MinimizeResult",
    "logistic_loss", "anchored_objective", "anchored_gradient", "minimize",
    "Hyperparams", "Variant", "UserProfile", "ModelState",
    "full_objective", "solve_lambda_norm", "fit_user_norm", "fit_user_mult",
    "update_factor_matrix", "train", "predict", "save_model", "load_model",
    "ConfusionCounts", "UserMetrics", "GroupReport",
    "score_user", "user_metrics", "macro_f1", "group_users", "paired_t_test",
    "top_factor_features", "top_items_per_cluster", "evaluate_model",
    "SyntheticConfig", "GroundTruth", "generate", "match_clusters",
    "brute_force_subproblem",
    "DataError", "NumericalError", "UsageError",
    "__version__",
]
