"""Synthetic datasets drawn from the package's own generative story.

The chain is: factor columns ~ N(0, factor_scale * I); per-user mixing
vectors either one-hot uniform over the factors ("mult") or
N(0, lambda_scale * I) ("norm"); profiles ~ N(factors @ lam,
profile_noise^2 * I); items are sparse unit-norm random vectors; labels
are Bernoulli draws of sigmoid(profile . item) mapped to {+1, -1}.
Ground truth is kept so recovery tests can score cluster assignments and
subproblem solutions against known answers.

Everything is a pure function of the config: user m's substream is
derived from (seed, user index), so generation is reproducible and
order-independent.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize as sp_minimize
from scipy.special import expit

from .corpus import LabeledExample, SparseVector, UserDataset, split_dataset
from .errors import DataError
from .models import Hyperparams
from .rng import derive_seed, named_rng
from .solver import ExampleMatrix, SolverSettings, fit_anchored

#: above this many clusters, permutation search switches to the
#: assignment-problem solver
_BRUTE_FORCE_MAX_H = 8


@dataclass(frozen=True)
class SyntheticConfig:
    M: int = 60
    K: int = 100
    H_true: int = 3
    J: int = 40
    factor_scale: float = 1.0
    lambda_scale: float = 1.0
    profile_noise: float = 0.1
    feature_density: float = 0.1
    variant: str = "mult"
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if min(self.M, self.K, self.H_true, self.J) < 1:
            raise ValueError("M, K, H_true, J must all be >= 1")
        if self.factor_scale <= 0 or self.lambda_scale <= 0:
            raise ValueError("factor_scale and lambda_scale must be > 0")
        if self.profile_noise < 0:
            raise ValueError("profile_noise must be >= 0")
        if not 0 < self.feature_density <= 1:
            raise ValueError("feature_density must be in (0, 1]")
        if self.variant not in ("mult", "norm"):
            raise ValueError(f"variant must be 'mult' or 'norm', got {self.variant!r}")

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return "synthetic:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class GroundTruth:
    true_factors: np.ndarray  # K x H
    true_lambdas: np.ndarray  # M x H
    true_profiles: np.ndarray  # M x K

    @property
    def true_clusters(self) -> np.ndarray:
        return np.argmax(self.true_lambdas, axis=1)


def _random_item(rng, K: int, nnz: int) -> SparseVector:
    indices = np.sort(rng.choice(K, size=nnz, replace=False))
    values = rng.normal(size=nnz)
    values /= np.linalg.norm(values)
    return SparseVector(indices, values)


def generate(config: SyntheticConfig) -> tuple[list[UserDataset], GroundTruth]:
    """Draw a dataset plus its ground truth from the generative chain."""
    K, H = config.K, config.H_true
    factors = named_rng(config.seed, "factors").normal(
        0.0, np.sqrt(config.factor_scale), size=(K, H)
    )
    nnz = max(1, round(config.feature_density * K))
    lambdas = np.zeros((config.M, H))
    profiles = np.zeros((config.M, K))
    datasets = []
    for m in range(config.M):
        rng = named_rng(config.seed, "user", m)
        user_id = f"user{m:04d}"
        if config.variant == "mult":
            lam = np.zeros(H)
            lam[int(rng.integers(H))] = 1.0
        else:
            lam = rng.normal(0.0, np.sqrt(config.lambda_scale), size=H)
        w = factors @ lam + rng.normal(0.0, config.profile_noise, size=K)
        lambdas[m] = lam
        profiles[m] = w
        examples = []
        for j in range(config.J):
            x = _random_item(rng, K, nnz)
            p = expit(x.dot(w))
            label = 1 if rng.random() < p else -1
            examples.append(LabeledExample(item_id=f"{user_id}-item{j:04d}", features=x, label=label))
        datasets.append(
            split_dataset(
                examples,
                config.split_ratios,
                seed=derive_seed(config.seed, "split", m),
                user_id=user_id,
            )
        )
    return datasets, GroundTruth(factors, lambdas, profiles)


def match_clusters(predicted, truth) -> float:
    """Best label-permutation accuracy between two cluster assignments."""
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError("predicted and truth must be equal-length 1-d assignments")
    if predicted.size == 0:
        raise ValueError("empty assignments")
    n = int(max(predicted.max(), truth.max())) + 1
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (predicted, truth), 1)
    if n <= _BRUTE_FORCE_MAX_H:
        best = max(
            sum(confusion[k, perm[k]] for k in range(n))
            for perm in itertools.permutations(range(n))
        )
    else:
        rows, cols = linear_sum_assignment(-confusion)
        best = int(confusion[rows, cols].sum())
    return float(best) / float(predicted.size)


def _tight_settings(settings: SolverSettings) -> SolverSettings:
    return SolverSettings(
        gradient_tolerance=min(1e-9, settings.gradient_tolerance),
        max_steps=max(2000, settings.max_steps),
        armijo=settings.armijo,
        curvature=settings.curvature,
        max_line_search=settings.max_line_search,
    )


def brute_force_subproblem(
    factors: np.ndarray,
    user: UserDataset,
    hyper: Hyperparams,
    variant: str,
    n_starts: int = 20,
):
    """Reference solver for one user's subproblem, desk-scale only.

    "mult": exhaustively tries every one-hot mixing vector with a tightly
    converged profile solve each, returning the true minimizer of the
    per-user objective. "norm": joint numeric minimization over
    (profile, mixing) from multiple seeded random starts via L-BFGS.
    """
    K, H = factors.shape
    J = len(user.train)
    if K > 20 or H > 5 or J > 20:
        raise ValueError(f"oracle is desk-scale only (K<=20, H<=5, J<=20), got K={K}, H={H}, J={J}")
    mat = ExampleMatrix.from_examples(user.train, K)
    c1, c2 = hyper.c1, hyper.c2
    if variant == "mult":
        best = None
        for c in range(H):
            anchor = factors[:, c].copy()
            res = fit_anchored(mat, anchor, c1, anchor, _tight_settings(hyper.solver))
            obj = res.value + c2  # one-hot mixing has unit squared norm
            if best is None or obj < best[0] - 1e-15:
                lam = np.zeros(H)
                lam[c] = 1.0
                best = (obj, res.w, lam)
        return best[1], best[2]
    if variant != "norm":
        raise ValueError(f"variant must be 'mult' or 'norm', got {variant!r}")

    def fg(z):
        w, lam = z[:K], z[K:]
        d = w - factors @ lam
        zz = -mat.y * mat.scores(w)
        value = float(np.logaddexp(0.0, zz).sum()) + c1 * float(d @ d) + c2 * float(lam @ lam)
        coef = -mat.y * expit(zz)
        gw = mat.X.T @ coef + 2.0 * c1 * d
        glam = -2.0 * c1 * (factors.T @ d) + 2.0 * c2 * lam
        return value, np.concatenate([gw, glam])

    rng = named_rng(hyper.seed, "brute-force-starts")
    starts = [np.zeros(K + H)]
    starts += [rng.normal(0.0, 1.0, size=K + H) for _ in range(max(0, n_starts - 1))]
    best = None
    for z0 in starts:
        res = sp_minimize(fg, z0, jac=True, method="L-BFGS-B", options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-10})
        if best is None or res.fun < best.fun:
            best = res
    return best.x[:K].copy(), best.x[K:].copy()


# ---------------------------------------------------------------------------
# Ground-truth persistence
# ---------------------------------------------------------------------------


def save_ground_truth(truth: GroundTruth, config: SyntheticConfig, path) -> None:
    payload = {
        "config": asdict(config),
        "true_factors": [[float(v) for v in row] for row in truth.true_factors],
        "true_lambdas": [[float(v) for v in row] for row in truth.true_lambdas],
        "true_profiles": [[float(v) for v in row] for row in truth.true_profiles],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_ground_truth(path) -> tuple[GroundTruth, SyntheticConfig]:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
            cfg = obj["config"]
            cfg["split_ratios"] = tuple(cfg["split_ratios"])
            config = SyntheticConfig(**cfg)
            truth = GroundTruth(
                true_factors=np.array(obj["true_factors"], dtype=np.float64),
                true_lambdas=np.array(obj["true_lambdas"], dtype=np.float64),
                true_profiles=np.array(obj["true_profiles"], dtype=np.float64),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed ground-truth file {path}: {exc}") from exc
    return truth, config
