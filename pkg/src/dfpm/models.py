"""The four trainable models and the alternating learning algorithm.

* ``l2lr``: independent per-user logistic regression with an L2 penalty
  pulling each profile toward zero (no shared structure).
* ``bhlr``: all users share a single learned prior-mean vector; trained
  as the H=1 special case of ``dfpm-mult`` (identical code path).
* ``dfpm-mult``: a K x H factor matrix is shared across users and every
  user is hard-assigned (one-hot mixing vector) to the factor column
  whose plain logistic loss on the user's training data is smallest; the
  profile is then fit with a quadratic pull toward that column.
* ``dfpm-norm``: the mixing vector is free; per user, profile fitting
  alternates with a ridge-style closed-form solve for the mixing weights.

Training alternates per-user fits (Step A, independent across users and
parallelizable) with a closed-form ridge update of the factor matrix
(Step B, one H x H factorization reused across all K rows; diagonal and
solved entrywise when every mixing vector is one-hot). The recorded
objective is the global penalized training loss:

    sum_m [ loss_m(w_m) + c1 ||w_m - factors @ lam_m||^2 + c2 ||lam_m||^2 ]
        + c3 ||factors||_F^2
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import linalg as sla
from scipy.special import expit

from .corpus import SparseVector, UserDataset
from .errors import DataError, NumericalError
from .rng import named_rng
from .solver import ExampleMatrix, SolverSettings, fit_anchored

MODEL_FORMAT_VERSION = 1


class Variant(str, Enum):
    L2LR = "l2lr"
    BHLR = "bhlr"
    DFPM_NORM = "dfpm-norm"
    DFPM_MULT = "dfpm-mult"


#: variants whose profiles carry a one-hot mixing vector and cluster index
MULT_FAMILY = frozenset({Variant.BHLR, Variant.DFPM_MULT})


@dataclass(frozen=True)
class Hyperparams:
    """Regularization constants and iteration budgets.

    ``c1`` weighs the pull of a profile toward its prior mean, ``c2``
    penalizes the mixing vector, ``c3`` penalizes the factor matrix.
    ``H`` is the number of hidden factors. ``factor_init`` selects the
    factor-matrix start: "gaussian" (zero-mean, std 0.01) or "l2lr"
    (columns warm-started from randomly chosen per-user L2LR profiles).
    """

    H: int = 1
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    max_outer_iters: int = 20
    max_inner_iters: int = 10
    outer_rel_tolerance: float = 1e-4
    solver: SolverSettings = field(default_factory=SolverSettings)
    seed: int = 0
    factor_init: str = "gaussian"

    def __post_init__(self):
        if self.H < 1:
            raise ValueError("H must be >= 1")
        if min(self.c1, self.c2, self.c3) < 0:
            raise ValueError("c1, c2, c3 must be nonnegative")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.outer_rel_tolerance <= 0:
            raise ValueError("outer_rel_tolerance must be > 0")
        if self.factor_init not in ("gaussian", "l2lr"):
            raise ValueError(f"unknown factor_init {self.factor_init!r}")


@dataclass
class UserProfile:
    """Trained per-user state: profile vector and factor-mixing vector.

    ``cluster`` is the position of the single 1 in ``lam`` for the
    one-hot variants (dfpm-mult, bhlr) and None otherwise.
    """

    user_id: str
    w: np.ndarray
    lam: np.ndarray
    cluster: int | None = None


@dataclass
class ModelState:
    """Trained artifact; immutable by convention once training returns."""

    variant: Variant
    hyper: Hyperparams
    factors: np.ndarray | None
    profiles: list[UserProfile]
    objective_trace: list[float]
    vocab_fingerprint: str = ""

    @property
    def K(self) -> int:
        if self.factors is not None:
            return self.factors.shape[0]
        return len(self.profiles[0].w) if self.profiles else 0


def _rel_change(prev: float, cur: float) -> float:
    return abs(prev - cur) / max(abs(prev), 1e-12)


def _user_objective(mat, w, factors, lam, c1, c2, loss=None):
    """Per-user penalized objective (loss + prior-pull + mixing penalty)."""
    if loss is None:
        z = -mat.y * mat.scores(w)
        loss = float(np.logaddexp(0.0, z).sum())
    d = w - (factors @ lam if factors is not None else 0.0)
    return loss + c1 * float(d @ d) + c2 * float(lam @ lam)


# ---------------------------------------------------------------------------
# Closed-form block updates
# ---------------------------------------------------------------------------


def solve_lambda_norm(factors: np.ndarray, w: np.ndarray, c1: float, c2: float) -> np.ndarray:
    """Minimizer of c1 ||w - factors @ lam||^2 + c2 ||lam||^2.

    Solved as the H x H symmetric positive-definite system
    (factors' factors + (c2/c1) I) lam = factors' w. Note the c2/c1
    ratio: the ridge term is scaled into the least-squares weight.
    """
    if c1 <= 0:
        raise ValueError("c1 must be > 0")
    if c2 < 0:
        raise ValueError("c2 must be >= 0")
    H = factors.shape[1]
    A = factors.T @ factors + (c2 / c1) * np.eye(H)
    b = factors.T @ w
    try:
        return sla.solve(A, b, assume_a="pos")
    except sla.LinAlgError as exc:
        raise NumericalError(f"singular mixing-weight system (c2={c2}, rank-deficient factors): {exc}") from exc


def update_factor_matrix(profiles, hyper: Hyperparams, K: int) -> np.ndarray:
    """Ridge update of the factor matrix given all user profiles.

    Row r solves (sum_m lam_m lam_m' + (c3/c1) I) factors_r' =
    sum_m w_{m,r} lam_m; the H x H system is factored once and shared by
    all K rows. When every profile is one-hot the system is diagonal and
    solved entrywise (column h = sum of member profiles / (count_h + c3/c1)).
    """
    if hyper.c1 <= 0 or hyper.c3 <= 0:
        raise ValueError("factor update needs c1 > 0 and c3 > 0")
    H = hyper.H
    profiles = list(profiles)
    ridge = hyper.c3 / hyper.c1
    if not profiles:
        return np.zeros((K, H))
    for p in profiles:
        if len(p.lam) != H:
            raise ValueError(f"profile {p.user_id!r} has mixing length {len(p.lam)}, expected {H}")
    if all(p.cluster is not None for p in profiles):
        clusters = np.array([p.cluster for p in profiles])
        counts = np.bincount(clusters, minlength=H).astype(np.float64)
        sums = np.zeros((K, H))
        for h in range(H):
            members = [p.w for p in profiles if p.cluster == h]
            if members:
                sums[:, h] = np.sum(members, axis=0)
        return sums / (counts + ridge)
    L = np.stack([p.lam for p in profiles])  # M x H
    W = np.stack([p.w for p in profiles])  # M x K
    A = L.T @ L + ridge * np.eye(H)
    cho = sla.cho_factor(A)
    return sla.cho_solve(cho, L.T @ W).T


# ---------------------------------------------------------------------------
# Per-user fits (Step A)
# ---------------------------------------------------------------------------


def fit_user_norm(factors: np.ndarray, user: UserDataset, hyper: Hyperparams):
    """Free-mixing per-user fit: alternate profile solve and mixing solve.

    Starts from a zero mixing vector; stops when the per-user objective's
    relative change drops below ``outer_rel_tolerance`` or after
    ``max_inner_iters`` rounds. Each mixing solve is exact, so it never
    increases the per-user objective (asserted).
    """
    K, H = factors.shape
    mat = ExampleMatrix.from_examples(user.train, K)
    lam = np.zeros(H)
    w = np.zeros(K)
    prev = None
    try:
        for _ in range(hyper.max_inner_iters):
            anchor = factors @ lam
            res = fit_anchored(mat, anchor, hyper.c1, w, hyper.solver)
            w = res.w
            before = res.value + hyper.c2 * float(lam @ lam)
            loss = res.value - hyper.c1 * float((w - anchor) @ (w - anchor))
            lam = solve_lambda_norm(factors, w, hyper.c1, hyper.c2)
            obj = _user_objective(mat, w, factors, lam, hyper.c1, hyper.c2, loss=loss)
            assert obj <= before * (1 + 1e-9) + 1e-12
            if prev is not None and _rel_change(prev, obj) < hyper.outer_rel_tolerance:
                break
            prev = obj
    except NumericalError as exc:
        raise NumericalError(f"user {user.user_id!r}: {exc}", point=exc.point) from exc
    return w, lam


def fit_user_mult(factors: np.ndarray, user: UserDataset, hyper: Hyperparams):
    """One-hot per-user fit: greedy column choice, then one profile solve.

    The chosen column is the one whose plain logistic loss on the user's
    training examples is smallest (ties to the lowest index); the profile
    solve is anchored at and started from that column.
    """
    K, H = factors.shape
    mat = ExampleMatrix.from_examples(user.train, K)
    scores = mat.X @ factors  # J x H
    column_losses = np.logaddexp(0.0, -mat.y[:, None] * scores).sum(axis=0)
    c = int(np.argmin(column_losses))
    lam = np.zeros(H)
    lam[c] = 1.0
    anchor = factors[:, c].copy()
    try:
        res = fit_anchored(mat, anchor, hyper.c1, anchor, hyper.solver)
    except NumericalError as exc:
        raise NumericalError(f"user {user.user_id!r}: {exc}", point=exc.point) from exc
    return res.w, lam, c


def _fit_l2lr(user: UserDataset, hyper: Hyperparams, K: int):
    mat = ExampleMatrix.from_examples(user.train, K)
    zero = np.zeros(K)
    try:
        res = fit_anchored(mat, zero, hyper.c1, zero, hyper.solver)
    except NumericalError as exc:
        raise NumericalError(f"user {user.user_id!r}: {exc}", point=exc.point) from exc
    return res.w, np.zeros(1), None


def _fit_task(task):
    mode, factors, user, hyper, K = task
    if mode == "mult":
        return fit_user_mult(factors, user, hyper)
    if mode == "norm":
        w, lam = fit_user_norm(factors, user, hyper)
        return w, lam, None
    return _fit_l2lr(user, hyper, K)


def _step_a(mode, factors, data, hyper, K, workers, executor=None):
    """Fit all users; results come back in input order for determinism."""
    tasks = [(mode, factors, user, hyper, K) for user in data]
    if executor is not None and workers > 1:
        chunk = max(1, len(tasks) // (workers * 4))
        results = list(executor.map(_fit_task, tasks, chunksize=chunk))
    else:
        results = [_fit_task(t) for t in tasks]
    return [
        UserProfile(user_id=user.user_id, w=w, lam=lam, cluster=c)
        for user, (w, lam, c) in zip(data, results)
    ]


# ---------------------------------------------------------------------------
# Objective and training loop
# ---------------------------------------------------------------------------


def _objective_value(factors, profiles, mats, hyper) -> float:
    total = 0.0
    for p, mat in zip(profiles, mats):
        total += _user_objective(mat, p.w, factors, p.lam, hyper.c1, hyper.c2)
    if factors is not None:
        total += hyper.c3 * float(np.sum(factors * factors))
    return total


def full_objective(state: ModelState, data) -> float:
    """Global penalized training objective of a trained state on ``data``."""
    by_id = {ds.user_id: ds for ds in data}
    K = state.K
    if state.factors is not None and state.profiles:
        if len(state.profiles[0].w) != K:
            raise ValueError("profile length does not match factor rows")
    mats = []
    for p in state.profiles:
        if p.user_id not in by_id:
            raise ValueError(f"no dataset for trained user {p.user_id!r}")
        if state.factors is not None and len(p.lam) != state.factors.shape[1]:
            raise ValueError(f"mixing length mismatch for user {p.user_id!r}")
        mats.append(ExampleMatrix.from_examples(by_id[p.user_id].train, K))
    return _objective_value(state.factors, state.profiles, mats, state.hyper)


def _init_factors(data, hyper: Hyperparams, K: int):
    rng = named_rng(hyper.seed, "factors-init")
    if hyper.factor_init == "gaussian":
        return rng.normal(0.0, 0.01, size=(K, hyper.H))
    chosen = rng.choice(len(data), size=hyper.H, replace=len(data) < hyper.H)
    cols = [_fit_l2lr(data[int(m)], hyper, K)[0] for m in chosen]
    return np.stack(cols, axis=1)


def train(
    data,
    hyper: Hyperparams,
    variant,
    *,
    K: int,
    vocab_fingerprint: str = "",
    workers: int = 1,
) -> ModelState:
    """Train one model variant on a list of UserDatasets.

    ``bhlr`` runs the identical code path as ``dfpm-mult`` with H forced
    to 1. The objective trace records the global penalized objective
    after every outer iteration; the loop stops when its relative change
    drops below ``outer_rel_tolerance`` or at ``max_outer_iters``.
    Per-user fits are independent; with ``workers`` > 1 they run on a
    process pool, and results are reduced in fixed user order so the
    outcome matches the single-worker run exactly.
    """
    variant = Variant(variant)
    data = list(data)
    if not data:
        raise ValueError("cannot train on an empty user list")
    mats = [ExampleMatrix.from_examples(u.train, K) for u in data]

    if variant is Variant.L2LR:
        executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
        try:
            profiles = _step_a("l2lr", None, data, hyper, K, workers, executor)
        finally:
            if executor is not None:
                executor.shutdown()
        trace = [_objective_value(None, profiles, mats, hyper)]
        return ModelState(variant, hyper, None, profiles, trace, vocab_fingerprint)

    if hyper.c1 <= 0 or hyper.c3 <= 0:
        raise ValueError(f"{variant.value} requires c1 > 0 and c3 > 0")
    eff = replace(hyper, H=1) if variant is Variant.BHLR else hyper
    mode = "mult" if variant in MULT_FAMILY else "norm"
    factors = _init_factors(data, eff, K)
    trace: list[float] = []
    profiles: list[UserProfile] = []
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for _ in range(eff.max_outer_iters):
            profiles = _step_a(mode, factors, data, eff, K, workers, executor)
            if mode == "mult":
                for p in profiles:
                    assert p.cluster is not None and p.lam[p.cluster] == 1.0
                    assert np.count_nonzero(p.lam) == 1
            factors = update_factor_matrix(profiles, eff, K)
            trace.append(_objective_value(factors, profiles, mats, eff))
            if len(trace) >= 2 and _rel_change(trace[-2], trace[-1]) < eff.outer_rel_tolerance:
                break
    finally:
        if executor is not None:
            executor.shutdown()
    return ModelState(variant, eff, factors, profiles, trace, vocab_fingerprint)


def predict(w: np.ndarray, x: SparseVector) -> tuple[float, int]:
    """Relevance probability and hard label for one item.

    The label is +1 exactly when the score is >= 0 (probability >= 0.5).
    """
    s = x.dot(w)
    return float(expit(s)), (1 if s >= 0 else -1)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_model(state: ModelState, path) -> None:
    """Write a trained model as JSON with full float round-trip precision."""
    hyper = state.hyper
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "variant": state.variant.value,
        "hyper": {
            "H": hyper.H,
            "c1": hyper.c1,
            "c2": hyper.c2,
            "c3": hyper.c3,
            "max_outer_iters": hyper.max_outer_iters,
            "max_inner_iters": hyper.max_inner_iters,
            "outer_rel_tolerance": hyper.outer_rel_tolerance,
            "seed": hyper.seed,
            "factor_init": hyper.factor_init,
            "solver": {
                "gradient_tolerance": hyper.solver.gradient_tolerance,
                "max_steps": hyper.solver.max_steps,
                "armijo": hyper.solver.armijo,
                "curvature": hyper.solver.curvature,
                "max_line_search": hyper.solver.max_line_search,
            },
        },
        "vocab_fingerprint": state.vocab_fingerprint,
    }
    if state.factors is not None:
        payload["factors"] = [[float(v) for v in row] for row in state.factors]
    payload["profiles"] = []
    for p in state.profiles:
        entry = {
            "user_id": p.user_id,
            "w": [float(v) for v in p.w],
            "lambda": [float(v) for v in p.lam],
        }
        if p.cluster is not None:
            entry["cluster"] = int(p.cluster)
        payload["profiles"].append(entry)
    payload["objective_trace"] = [float(v) for v in state.objective_trace]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> ModelState:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed model file {path}: {exc}") from exc
    try:
        if obj["format_version"] != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format_version {obj['format_version']}")
        h = obj["hyper"]
        hyper = Hyperparams(
            H=int(h["H"]),
            c1=float(h["c1"]),
            c2=float(h["c2"]),
            c3=float(h["c3"]),
            max_outer_iters=int(h["max_outer_iters"]),
            max_inner_iters=int(h["max_inner_iters"]),
            outer_rel_tolerance=float(h["outer_rel_tolerance"]),
            seed=int(h["seed"]),
            factor_init=str(h["factor_init"]),
            solver=SolverSettings(
                gradient_tolerance=float(h["solver"]["gradient_tolerance"]),
                max_steps=int(h["solver"]["max_steps"]),
                armijo=float(h["solver"]["armijo"]),
                curvature=float(h["solver"]["curvature"]),
                max_line_search=int(h["solver"]["max_line_search"]),
            ),
        )
        factors = np.array(obj["factors"], dtype=np.float64) if "factors" in obj else None
        profiles = [
            UserProfile(
                user_id=str(e["user_id"]),
                w=np.array(e["w"], dtype=np.float64),
                lam=np.array(e["lambda"], dtype=np.float64),
                cluster=int(e["cluster"]) if "cluster" in e else None,
            )
            for e in obj["profiles"]
        ]
        return ModelState(
            variant=Variant(obj["variant"]),
            hyper=hyper,
            factors=factors,
            profiles=profiles,
            objective_trace=[float(v) for v in obj["objective_trace"]],
            vocab_fingerprint=str(obj.get("vocab_fingerprint", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file {path}: {exc}") from exc
