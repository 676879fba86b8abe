"""Command-line entry point: ingest, train, evaluate, inspect, synth.

Every command is a pure function of its input files, flags, and seed;
reruns with the same inputs are byte-identical in single-worker mode.
Options may come from a config file of flat ``key = value`` lines
(``#`` comments allowed, values optionally quoted; keys are the long
flag names with underscores); explicit flags override the file.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Reports go to files, a human-readable summary to stdout, logs to stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import corpus, evaluation, models, synthetic
from .errors import DataError, NumericalError, UsageError
from .models import Hyperparams, Variant
from .rng import derive_seed
from .solver import SolverSettings

log = logging.getLogger("dfpm")

_DEFAULT_RATIOS = (0.8, 0.1, 0.1)


@dataclass
class RunConfig:
    """Resolved settings for one command (flags over config file)."""

    # paths
    documents: str | None = None
    interactions: str | None = None
    vocabulary: str | None = None
    datasets: str | None = None
    model: str | None = None
    report: str | None = None
    clusters_report: str | None = None
    ground_truth: str | None = None
    compare: str | None = None
    # corpus
    min_df: int = 50
    ratios: tuple[float, float, float] = _DEFAULT_RATIOS
    stem: bool = True
    # model hyperparameters (lists allow a tuning grid)
    variant: str | None = None
    h_factors: tuple[int, ...] = (1,)
    c1: tuple[float, ...] = (1.0,)
    c2: tuple[float, ...] = (1.0,)
    c3: tuple[float, ...] = (1.0,)
    max_outer_iters: int = 20
    max_inner_iters: int = 10
    tol: float = 1e-4
    gradient_tolerance: float = 1e-6
    max_solver_steps: int = 200
    factor_init: str = "gaussian"
    # evaluation / inspection
    split: str = "test"
    top_n: int = 20
    # synthetic generation
    users: int = 60
    features: int = 100
    true_factors: int = 3
    examples_per_user: int = 40
    factor_scale: float = 1.0
    lambda_scale: float = 1.0
    profile_noise: float = 0.1
    feature_density: float = 0.1
    synth_variant: str = "mult"
    # shared
    seed: int = 0
    workers: int = 1

    def require(self, *names) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            flags = ", ".join("--" + n.replace("_", "-") for n in missing)
            raise UsageError(f"missing required option(s): {flags}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_bool(s) -> bool:
    if isinstance(s, bool):
        return s
    if str(s).lower() in ("1", "true", "yes", "on"):
        return True
    if str(s).lower() in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {s!r}")


def _parse_ratios(s) -> tuple[float, float, float]:
    parts = [p for p in str(s).split(",") if p.strip()]
    if len(parts) != 3:
        raise UsageError(f"expected three comma-separated ratios, got {s!r}")
    try:
        r = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"bad ratios {s!r}: {exc}") from exc
    return r


def _parse_float_list(s) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in str(s).split(",") if p.strip())
    except ValueError as exc:
        raise UsageError(f"bad number list {s!r}: {exc}") from exc


def _parse_int_list(s) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in str(s).split(",") if p.strip())
    except ValueError as exc:
        raise UsageError(f"bad integer list {s!r}: {exc}") from exc


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; '#' starts a comment, values may be quoted."""
    cfg = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        value = value.strip()
        if len(value) >= 2 and value[0] in "\"'" and value[-1] == value[0]:
            value = value[1:-1]
        cfg[key.strip().replace("-", "_")] = value
    return cfg


_PARSERS = {
    "min_df": int, "seed": int, "workers": int, "top_n": int,
    "max_outer_iters": int, "max_inner_iters": int, "max_solver_steps": int,
    "users": int, "features": int, "true_factors": int, "examples_per_user": int,
    "tol": float, "gradient_tolerance": float,
    "factor_scale": float, "lambda_scale": float, "profile_noise": float,
    "feature_density": float,
    "ratios": _parse_ratios, "stem": _parse_bool,
    "h_factors": _parse_int_list, "c1": _parse_float_list,
    "c2": _parse_float_list, "c3": _parse_float_list,
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge config-file values and flags (flags win) into a RunConfig."""
    file_cfg = read_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for key, raw in file_cfg.items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        setattr(cfg, key, _PARSERS.get(key, str)(raw))
    for key, value in vars(args).items():
        if key in known and value is not None:
            setattr(cfg, key, _PARSERS.get(key, lambda v: v)(value))
    if cfg.workers < 1:
        raise UsageError("--workers must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: RunConfig) -> None:
    cfg.require("documents", "interactions", "vocabulary", "datasets")
    docs = corpus.read_documents(cfg.documents)
    interactions = corpus.read_interactions(cfg.interactions)
    doc_ids = {d.id for d in docs}
    positives: dict[str, list[str]] = {}
    for user_id, item_id in interactions:
        if item_id not in doc_ids:
            raise DataError(f"interaction references unknown item {item_id!r} (user {user_id!r})")
        seen = positives.setdefault(user_id, [])
        if item_id not in seen:
            seen.append(item_id)

    vocab = corpus.build_vocabulary(docs, cfg.min_df, cfg.stem)
    if len(vocab) == 0:
        raise DataError(f"vocabulary is empty at min_df={cfg.min_df}; lower --min-df")
    corpus.save_vocabulary(vocab, cfg.vocabulary)
    vectors = {d.id: corpus.vectorize(d, vocab, cfg.stem) for d in docs}

    datasets = []
    skipped = 0
    n_examples = 0
    for user_id, pos_ids in positives.items():
        if not pos_ids:
            skipped += 1
            continue
        neg_ids = corpus.sample_negatives(
            set(pos_ids), doc_ids, len(pos_ids),
            seed=derive_seed(cfg.seed, "negatives", user_id), user_id=user_id,
        )
        examples = [corpus.LabeledExample(i, vectors[i], 1) for i in pos_ids]
        examples += [corpus.LabeledExample(i, vectors[i], -1) for i in sorted(neg_ids)]
        ds = corpus.split_dataset(
            examples, cfg.ratios, seed=derive_seed(cfg.seed, "split", user_id), user_id=user_id
        )
        n_examples += len(examples)
        datasets.append(ds)
    if skipped:
        log.info("skipped %d users with no positives", skipped)
    if not datasets:
        raise DataError("no users with at least one positive example")
    corpus.save_datasets(cfg.datasets, datasets, K=len(vocab), vocab_fingerprint=vocab.fingerprint())
    warned = sum(1 for ds in datasets if ds.split_warning)
    print(
        f"ingested {len(datasets)} users, {len(docs)} items, "
        f"{len(vocab)} features, {n_examples} examples "
        f"({warned} users with empty validation/test)"
    )


def _hyper_grid(cfg: RunConfig):
    for H, c1, c2, c3 in itertools.product(cfg.h_factors, cfg.c1, cfg.c2, cfg.c3):
        yield Hyperparams(
            H=H, c1=c1, c2=c2, c3=c3,
            max_outer_iters=cfg.max_outer_iters,
            max_inner_iters=cfg.max_inner_iters,
            outer_rel_tolerance=cfg.tol,
            solver=SolverSettings(
                gradient_tolerance=cfg.gradient_tolerance, max_steps=cfg.max_solver_steps
            ),
            seed=cfg.seed,
            factor_init=cfg.factor_init,
        )


def cmd_train(cfg: RunConfig) -> None:
    cfg.require("datasets", "model", "variant")
    variant = Variant(cfg.variant)
    data, K, fingerprint = corpus.load_datasets(cfg.datasets)
    grid = list(_hyper_grid(cfg))
    best_state = None
    best_f1 = None
    for hyper in grid:
        state = models.train(
            data, hyper, variant, K=K, vocab_fingerprint=fingerprint, workers=cfg.workers
        )
        if len(grid) == 1:
            best_state = state
            break
        per_user = evaluation.evaluate_model(state, data, split="validation")
        scorable = [m for m, ds in zip(per_user, data) if ds.validation]
        if not scorable:
            raise UsageError("cannot tune on an empty validation split")
        f1 = evaluation.macro_f1(scorable)
        log.info(
            "grid point H=%d c1=%g c2=%g c3=%g: validation macro-F1 %.4f",
            hyper.H, hyper.c1, hyper.c2, hyper.c3, f1,
        )
        if best_f1 is None or f1 > best_f1:
            best_state, best_f1 = state, f1
    models.save_model(best_state, cfg.model)
    h = best_state.hyper
    line = (
        f"trained {variant.value} on {len(data)} users (K={K}): "
        f"H={h.H} c1={h.c1:g} c2={h.c2:g} c3={h.c3:g}, "
        f"{len(best_state.objective_trace)} outer iterations, "
        f"final objective {best_state.objective_trace[-1]:.6g}"
    )
    if best_f1 is not None:
        line += f", validation macro-F1 {best_f1:.4f} (best of {len(grid)})"
    print(line)


def cmd_evaluate(cfg: RunConfig) -> None:
    cfg.require("datasets", "model", "report")
    data, _, fingerprint = corpus.load_datasets(cfg.datasets)
    state = models.load_model(cfg.model)
    if state.vocab_fingerprint != fingerprint:
        raise DataError(
            "model/vocabulary fingerprint mismatch: the model was trained "
            "against different features than this dataset file"
        )
    per_user = evaluation.evaluate_model(state, data, split=cfg.split)
    significance = None
    if cfg.compare:
        other = models.load_model(cfg.compare)
        if other.vocab_fingerprint != fingerprint:
            raise DataError("comparison model has a mismatched vocabulary fingerprint")
        other_f1 = {m.user_id: m.f1 for m in evaluation.evaluate_model(other, data, split=cfg.split)}
        missing = [m.user_id for m in per_user if m.user_id not in other_f1]
        if missing:
            raise DataError(f"comparison model lacks users: {missing[:5]}")
        t, p = evaluation.paired_t_test(
            [m.f1 for m in per_user], [other_f1[m.user_id] for m in per_user]
        )
        significance = {
            "baseline": Path(cfg.compare).name,
            "baseline_variant": other.variant.value,
            "t": t,
            "p": p,
        }
    evaluation.write_metrics_report(cfg.report, per_user, significance)
    overall = evaluation.overall_means(per_user)
    line = (
        f"{state.variant.value} on {cfg.split}: precision {overall['precision']:.4f}, "
        f"recall {overall['recall']:.4f}, macro-F1 {overall['macro_f1']:.4f} "
        f"({len(per_user)} users)"
    )
    if significance is not None:
        line += f"; vs {significance['baseline']}: t={significance['t']:.3f}, p={significance['p']:.4g}"
    print(line)


def cmd_inspect(cfg: RunConfig) -> None:
    cfg.require("model", "report")
    state = models.load_model(cfg.model)
    if state.factors is None:
        raise DataError(f"model variant {state.variant.value!r} has no factors to inspect")
    K, H = state.factors.shape
    if cfg.vocabulary:
        vocab = corpus.load_vocabulary(cfg.vocabulary)
        if vocab.fingerprint() != state.vocab_fingerprint:
            raise DataError("vocabulary fingerprint does not match the model")
    else:
        # synthetic or vocabulary-less models: positional feature names
        vocab = corpus.Vocabulary(
            terms=tuple(f"f{i:05d}" for i in range(K)),
            doc_freq=(1,) * K, corpus_size=1, min_df=1,
        )
    top = evaluation.top_factor_features(state.factors, vocab, cfg.top_n)
    evaluation.write_factor_report(cfg.report, top)
    summary = f"{state.variant.value}: wrote top-{cfg.top_n} terms for {H} factors to {cfg.report}"
    if state.variant in models.MULT_FAMILY:
        sizes = evaluation.cluster_sizes(state)
        if cfg.datasets:
            data, _, fingerprint = corpus.load_datasets(cfg.datasets)
            if fingerprint != state.vocab_fingerprint:
                raise DataError("datasets fingerprint does not match the model")
            top_items = evaluation.top_items_per_cluster(state, data)
        else:
            top_items = [[] for _ in sizes]
        clusters_path = cfg.clusters_report or str(Path(cfg.report).with_suffix("")) + ".clusters.json"
        evaluation.write_cluster_report(clusters_path, sizes, top_items, top_n=cfg.top_n)
        summary += f"; cluster sizes {sizes} to {clusters_path}"
    print(summary)


def cmd_synth(cfg: RunConfig) -> None:
    cfg.require("datasets", "ground_truth")
    try:
        config = synthetic.SyntheticConfig(
            M=cfg.users, K=cfg.features, H_true=cfg.true_factors, J=cfg.examples_per_user,
            factor_scale=cfg.factor_scale, lambda_scale=cfg.lambda_scale,
            profile_noise=cfg.profile_noise, feature_density=cfg.feature_density,
            variant=cfg.synth_variant, seed=cfg.seed, split_ratios=cfg.ratios,
        )
    except ValueError as exc:
        raise UsageError(f"invalid synthetic config: {exc}") from exc
    datasets, truth = synthetic.generate(config)
    corpus.save_datasets(cfg.datasets, datasets, K=config.K, vocab_fingerprint=config.fingerprint())
    synthetic.save_ground_truth(truth, config, cfg.ground_truth)
    n_pos = sum(sum(1 for ex in ds.all_examples() if ex.label == 1) for ds in datasets)
    print(
        f"generated {config.M} users x {config.J} examples (K={config.K}, "
        f"H_true={config.H_true}, {config.variant}); {n_pos} positive labels"
    )


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--verbose", "-v", action="store_true", help="info-level logs to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dfpm", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build vocabulary, vectors, negatives, and splits")
    _add_common(p)
    p.add_argument("--documents", help="JSON-lines items file (read)")
    p.add_argument("--interactions", help="TSV user_id<TAB>item_id file (read)")
    p.add_argument("--vocabulary", help="vocabulary JSON (written)")
    p.add_argument("--datasets", help="datasets JSON-lines (written)")
    p.add_argument("--min-df", type=int, help="drop terms in fewer documents than this (default 50)")
    p.add_argument("--ratios", help="train,validation,test ratios (default 0.8,0.1,0.1)")
    p.add_argument("--no-stem", dest="stem", action="store_false", default=None,
                   help="disable Porter stemming")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model variant (lists of values tune on validation)")
    _add_common(p)
    p.add_argument("--datasets", help="datasets JSON-lines (read)")
    p.add_argument("--model", help="model JSON (written)")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--h-factors", help="number of hidden factors H (comma list for a grid)")
    p.add_argument("--c1", help="profile-to-prior pull weight (comma list for a grid)")
    p.add_argument("--c2", help="mixing-vector penalty (comma list for a grid)")
    p.add_argument("--c3", help="factor-matrix penalty (comma list for a grid)")
    p.add_argument("--max-outer-iters", type=int, help="outer iteration cap (default 20)")
    p.add_argument("--max-inner-iters", type=int, help="inner cap for dfpm-norm fits (default 10)")
    p.add_argument("--tol", type=float, help="relative objective tolerance (default 1e-4)")
    p.add_argument("--gradient-tolerance", type=float, help="solver gradient norm stop (default 1e-6)")
    p.add_argument("--max-solver-steps", type=int, help="solver iteration cap (default 200)")
    p.add_argument("--factor-init", choices=["gaussian", "l2lr"], help="factor matrix start")
    p.add_argument("--workers", type=int, help="parallel per-user fit processes (default 1)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained model on one split")
    _add_common(p)
    p.add_argument("--datasets", help="datasets JSON-lines (read)")
    p.add_argument("--model", help="model JSON (read)")
    p.add_argument("--report", help="metrics report JSON (written)")
    p.add_argument("--split", choices=["train", "validation", "test"], help="default test")
    p.add_argument("--compare", help="second model JSON; adds a paired t-test block")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="top terms per factor; cluster report for dfpm-mult")
    _add_common(p)
    p.add_argument("--model", help="model JSON (read)")
    p.add_argument("--vocabulary", help="vocabulary JSON (read; omit for positional names)")
    p.add_argument("--datasets", help="datasets JSON-lines (read; enables top items per cluster)")
    p.add_argument("--report", help="factor report JSON (written)")
    p.add_argument("--clusters-report", help="cluster report JSON (written; default <report>.clusters.json)")
    p.add_argument("--top-n", type=int, help="terms/items per factor (default 20)")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    _add_common(p)
    p.add_argument("--datasets", help="datasets JSON-lines (written)")
    p.add_argument("--ground-truth", help="ground truth JSON (written)")
    p.add_argument("--users", type=int, help="number of users M (default 60)")
    p.add_argument("--features", type=int, help="feature count K (default 100)")
    p.add_argument("--true-factors", type=int, help="true hidden factors (default 3)")
    p.add_argument("--examples-per-user", type=int, help="examples J per user (default 40)")
    p.add_argument("--factor-scale", type=float, help="variance of factor entries (default 1)")
    p.add_argument("--lambda-scale", type=float, help="variance of mixing entries, norm variant (default 1)")
    p.add_argument("--profile-noise", type=float, help="std of profile noise (default 0.1)")
    p.add_argument("--feature-density", type=float, help="fraction of nonzeros per item (default 0.1)")
    p.add_argument("--variant", dest="synth_variant", choices=["mult", "norm"], help="mixing model")
    p.add_argument("--ratios", help="split ratios (default 0.8,0.1,0.1)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        cfg = resolve_config(args)
        args.func(cfg)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError) as exc:
        kind = "data error" if isinstance(exc, DataError) else "error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return 1 if isinstance(exc, ValueError) else 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
