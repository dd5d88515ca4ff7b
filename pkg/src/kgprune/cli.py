"""Command-line entry point for batch experimentation.

Subcommands wire together ingestion, training, expansion, and evaluation.
Every command is reproducible from its inputs, the config file, and the RNG
seed; reports embed a digest of the effective configuration, and output
files are written atomically (write to a temp file, then rename).

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 partial
completion (some seeds skipped).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import convnet
from .analogy import (
    AnalogyConfiguration,
    InputLayout,
    Padding,
    PathMode,
    assemble_input,
    build_training_set,
)
from .deciders import (
    Concatenation,
    InferenceConfig,
    MLPConfig,
    ThresholdPrunerConfig,
    analogy_decider,
    depth_decider,
    mlp_features,
    mlp_decider,
    mlp_train,
    threshold_decider,
)
from .embeddings import (
    EmbeddingKind,
    EmbeddingTable,
    ProximityMetric,
    load_embeddings_binary,
    load_embeddings_text,
    make_resolver,
)
from .evaluation import (
    GoldDataset,
    compute_metrics,
    cross_validate,
    format_metrics_table,
    score_run,
    seen_unseen_breakdown,
    transfer_run,
    write_metrics_records,
)
from .expansion import (
    attach_paths,
    expand_downward,
    expand_upward,
    read_expansion_result,
    write_expansion_result,
)
from .pairs import Decision, read_labeled_pairs
from .store import (
    KGStore,
    TripleFormatError,
    ingest_triples,
    load_degree_sidecar,
    read_store_snapshot,
    write_store_snapshot,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated view of the flat sectioned config file."""

    triples: Optional[Path] = None
    store_snapshot: Optional[Path] = None
    degrees: Optional[Path] = None
    embeddings: Optional[Path] = None
    embeddings_format: str = "text"
    dataset: Optional[Path] = None
    dataset2: Optional[Path] = None
    checkpoint: Optional[Path] = None
    output: Path = Path(".")

    decider_kind: str = "analogy"
    depth_k: int = 3
    threshold: ThresholdPrunerConfig = field(default_factory=ThresholdPrunerConfig)
    mlp: MLPConfig = field(default_factory=MLPConfig)

    model: convnet.ModelConfig = field(default_factory=convnet.ModelConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)

    epochs: int = 50
    batch_size: int = 32
    patience: Optional[int] = None

    seed: int = 0
    max_depth: Optional[int] = None
    macro: bool = False

    digest: str = ""


def _parse_config(path: Optional[Path], overrides: argparse.Namespace) -> RunConfig:
    parser = configparser.ConfigParser()
    raw_text = ""
    if path is not None:
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        raw_text = path.read_text(encoding="utf-8")
        parser.read_string(raw_text)

    errors: list[str] = []

    def get(section: str, key: str, default=None):
        return parser.get(section, key, fallback=default)

    cfg = RunConfig()
    for name in ("triples", "store_snapshot", "degrees", "embeddings", "dataset", "dataset2", "checkpoint"):
        value = get("paths", name)
        if value:
            setattr(cfg, name, Path(value))
    cfg.embeddings_format = get("paths", "embeddings_format", "text")
    if cfg.embeddings_format not in ("text", "binary"):
        errors.append(f"paths.embeddings_format must be text or binary, got {cfg.embeddings_format}")
    output = getattr(overrides, "output", None) or get("paths", "output", ".")
    cfg.output = Path(output)

    cfg.decider_kind = get("decider", "kind", "analogy")
    if cfg.decider_kind not in ("analogy", "depth", "threshold", "mlp"):
        errors.append(f"decider.kind unknown: {cfg.decider_kind}")
    cfg.depth_k = int(get("decider", "depth_k", "3"))

    try:
        kind = EmbeddingKind(get("inference", "embedding", "E1"))
        metric = ProximityMetric(get("inference", "metric", "cosine"))
        cfg.threshold = ThresholdPrunerConfig(
            alpha=float(get("decider", "alpha", "1.5")),
            beta=float(get("decider", "beta", "1.3")),
            gamma=int(get("decider", "gamma", "20")),
            absolute_degree=int(get("decider", "absolute_degree", "200")),
            kind=kind,
            metric=metric,
        )
        hidden = tuple(
            int(w) for w in get("decider", "mlp_hidden", "100").split(",") if w.strip()
        )
        seed = getattr(overrides, "seed", None)
        if seed is None:
            seed_text = get("run", "seed")
            if seed_text is None:
                errors.append("run.seed is mandatory (no wall-clock defaults)")
                seed = 0
            else:
                seed = int(seed_text)
        cfg.seed = seed
        cfg.mlp = MLPConfig(
            hidden_layers=hidden or (100,),
            concatenation=Concatenation(get("decider", "mlp_concatenation", "horizontal")),
            dim=int(get("model", "dim", "200")),
            learning_rate=float(get("model", "learning_rate", "0.001")),
            dropout_rate=float(get("model", "dropout_rate", "0")),
            kind=kind,
            seed=cfg.seed,
        )
        path_mode = PathMode(get("model", "path_mode", "no_path"))
        side_length = int(get("model", "side_length", "2"))
        layout = InputLayout(
            path_mode=path_mode,
            side_length=side_length,
            padding=Padding(get("model", "padding", "between")),
            dim=int(get("model", "dim", "200")),
        )
        cfg.model = convnet.ModelConfig(
            n1=int(get("model", "n1", "16")),
            n2=int(get("model", "n2", "8")),
            side_length=layout.side_length,
            dim=layout.dim,
            dropout_rate=float(get("model", "dropout_rate", "0")),
            learning_rate=float(get("model", "learning_rate", "0.001")),
            seed=cfg.seed,
        )
        cfg.inference = InferenceConfig(
            n=int(get("inference", "n", "20")),
            threshold=float(get("inference", "threshold", "0.5")),
            configuration=AnalogyConfiguration(get("inference", "configuration", "C1")),
            layout=layout,
            metric=metric,
            m=int(get("inference", "m", "20")),
            mc_samples=int(get("inference", "mc_samples", "10")),
            kind=kind,
            vote_seed=cfg.seed,
        )
        cfg.epochs = int(get("training", "epochs", "50"))
        cfg.batch_size = int(get("training", "batch_size", "32"))
        patience_text = get("training", "patience")
        cfg.patience = int(patience_text) if patience_text else None
        max_depth_text = getattr(overrides, "max_depth", None) or get("run", "max_depth")
        cfg.max_depth = int(max_depth_text) if max_depth_text else None
        cfg.macro = str(get("run", "macro", "false")).lower() in ("1", "true", "yes")
    except (ValueError, KeyError) as exc:
        errors.append(str(exc))

    for name in ("triples", "store_snapshot", "degrees", "embeddings", "dataset", "dataset2", "checkpoint"):
        p = getattr(cfg, name)
        if p is not None and not p.exists():
            errors.append(f"paths.{name} does not exist: {p}")

    if errors:
        raise ConfigError("; ".join(errors))

    digest_src = raw_text + f"|seed={cfg.seed}|output={cfg.output}"
    cfg.digest = hashlib.sha256(digest_src.encode("utf-8")).hexdigest()[:16]
    return cfg


def _atomic_write_text(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fp:
            fp.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_bytes(path: Path, content: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fp:
            fp.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_store(cfg: RunConfig) -> KGStore:
    if cfg.store_snapshot is not None:
        with open(cfg.store_snapshot, encoding="utf-8") as fp:
            store = read_store_snapshot(fp)
    elif cfg.triples is not None:
        with open(cfg.triples, encoding="utf-8") as fp:
            store = ingest_triples(fp)
    else:
        raise DataError("no triples or store snapshot configured")
    if cfg.degrees is not None:
        with open(cfg.degrees, encoding="utf-8") as fp:
            load_degree_sidecar(store, fp)
    return store


def _load_table(cfg: RunConfig) -> EmbeddingTable:
    if cfg.embeddings is None:
        raise DataError("no embeddings configured")
    if cfg.embeddings_format == "binary":
        with open(cfg.embeddings, "rb") as fp:
            return load_embeddings_binary(fp)
    with open(cfg.embeddings, encoding="utf-8") as fp:
        return load_embeddings_text(fp)


def _load_dataset(cfg: RunConfig, which: str = "dataset") -> GoldDataset:
    path = getattr(cfg, which)
    if path is None:
        raise DataError(f"no {which} configured")
    with open(path, encoding="utf-8") as fp:
        pairs = read_labeled_pairs(fp)
    return GoldDataset.from_pairs(path.stem, pairs)


def _prepare_pairs(cfg: RunConfig, store: KGStore, pairs):
    if cfg.inference.layout.path_mode is PathMode.PATH:
        return attach_paths(store, pairs)
    return list(pairs)


def _quadruple_arrays(cfg: RunConfig, pairs, table: EmbeddingTable, store: KGStore):
    resolve = make_resolver(table, store, cfg.inference.kind)
    quadruples = build_training_set(
        cfg.inference.configuration, pairs, cfg.inference.m, table, cfg.inference.metric
    )
    inputs, labels = [], []
    for q in quadruples:
        inputs.append(assemble_input(q, cfg.inference.layout, resolve))
        labels.append(q.label)
    if not inputs:
        raise DataError("no training quadruples could be built")
    return np.stack(inputs), np.array(labels, dtype=np.float64)


def _train_model(cfg: RunConfig, store: KGStore, table: EmbeddingTable, train_pairs, val_pairs):
    x_train, y_train = _quadruple_arrays(cfg, train_pairs, table, store)
    x_val = y_val = None
    if val_pairs:
        try:
            x_val, y_val = _quadruple_arrays(cfg, val_pairs, table, store)
        except DataError:
            x_val = y_val = None
    return convnet.train(
        cfg.model,
        x_train,
        y_train,
        x_val,
        y_val,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        patience=cfg.patience,
    )


def make_decider_factory(cfg: RunConfig, store: KGStore, table: Optional[EmbeddingTable]):
    """Factory (train_pairs, val_pairs) -> decider for the configured kind."""
    kind = cfg.decider_kind
    if kind == "depth":
        return lambda train_pairs, val_pairs: depth_decider(cfg.depth_k)
    if table is None:
        raise DataError(f"decider kind {kind} requires embeddings")
    if kind == "threshold":
        return lambda train_pairs, val_pairs: threshold_decider(cfg.threshold, table, store)
    if kind == "mlp":

        def mlp_factory(train_pairs, val_pairs):
            resolve = make_resolver(table, store, cfg.mlp.kind)

            def featurize(pairs):
                xs, ys = [], []
                for p in pairs:
                    f = mlp_features(cfg.mlp, resolve, p.seed, p.reached)
                    if f is not None:
                        xs.append(f)
                        ys.append(1.0 if p.decision is Decision.KEEP else 0.0)
                if not xs:
                    raise DataError("no embeddable pairs for MLP training")
                return np.stack(xs), np.array(ys)

            x_train, y_train = featurize(train_pairs)
            x_val = y_val = None
            if val_pairs:
                try:
                    x_val, y_val = featurize(val_pairs)
                except DataError:
                    pass
            params = mlp_train(
                cfg.mlp, x_train, y_train, x_val, y_val,
                epochs=cfg.epochs, batch_size=cfg.batch_size, patience=cfg.patience,
            )
            return mlp_decider(cfg.mlp, params, table, store, cfg.inference.mc_samples)

        return mlp_factory

    def analogy_factory(train_pairs, val_pairs):
        train_pairs = _prepare_pairs(cfg, store, train_pairs)
        val_pairs = _prepare_pairs(cfg, store, val_pairs)
        params, _history = _train_model(cfg, store, table, train_pairs, val_pairs)
        return analogy_decider(params, cfg.model, train_pairs, cfg.inference, table, store)

    return analogy_factory


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: RunConfig) -> int:
    store = _load_store(cfg)
    import io

    buf = io.StringIO()
    write_store_snapshot(store, buf)
    snapshot = buf.getvalue()
    _atomic_write_text(cfg.output / "store.snapshot", snapshot)
    n_edges = sum(len(v) for v in store.forward_subclass.values()) + sum(
        len(v) for v in store.instance_of.values()
    )
    summary = (
        f"config_digest\t{cfg.digest}\n"
        f"entities\t{len(store.entities())}\n"
        f"hierarchy_edges\t{n_edges}\n"
        f"snapshot_sha256\t{hashlib.sha256(snapshot.encode()).hexdigest()}\n"
    )
    _atomic_write_text(cfg.output / "ingest.summary", summary)
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    store = _load_store(cfg)
    table = _load_table(cfg)
    dataset = _load_dataset(cfg)
    rng = np.random.default_rng(cfg.seed)
    seeds = dataset.seeds()
    shuffled = list(seeds)
    rng.shuffle(shuffled)
    n_val = max(1, len(shuffled) // 5) if len(shuffled) > 1 else 0
    val_seeds = set(shuffled[:n_val])
    train_pairs = [p for s in seeds if s not in val_seeds for p in dataset.by_seed[s]]
    val_pairs = [p for s in seeds if s in val_seeds for p in dataset.by_seed[s]]
    train_pairs = _prepare_pairs(cfg, store, train_pairs)
    val_pairs = _prepare_pairs(cfg, store, val_pairs)
    params, history = _train_model(cfg, store, table, train_pairs, val_pairs)

    import io

    buf = io.BytesIO()
    convnet.save_checkpoint(params, cfg.model, buf)
    _atomic_write_bytes(cfg.output / "model.ckpt", buf.getvalue())
    lines = [f"config_digest\t{cfg.digest}", f"parameter_count\t{convnet.parameter_count(cfg.model)}"]
    for epoch, loss in enumerate(history.train_loss, start=1):
        val = history.val_loss[epoch - 1] if epoch <= len(history.val_loss) else float("nan")
        lines.append(f"epoch\t{epoch}\ttrain_loss\t{loss:.6f}\tval_loss\t{val:.6f}")
    lines.append(f"best_epoch\t{history.best_epoch}")
    _atomic_write_text(cfg.output / "train.log", "\n".join(lines) + "\n")
    sys.stdout.write(f"parameter_count {convnet.parameter_count(cfg.model)}\n")
    sys.stdout.write(f"best_epoch {history.best_epoch} best_val_loss {history.best_val_loss}\n")
    return EXIT_OK


def _build_decider_from_checkpoint(cfg: RunConfig, store: KGStore, table, pairs):
    if cfg.decider_kind == "depth":
        return depth_decider(cfg.depth_k)
    if cfg.decider_kind == "threshold":
        return threshold_decider(cfg.threshold, table, store)
    if cfg.decider_kind == "analogy":
        if cfg.checkpoint is None:
            raise DataError("analogy expansion requires paths.checkpoint")
        with open(cfg.checkpoint, "rb") as fp:
            params, model_cfg = convnet.load_checkpoint(fp)
        if model_cfg.dim != cfg.inference.layout.dim:
            raise DataError(
                f"checkpoint dim {model_cfg.dim} does not match configured dim "
                f"{cfg.inference.layout.dim}"
            )
        pool = _prepare_pairs(cfg, store, pairs)
        return analogy_decider(params, model_cfg, pool, cfg.inference, table, store)
    raise DataError(f"cannot build decider kind {cfg.decider_kind} from a checkpoint")


def cmd_expand(cfg: RunConfig, seeds: Sequence[str]) -> int:
    store = _load_store(cfg)
    table = _load_table(cfg) if cfg.decider_kind != "depth" else None
    pairs = _load_dataset(cfg).pairs() if cfg.dataset else []
    decider = _build_decider_from_checkpoint(cfg, store, table, pairs)
    known = set(store.entities())
    skipped = []
    import io

    for seed in seeds:
        if seed not in known:
            sys.stderr.write(f"warning: unknown seed {seed}, skipping\n")
            skipped.append(seed)
            continue
        result = expand_downward(store, seed, decider, max_depth=cfg.max_depth)
        buf = io.StringIO()
        write_expansion_result(result, buf)
        _atomic_write_text(cfg.output / f"expansion_{seed}.tsv", buf.getvalue())
        upward = expand_upward(store, seed)
        sys.stdout.write(
            f"{seed}\tkept={len(result.kept())}\tpruned={len(result.pruned())}\t"
            f"upward={len(upward)}\n"
        )
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_evaluate(cfg: RunConfig, result_files: Sequence[str]) -> int:
    dataset = _load_dataset(cfg)
    rows = []
    from .evaluation import ConfusionBreakdown

    pooled = ConfusionBreakdown()
    for path in result_files:
        with open(path, encoding="utf-8") as fp:
            result = read_expansion_result(fp)
        cb = score_run(result, dataset.by_seed.get(result.seed, []))
        pooled.add(cb)
        rows.append((result.seed, cfg.decider_kind, compute_metrics(cb)))
    rows.append(("all", cfg.decider_kind, compute_metrics(pooled)))
    _write_reports(cfg, rows, "evaluate")
    return EXIT_OK


def _write_reports(cfg: RunConfig, rows, stem: str) -> None:
    import io

    buf = io.StringIO()
    buf.write(f"# config_digest {cfg.digest}\n")
    write_metrics_records(rows, buf)
    _atomic_write_text(cfg.output / f"{stem}_report.tsv", buf.getvalue())
    human = f"config digest: {cfg.digest}\n" + format_metrics_table(rows)
    _atomic_write_text(cfg.output / f"{stem}_report.txt", human)
    sys.stdout.write(human)


def cmd_cv(cfg: RunConfig, with_seen_unseen: bool = False) -> int:
    store = _load_store(cfg)
    table = _load_table(cfg) if cfg.decider_kind != "depth" else None
    dataset = _load_dataset(cfg)
    factory = make_decider_factory(cfg, store, table)
    rng = np.random.default_rng(cfg.seed)
    report = cross_validate(
        store, dataset, factory, rng, max_depth=cfg.max_depth, macro=cfg.macro
    )
    rows = [(str(o.fold), cfg.decider_kind, o.metrics) for o in report.folds]
    rows.append(("mean", cfg.decider_kind, report.aggregate.mean))
    rows.append(("std", cfg.decider_kind, report.aggregate.std))
    if with_seen_unseen:
        for outcome in report.folds:
            su = seen_unseen_breakdown(outcome.results, dataset, outcome.train_pairs)
            rows.append((f"{outcome.fold}:seen({su.seen_rate:.2%})", cfg.decider_kind, su.seen))
            rows.append((f"{outcome.fold}:unseen", cfg.decider_kind, su.unseen))
    _write_reports(cfg, rows, "cv")
    return EXIT_OK


def cmd_transfer(cfg: RunConfig) -> int:
    store = _load_store(cfg)
    table = _load_table(cfg) if cfg.decider_kind != "depth" else None
    train_ds = _load_dataset(cfg, "dataset")
    test_ds = _load_dataset(cfg, "dataset2")
    if train_ds.name == test_ds.name:
        raise DataError("transfer requires distinct train and test dataset names")
    factory = make_decider_factory(cfg, store, table)
    rng = np.random.default_rng(cfg.seed)
    metrics, _results, _train_pairs = transfer_run(
        store, train_ds, test_ds, factory, rng, max_depth=cfg.max_depth, macro=cfg.macro
    )
    rows = [(f"{train_ds.name}->{test_ds.name}", cfg.decider_kind, metrics)]
    _write_reports(cfg, rows, "transfer")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgprune",
        description="Bootstrap a domain KG by expanding from seeds and pruning with "
        "a zero-shot analogy classifier.",
    )
    parser.add_argument("--config", type=Path, help="run configuration file")
    parser.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    parser.add_argument("--output", type=Path, help="output directory (overrides config)")
    parser.add_argument("--max-depth", dest="max_depth", help="expansion depth cap")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="index a triple file into a store snapshot")
    sub.add_parser("train", help="train the analogy classifier, write a checkpoint")
    p_expand = sub.add_parser("expand", help="expand seeds with the configured decider")
    p_expand.add_argument("seeds", nargs="+", help="seed entity ids")
    p_eval = sub.add_parser("evaluate", help="score expansion result files against gold")
    p_eval.add_argument("results", nargs="+", help="expansion result files")
    p_cv = sub.add_parser("cv", help="5-fold cross-validation over seed entities")
    p_cv.add_argument("--seen-unseen", action="store_true", help="add seen/unseen breakdown")
    sub.add_parser("transfer", help="train on one dataset, test on the other")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _parse_config(args.config, args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_USAGE
    try:
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "expand":
            return cmd_expand(cfg, args.seeds)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.results)
        if args.command == "cv":
            return cmd_cv(cfg, with_seen_unseen=args.seen_unseen)
        if args.command == "transfer":
            return cmd_transfer(cfg)
    except (DataError, TripleFormatError, ValueError, OSError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    parser.error(f"unknown command {args.command}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
