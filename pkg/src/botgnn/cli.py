"""Command-line interface: prepare / train / eval / ablate / gradcheck / bench.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Every run writes exactly one JSON manifest recording the resolved
configuration, input digests, seed, artifact paths and wall-clock timings;
default manifest paths derive from the primary output (see ``--manifest``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__, kernels
from .bench import format_report, run_benchmark
from .errors import DataError, NumericalError
from .fixtures import gradcheck_suite
from .graph import GnnVariant
from .ingest import (
    assemble_dataset,
    hash_embed_texts,
    load_bundle,
    load_embeddings,
    parse_edges,
    parse_users,
    save_bundle,
)
from .model import FEATURE_NAMES, ModelConfig, ModelParams, input_widths
from .tensor import load_checkpoint, save_checkpoint
from .train import (
    TrainConfig,
    ablate_features,
    ablate_gnn,
    ablate_layers,
    ablation_csv,
    evaluate_params,
    history_csv,
    train,
)

GRADCHECK_TOLERANCE = 1e-4


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_manifest(path, payload: dict) -> None:
    payload = dict(payload, version=__version__, kernel_backend=kernels.BACKEND)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _model_config_dict(cfg: ModelConfig) -> dict:
    return {
        "dim": cfg.dim,
        "layers": cfg.layers,
        "variant": cfg.variant.value,
        "slope": cfg.slope,
        "inter_layer_activation": cfg.inter_layer_activation,
        "l2": cfg.l2,
        "loss_reduction": cfg.loss_reduction,
        "features": list(cfg.features),
    }


def _model_config_from_dict(d: dict) -> ModelConfig:
    try:
        return ModelConfig(
            dim=int(d["dim"]),
            layers=int(d["layers"]),
            variant=GnnVariant(d["variant"]),
            slope=float(d["slope"]),
            inter_layer_activation=bool(d["inter_layer_activation"]),
            l2=float(d["l2"]),
            loss_reduction=str(d["loss_reduction"]),
            features=tuple(d["features"]),
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"manifest model config is invalid: {exc}") from exc


def _metrics_dict(m) -> dict:
    return {"accuracy": m.accuracy, "f1": m.f1, "mcc": m.mcc,
            "tp": m.tp, "tn": m.tn, "fp": m.fp, "fn": m.fn}


def _parse_features(parser: argparse.ArgumentParser, text: str) -> tuple[str, ...]:
    if text == "all":
        return FEATURE_NAMES
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    bad = set(names) - set(FEATURE_NAMES)
    if bad or not names:
        parser.error(f"--features must be 'all' or a comma list of {FEATURE_NAMES}")
    return names


def _add_model_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--dim", type=int, default=128, help="user embedding dimension D (multiple of 4)")
    sub.add_argument("--layers", type=int, default=2, help="number of graph layers")
    sub.add_argument("--gnn", choices=[v.value for v in GnnVariant], default="rgcn",
                     help="graph layer variant")
    sub.add_argument("--lr", type=float, default=1e-3, help="learning rate")
    sub.add_argument("--lambda", dest="l2", type=float, default=5e-3,
                     help="L2 coefficient over all learnable parameters")
    sub.add_argument("--epochs", type=int, default=100, help="max training epochs")
    sub.add_argument("--seed", type=int, default=42, help="RNG seed")
    sub.add_argument("--features", default="all",
                     help="'all' or comma list of desc,tweets,num,cat")
    sub.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    sub.add_argument("--patience", type=int, default=None,
                     help="early-stop after this many non-improving val-F1 epochs (default: off)")
    sub.add_argument("--loss-reduction", choices=["mean", "sum"], default="mean")
    sub.add_argument("--slope", type=float, default=0.01, help="leaky-relu slope")
    sub.add_argument("--inter-layer-activation", action="store_true",
                     help="apply leaky-relu between graph layers (off by default)")


def _train_config(parser: argparse.ArgumentParser, args) -> TrainConfig:
    if args.dim % 4 != 0 or args.dim <= 0:
        parser.error("--dim must be a positive multiple of 4")
    if args.layers < 1:
        parser.error("--layers must be >= 1")
    if args.patience is not None and args.patience < 0:
        parser.error("--patience must be >= 0")
    model = ModelConfig(
        dim=args.dim,
        layers=args.layers,
        variant=GnnVariant(args.gnn),
        slope=args.slope,
        inter_layer_activation=args.inter_layer_activation,
        l2=args.l2,
        loss_reduction=args.loss_reduction,
        features=_parse_features(parser, args.features),
    )
    return TrainConfig(epochs=args.epochs, lr=args.lr, optimizer=args.optimizer,
                       seed=args.seed, patience=args.patience, model=model)


def _train_config_dict(cfg: TrainConfig) -> dict:
    return {"epochs": cfg.epochs, "lr": cfg.lr, "optimizer": cfg.optimizer,
            "seed": cfg.seed, "patience": cfg.patience,
            "model": _model_config_dict(cfg.model)}


# ---------------------------------------------------------------------------
# subcommands


def cmd_prepare(parser, args) -> int:
    t0 = time.perf_counter()
    emb_route = args.emb_desc is not None or args.emb_tweets is not None
    hash_route = args.hash_embed_dim is not None
    if emb_route and hash_route:
        parser.error("--emb-desc/--emb-tweets and --hash-embed-dim are mutually exclusive")
    if emb_route and (args.emb_desc is None or args.emb_tweets is None):
        parser.error("--emb-desc and --emb-tweets must be given together")
    if hash_route and args.tweets_jsonl is None:
        parser.error("--hash-embed-dim requires --tweets-jsonl")
    if not emb_route and not hash_route:
        parser.error("choose an embedding source: --emb-desc/--emb-tweets or "
                     "--hash-embed-dim/--tweets-jsonl")
    if hash_route and args.hash_embed_dim <= 0:
        parser.error("--hash-embed-dim must be positive")

    records = parse_users(args.users)
    edges = parse_edges(args.edges)
    inputs = {str(args.users): _sha256(args.users), str(args.edges): _sha256(args.edges)}
    if emb_route:
        desc = load_embeddings(args.emb_desc, len(records)).data
        tweets = load_embeddings(args.emb_tweets, len(records)).data
        inputs[str(args.emb_desc)] = _sha256(args.emb_desc)
        inputs[str(args.emb_tweets)] = _sha256(args.emb_tweets)
        route = {"source": "bre", "desc": str(args.emb_desc), "tweets": str(args.emb_tweets)}
    else:
        ids = [r.user_id for r in records]
        desc, tweets = hash_embed_texts(ids, args.tweets_jsonl, args.hash_embed_dim, args.seed)
        inputs[str(args.tweets_jsonl)] = _sha256(args.tweets_jsonl)
        route = {"source": "hash", "dim": args.hash_embed_dim, "seed": args.seed,
                 "texts": str(args.tweets_jsonl)}

    dataset = assemble_dataset(records, edges, desc, tweets)
    save_bundle(args.out, dataset)
    manifest = args.manifest or f"{args.out}.manifest.json"
    _write_manifest(manifest, {
        "command": "prepare",
        "seed": args.seed,
        "config": {"embeddings": route},
        "inputs": inputs,
        "outputs": {"bundle": str(args.out)},
        "stats": {"n_nodes": dataset.n_nodes, "n_edges": dataset.graph.n_edges,
                  "train": int(dataset.masks.train.sum()),
                  "val": int(dataset.masks.val.sum()),
                  "test": int(dataset.masks.test.sum())},
        "timings_s": {"total": time.perf_counter() - t0},
    })
    print(f"bundle written: {args.out} ({dataset.n_nodes} nodes, "
          f"{dataset.graph.n_edges} follow edges)")
    return 0


def cmd_train(parser, args) -> int:
    t0 = time.perf_counter()
    cfg = _train_config(parser, args)
    dataset = load_bundle(args.data)
    result = train(dataset, cfg)

    save_checkpoint(args.out_ckpt, result.params.named())
    history_path = args.history or f"{args.out_ckpt}.history.csv"
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write(history_csv(result.history))
    manifest = args.manifest or f"{args.out_ckpt}.manifest.json"
    _write_manifest(manifest, {
        "command": "train",
        "seed": cfg.seed,
        "config": _train_config_dict(cfg),
        "inputs": {str(args.data): _sha256(args.data)},
        "outputs": {"checkpoint": str(args.out_ckpt), "history": str(history_path)},
        "metrics": {"best_epoch": result.best_epoch,
                    "epochs_run": len(result.history),
                    "val": _metrics_dict(result.best_val)},
        "timings_s": {"total": time.perf_counter() - t0},
    })
    m = result.best_val
    print(f"best epoch {result.best_epoch}/{len(result.history)}: "
          f"val accuracy={m.accuracy:.6f} f1={m.f1:.6f} mcc={m.mcc:.6f}")
    return 0


def _load_params(ckpt_path, dataset) -> tuple[ModelParams, ModelConfig]:
    sidecar = Path(f"{ckpt_path}.manifest.json")
    if not sidecar.exists():
        raise DataError(f"missing train manifest {sidecar}; it records the model "
                        f"architecture needed to load the checkpoint")
    with open(sidecar, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    try:
        model_cfg = _model_config_from_dict(manifest["config"]["model"])
    except KeyError as exc:
        raise DataError(f"train manifest {sidecar} lacks a model config") from exc
    params = ModelParams.init(model_cfg, input_widths(dataset.features), seed=0)
    params.load_state(load_checkpoint(ckpt_path))
    return params, model_cfg


def cmd_eval(parser, args) -> int:
    t0 = time.perf_counter()
    dataset = load_bundle(args.data)
    params, model_cfg = _load_params(args.ckpt, dataset)
    mask = {"train": dataset.masks.train, "val": dataset.masks.val,
            "test": dataset.masks.test}[args.split]
    metrics = evaluate_params(dataset, params, model_cfg, mask)
    manifest = args.manifest or f"{args.ckpt}.eval-{args.split}.manifest.json"
    _write_manifest(manifest, {
        "command": "eval",
        "seed": None,
        "config": {"split": args.split, "model": _model_config_dict(model_cfg)},
        "inputs": {str(args.data): _sha256(args.data), str(args.ckpt): _sha256(args.ckpt)},
        "outputs": {},
        "metrics": {args.split: _metrics_dict(metrics)},
        "timings_s": {"total": time.perf_counter() - t0},
    })
    print("accuracy,f1,mcc")
    print(f"{metrics.accuracy:.6f},{metrics.f1:.6f},{metrics.mcc:.6f}")
    return 0


def _parse_values(parser, args) -> list:
    if args.axis == "features":
        text = args.values or "all,desc,tweets,num,cat"
        subsets = []
        for entry in text.split(","):
            entry = entry.strip()
            if entry == "all":
                subsets.append(FEATURE_NAMES)
                continue
            names = tuple(p.strip() for p in entry.split("+") if p.strip())
            if not names or set(names) - set(FEATURE_NAMES):
                parser.error(f"bad feature subset {entry!r}; use '+'-joined names "
                             f"from {FEATURE_NAMES} or 'all'")
            subsets.append(names)
        return subsets
    if args.axis == "gnn":
        text = args.values or "rgcn,gcn,gat,mlp"
        try:
            return [GnnVariant(v.strip()) for v in text.split(",") if v.strip()]
        except ValueError:
            parser.error(f"--values for gnn must come from "
                         f"{[v.value for v in GnnVariant]}")
    text = args.values or "1,2,3,4"
    try:
        counts = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        parser.error("--values for layers must be a comma list of integers")
    if not counts or any(c < 1 for c in counts):
        parser.error("layer counts must be >= 1")
    return counts


def cmd_ablate(parser, args) -> int:
    t0 = time.perf_counter()
    cfg = _train_config(parser, args)
    values = _parse_values(parser, args)
    dataset = load_bundle(args.data)
    if args.axis == "features":
        rows = ablate_features(dataset, cfg, values)
    elif args.axis == "gnn":
        rows = ablate_gnn(dataset, cfg, values)
    else:
        rows = ablate_layers(dataset, cfg, values)
    csv_text = ablation_csv(rows)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    manifest = args.manifest or f"{args.out}.manifest.json"
    _write_manifest(manifest, {
        "command": "ablate",
        "seed": cfg.seed,
        "config": dict(_train_config_dict(cfg), axis=args.axis,
                       values=[label for label, _ in rows]),
        "inputs": {str(args.data): _sha256(args.data)},
        "outputs": {"table": str(args.out)},
        "metrics": {label: _metrics_dict(m) for label, m in rows},
        "timings_s": {"total": time.perf_counter() - t0},
    })
    sys.stdout.write(csv_text)
    return 0


def cmd_gradcheck(parser, args) -> int:
    t0 = time.perf_counter()
    results = gradcheck_suite()
    for name, err in results:
        ok = err < GRADCHECK_TOLERANCE
        print(f"gradcheck {name}: max_rel_err={err:.3e} "
              f"{'PASS' if ok else 'FAIL'} (tolerance {GRADCHECK_TOLERANCE:g})")
    worst = max(err for _, err in results)
    manifest = args.manifest or "gradcheck.manifest.json"
    _write_manifest(manifest, {
        "command": "gradcheck",
        "seed": None,
        "config": {"tolerance": GRADCHECK_TOLERANCE},
        "inputs": {},
        "outputs": {},
        "metrics": {name: err for name, err in results},
        "timings_s": {"total": time.perf_counter() - t0},
    })
    if worst >= GRADCHECK_TOLERANCE:
        raise NumericalError(f"gradient check failed: max error {worst:.3e} "
                             f">= {GRADCHECK_TOLERANCE:g}")
    return 0


def cmd_bench(parser, args) -> int:
    t0 = time.perf_counter()
    results = run_benchmark(nodes=args.nodes, degree=args.degree, dim=args.dim,
                            repeats=args.repeats, seed=args.seed)
    print(format_report(results))
    manifest = args.manifest or "bench.manifest.json"
    _write_manifest(manifest, {
        "command": "bench",
        "seed": args.seed,
        "config": {k: results[k] for k in ("nodes", "degree", "dim", "repeats")},
        "inputs": {},
        "outputs": {},
        "metrics": {"timings_s": results["timings_s"],
                    "max_backend_diff": results["max_backend_diff"]},
        "timings_s": {"total": time.perf_counter() - t0},
    })
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="botgnn",
        description="Social bot detection with relational graph convolutions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="encode users/edges/embeddings into a dataset bundle")
    p.add_argument("--users", required=True, help="users.jsonl path")
    p.add_argument("--edges", required=True, help="edges.csv path")
    p.add_argument("--emb-desc", help="description embeddings (.bre)")
    p.add_argument("--emb-tweets", help="tweet embeddings (.bre)")
    p.add_argument("--hash-embed-dim", type=int, help="use hashed text features of this width")
    p.add_argument("--tweets-jsonl", help="texts.jsonl with per-user description/tweets "
                                          "(hash route only)")
    p.add_argument("--seed", type=int, default=0, help="seed for hashed embeddings")
    p.add_argument("--out", required=True, help="output bundle (.npz)")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train on a prepared bundle")
    p.add_argument("--data", required=True, help="dataset bundle from 'prepare'")
    p.add_argument("--out-ckpt", required=True, help="checkpoint output path (BRGP)")
    p.add_argument("--history", help="history CSV path (default: <out-ckpt>.history.csv)")
    p.add_argument("--manifest", help="manifest path (default: <out-ckpt>.manifest.json)")
    _add_model_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--manifest", help="manifest path (default: <ckpt>.eval-<split>.manifest.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sweep feature sets, layer variants or layer counts")
    p.add_argument("--data", required=True)
    p.add_argument("--axis", choices=["features", "gnn", "layers"], required=True)
    p.add_argument("--values", help="comma list; feature subsets use '+' "
                                    "(defaults per axis, see README)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    _add_model_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and the loss")
    p.add_argument("--manifest", help="manifest path (default: ./gradcheck.manifest.json)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="benchmark compiled vs numpy aggregation kernels")
    p.add_argument("--nodes", type=int, default=20000)
    p.add_argument("--degree", type=int, default=20)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", help="manifest path (default: ./bench.manifest.json)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(parser, args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
