"""Command-line entry point: inject, hyperbolicity, train, score, eval, pipeline.

Exit codes: 0 success, 1 config/validation error, 2 runtime/numeric error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .graph import GraphFormatError, gromov_hyperbolicity, load_graph, save_graph
from .inject import InjectionConfig, InjectionError, inject_combined
from .model import HCADModel, ModelConfig
from .sampler import RwrConfig, SamplingError
from .score import MetricError, ScoreConfig, emit_report, multi_round_score, read_scores_csv, roc_auc
from .train import TrainConfig, TrainingError, train_loop

log = logging.getLogger("hcad")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

# per-dataset hyperparameters; the CORA row also fixes the clique count used for injection
PRESETS = {
    "cora": {"dropout": 0.5, "weight_decay": 2e-4, "curvature": 2.5, "cliques": 5},
    "citeseer": {"dropout": 0.1, "weight_decay": 1e-4, "curvature": 1.0, "cliques": 5},
    "pubmed": {"dropout": 0.1, "weight_decay": 1e-4, "curvature": 2.5, "cliques": 20},
    "airport": {"dropout": 0.1, "weight_decay": 1e-4, "curvature": 2.5, "cliques": 5},
}

DEFAULTS = {
    "lr": 0.01,
    "curvature": 2.5,
    "hidden": 64,
    "layers": 1,
    "dropout": 0.1,
    "weight_decay": 1e-4,
    "epochs": 100,
    "batch": 300,
    "subgraph_size": 4,
    "restart": 0.1,
    "mode": "full",
    "rounds": 256,
    "clique_size": 15,
    "cliques": 5,
    "candidates": 50,
    "budget": 100_000,
}


class StageError(RuntimeError):
    def __init__(self, stage: str, code: int, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.code = code


def _resolve(args, key):
    value = getattr(args, key, None)
    if value is not None:
        return value
    preset = getattr(args, "preset", None)
    if preset and key in PRESETS[preset]:
        return PRESETS[preset][key]
    return DEFAULTS[key]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, seed: int, inputs: dict, started: float, extra=None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {k: {"path": str(v), "sha256": file_digest(v)} for k, v in inputs.items() if v is not None},
        "code_version": __version__,
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        "threads": torch.get_num_threads(),
        "duration_seconds": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _graph_inputs(args) -> dict:
    return {"edges": args.edges, "attributes": args.attrs, "labels": getattr(args, "labels", None)}


# stages --------------------------------------------------------------------------


def run_inject(args, out_dir: Path) -> dict:
    started = time.time()
    cfg = InjectionConfig(
        clique_size=_resolve(args, "clique_size"),
        cliques=_resolve(args, "cliques"),
        attr_count=args.attr_count,
        candidate_size=_resolve(args, "candidates"),
        seed=args.seed,
    )
    g = load_graph(args.edges, args.attrs)
    gi, report = inject_combined(g, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "edges": out_dir / "edges.txt",
        "attrs": out_dir / "attributes.csv",
        "labels": out_dir / "labels.txt",
    }
    save_graph(gi, paths["edges"], paths["attrs"], paths["labels"])
    _write_json(out_dir / "injection_report.json", report.to_dict())
    config = asdict(cfg) | {"k": cfg.k}
    write_manifest(out_dir / "manifest.json", "inject", config, args.seed,
                   {"edges": args.edges, "attributes": args.attrs}, started)
    log.info("injected %d structural + %d attribute anomalies", len(report.structural_nodes), len(report.attribute_nodes))
    return {"paths": paths, "config": config, "report": report.to_dict()}


def _train_configs(args):
    model_cfg = ModelConfig(
        hidden_dim=_resolve(args, "hidden"),
        num_layers=_resolve(args, "layers"),
        dropout=_resolve(args, "dropout"),
        curvature=_resolve(args, "curvature"),
        mode=_resolve(args, "mode"),
    )
    train_cfg = TrainConfig(
        lr=_resolve(args, "lr"),
        weight_decay=_resolve(args, "weight_decay"),
        epochs=_resolve(args, "epochs"),
        batch_size=_resolve(args, "batch"),
        seed=args.seed,
    )
    rwr_cfg = RwrConfig(subgraph_size=_resolve(args, "subgraph_size"), restart_prob=_resolve(args, "restart"), seed=args.seed)
    return model_cfg, train_cfg, rwr_cfg


def run_train(args, edges, attrs, out_dir: Path) -> dict:
    started = time.time()
    model_cfg, train_cfg, rwr_cfg = _train_configs(args)
    g = load_graph(edges, attrs)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = train_loop(g, model_cfg, train_cfg, rwr_cfg)
    ckpt = out_dir / "checkpoint.npz"
    result.model.save(ckpt, extra={"rwr_config": asdict(rwr_cfg), "train_config": asdict(train_cfg),
                                   "final_batch_loss": result.final_batch_loss})
    with open(out_dir / "loss_trace.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "clamp_events"])
        for rec in result.trace:
            w.writerow([rec.epoch, repr(rec.mean_loss), rec.clamp_events])
    config = {"model": asdict(model_cfg), "train": asdict(train_cfg), "rwr": asdict(rwr_cfg),
              "preset": getattr(args, "preset", None), "ablation_mode": model_cfg.mode,
              "weight_decay_form": "coupled L2 in gradient",
              "init": "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))"}
    write_manifest(out_dir / "manifest.json", "train", config, args.seed,
                   {"edges": edges, "attributes": attrs}, started)
    return {"checkpoint": ckpt, "config": config, "final_loss": result.trace[-1].mean_loss}


def run_score(args, checkpoint, edges, attrs, labels, out_dir: Path) -> dict:
    started = time.time()
    model, meta = HCADModel.load(checkpoint)
    g = load_graph(edges, attrs, labels)
    if g.d != model.in_dim:
        raise GraphFormatError(f"checkpoint expects {model.in_dim} attributes, graph has {g.d}")
    rwr_cfg = RwrConfig(**meta["rwr_config"])
    cfg = ScoreConfig(rounds=_resolve(args, "rounds"), seed=args.seed)
    report = multi_round_score(model, g, cfg, rwr_cfg)
    ckpt_id = file_digest(checkpoint)[:16]
    paths = emit_report(report, out_dir, checkpoint_id=ckpt_id, margin_detail=args.detail, labels=g.labels)
    config = {"score": asdict(cfg), "rwr": asdict(rwr_cfg), "detail": bool(args.detail)}
    write_manifest(out_dir / "manifest.json", "score", config, args.seed,
                   {"checkpoint": checkpoint, "edges": edges, "attributes": attrs, "labels": labels}, started)
    return {"paths": paths, "auc": report.auc, "config": config}


def run_eval(score_files, label_file) -> dict:
    labels = np.loadtxt(label_file, dtype=np.int64, ndmin=1)
    per_seed = []
    for path in score_files:
        scores = read_scores_csv(path)
        if scores.size != labels.size:
            raise GraphFormatError(f"{path}: {scores.size} scores but {labels.size} labels")
        per_seed.append(roc_auc(scores, labels))
    return {"auc_mean": float(np.mean(per_seed)), "auc_std": float(np.std(per_seed)),
            "per_file": {str(p): a for p, a in zip(score_files, per_seed)}}


# commands ------------------------------------------------------------------------


def cmd_inject(args) -> int:
    out = run_inject(args, Path(args.out_dir))
    print(json.dumps({"anomalies": out["report"]["anomalies"], "out_dir": str(args.out_dir)}))
    return EXIT_OK


def cmd_hyperbolicity(args) -> int:
    started = time.time()
    g = load_graph(args.edges, args.attrs)
    report = gromov_hyperbolicity(g, _resolve(args, "budget"), args.seed)
    print(json.dumps(report.to_dict()))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, report.to_dict())
        write_manifest(out.with_name(out.stem + ".manifest.json"), "hyperbolicity",
                       {"budget": _resolve(args, "budget")}, args.seed, _graph_inputs(args), started)
    return EXIT_OK


def cmd_train(args) -> int:
    out = run_train(args, args.edges, args.attrs, Path(args.out_dir))
    print(json.dumps({"checkpoint": str(out["checkpoint"]), "final_loss": out["final_loss"]}))
    return EXIT_OK


def cmd_score(args) -> int:
    out = run_score(args, args.checkpoint, args.edges, args.attrs, args.labels, Path(args.out_dir))
    print(json.dumps({"auc": out["auc"], "scores": str(out["paths"]["scores"])}))
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.time()
    result = run_eval(args.scores, args.labels)
    print(json.dumps(result, indent=2))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, result)
        inputs = {f"scores_{i}": p for i, p in enumerate(args.scores)} | {"labels": args.labels}
        write_manifest(out.with_name(out.stem + ".manifest.json"), "eval", {"scores": list(args.scores)}, None,
                       inputs, started)
    return EXIT_OK


def _stage(name, fn, *a):
    try:
        return fn(*a)
    except (ValueError, KeyError) as exc:
        raise StageError(name, EXIT_CONFIG, str(exc)) from exc
    except (TrainingError, FloatingPointError, RuntimeError) as exc:
        raise StageError(name, EXIT_RUNTIME, str(exc)) from exc
    except OSError as exc:
        raise StageError(name, EXIT_IO, str(exc)) from exc


def cmd_pipeline(args) -> int:
    started = time.time()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stages = {}
    # validate every config before any computation
    _stage("config", _train_configs, args)
    if args.skip_inject:
        if args.labels is None:
            raise StageError("inject", EXIT_CONFIG, "--skip-inject needs --labels")
        edges, attrs, labels = args.edges, args.attrs, args.labels
    else:
        inj = _stage("inject", run_inject, args, out_dir / "inject")
        stages["inject"] = {"config": inj["config"], "anomalies": inj["report"]["anomalies"]}
        edges, attrs, labels = inj["paths"]["edges"], inj["paths"]["attrs"], inj["paths"]["labels"]
    tr = _stage("train", run_train, args, edges, attrs, out_dir / "train")
    stages["train"] = {"config": tr["config"], "final_loss": tr["final_loss"]}
    sc = _stage("score", run_score, args, tr["checkpoint"], edges, attrs, labels, out_dir / "score")
    stages["score"] = {"config": sc["config"]}
    ev = _stage("eval", run_eval, [sc["paths"]["scores"]], labels)
    stages["eval"] = ev
    _write_json(out_dir / "eval.json", ev)
    write_manifest(out_dir / "manifest.json", "pipeline", {"preset": args.preset, "stages": stages}, args.seed,
                   _graph_inputs(args), started, extra={"auc": ev["auc_mean"]})
    print(json.dumps({"auc": ev["auc_mean"], "out_dir": str(out_dir)}))
    return EXIT_OK


# parser --------------------------------------------------------------------------


def _graph_args(p, labels=False):
    p.add_argument("--edges", required=True, help="edge list: two zero-based node ids per line")
    p.add_argument("--attrs", required=True, help="attribute CSV: one row per node, no header")
    if labels:
        p.add_argument("--labels", default=None, help="label file: one 0/1 per line")


def _inject_args(p):
    p.add_argument("--clique-size", type=int, default=None, help="nodes per clique (default 15)")
    p.add_argument("--cliques", type=int, default=None, help="number of cliques (default 5 or preset)")
    p.add_argument("--attr-count", type=int, default=None, help="attribute anomalies (default clique-size*cliques)")
    p.add_argument("--candidates", type=int, default=None, help="candidates per attribute swap (default 50)")


def _train_args(p):
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--curvature", type=float, default=None, help="K > 0; curvature is -1/K (default 2.5)")
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--subgraph-size", type=int, default=None)
    p.add_argument("--restart", type=float, default=None)
    p.add_argument("--mode", choices=("full", "no_decoder", "euclidean"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcad", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1, help="torch threads; 1 guarantees bit-exact replays")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)

    p = sub.add_parser("inject", help="inject clique and attribute anomalies")
    _graph_args(p)
    _inject_args(p)
    common(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("hyperbolicity", help="Gromov four-point delta of the largest component")
    _graph_args(p)
    p.add_argument("--budget", type=int, default=None, help="quadruples to examine (default 100000)")
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=cmd_hyperbolicity)

    p = sub.add_parser("train", help="train the contrastive discriminator")
    _graph_args(p)
    _train_args(p)
    common(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="multi-round anomaly scores")
    _graph_args(p, labels=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--detail", action="store_true", help="also write negative/positive/margin per node")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="ROC-AUC of one or more score files")
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="inject -> train -> score -> eval")
    _graph_args(p, labels=True)
    _inject_args(p)
    _train_args(p)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--detail", action="store_true")
    p.add_argument("--skip-inject", action="store_true", help="input is already labeled")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    torch.set_num_threads(args.threads)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error in stage {exc}", file=sys.stderr)
        return exc.code
    except (GraphFormatError, InjectionError, SamplingError, MetricError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
