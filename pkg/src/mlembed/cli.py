"""Command-line driver: coarsening stats, embedding runs, and evaluation.

Configuration precedence, lowest to highest: built-in defaults, --config
file (flat key=value lines), --preset bundle, explicit flags. --dump-config
prints the fully resolved key=value form and exits, and feeding that file
back through --config reproduces the run exactly.

Exit codes: 0 ok, 2 usage, 3 input problem, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .bigtrain import MemoryBudget
from .coarsen import coarsen_all
from .errors import EdgeListParseError, EmptyGraphError, MlembedError
from .evaluate import run_link_prediction
from .graph import GRAPH_MAGIC, Graph, load_edge_list, load_graph
from .trainer import (EPOCH_UNITS, TrainConfig, save_embedding,
                      train_multilevel, write_embedding_tsv)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

# Graphs at or above this many vertices use a preset's large-graph epoch
# budget instead of the medium one.
LARGE_VERTEX_CUTOFF = 10_000_000


@dataclass(frozen=True)
class Preset:
    """A tuned configuration bundle."""

    name: str
    smoothing: float | None  # None disables coarsening entirely
    lr: float
    epochs_medium: int
    epochs_large: int


PRESETS = {
    "fast": Preset("fast", 0.1, 0.050, 600, 100),
    "normal": Preset("normal", 0.3, 0.035, 1000, 200),
    "slow": Preset("slow", 0.5, 0.025, 1400, 300),
    "nocoarse": Preset("nocoarse", None, 0.045, 1000, 200),
}

# key -> (type parser, default); the resolved config is exactly this set
CONFIG_KEYS = {
    "dim": (int, 128),
    "epochs_medium": (int, 1000),
    "epochs_large": (int, 200),
    "smoothing": (float, 0.3),
    "lr": (float, 0.035),
    "neg": (int, 3),
    "threshold": (int, 100),
    "workers": (int, 1),
    "seed": (int, 1),
    "epoch_unit": (str, "vertex-pass"),
    "resident_mb": (str, "none"),
    "parts_resident": (int, 3),
    "pools_resident": (int, 4),
    "pool_batch": (int, 5),
    "repeats": (int, 1),
    "no_coarsen": (str, "false"),
    "directed": (str, "false"),
    "test_fraction": (float, 0.2),
}


def _parse_config_file(path: str) -> dict:
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise EdgeListParseError(lineno, f"expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in CONFIG_KEYS:
                raise EdgeListParseError(lineno, f"unknown config key {key!r}")
            values[key] = val
    return values


def _coerce(key: str, val: str):
    typ, _ = CONFIG_KEYS[key]
    if key in ("no_coarsen", "directed"):
        if val.lower() not in ("true", "false"):
            raise ValueError(f"{key} must be true or false, got {val!r}")
        return val.lower()
    return typ(val)


def _resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < preset < explicit flags."""
    cfg = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    if getattr(args, "config", None):
        for k, v in _parse_config_file(args.config).items():
            cfg[k] = _coerce(k, v)
    preset_name = getattr(args, "preset", None)
    if preset_name:
        preset = PRESETS[preset_name]
        cfg["lr"] = preset.lr
        cfg["epochs_medium"] = preset.epochs_medium
        cfg["epochs_large"] = preset.epochs_large
        if preset.smoothing is None:
            cfg["no_coarsen"] = "true"
        else:
            cfg["smoothing"] = preset.smoothing
            cfg["no_coarsen"] = "false"
    flag_map = {
        "dim": "dim", "smoothing": "smoothing", "lr": "lr", "neg": "neg",
        "threshold": "threshold", "workers": "workers", "seed": "seed",
        "epoch_unit": "epoch_unit", "parts_resident": "parts_resident",
        "pools_resident": "pools_resident", "pool_batch": "pool_batch",
        "repeats": "repeats", "test_fraction": "test_fraction",
    }
    for key, attr in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "epochs", None) is not None:
        cfg["epochs_medium"] = args.epochs
        cfg["epochs_large"] = args.epochs
    if getattr(args, "resident_mb", None) is not None:
        cfg["resident_mb"] = str(args.resident_mb)
    if getattr(args, "no_coarsen", False):
        cfg["no_coarsen"] = "true"
    if getattr(args, "directed", False):
        cfg["directed"] = "true"
    return cfg


def _dump_config(cfg: dict) -> str:
    return "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg)) + "\n"


def _load_any_graph(path: str, directed: bool) -> Graph:
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == GRAPH_MAGIC:
        return load_graph(path, directed=directed)
    with open(path, "r") as f:
        return load_edge_list(f, directed=directed)


def _train_config(cfg: dict, num_vertices: int) -> TrainConfig:
    epochs = (cfg["epochs_large"] if num_vertices >= LARGE_VERTEX_CUTOFF
              else cfg["epochs_medium"])
    return TrainConfig(dim=cfg["dim"], total_epochs=epochs,
                       smoothing_ratio=cfg["smoothing"], learning_rate=cfg["lr"],
                       negative_samples=cfg["neg"], seed=cfg["seed"],
                       num_workers=cfg["workers"],
                       epoch_unit=cfg["epoch_unit"])


def _budget(cfg: dict) -> MemoryBudget | None:
    if cfg["resident_mb"] == "none":
        return None
    mib = float(cfg["resident_mb"])
    return MemoryBudget(resident_bytes=int(mib * (1 << 20)),
                        parts_resident=cfg["parts_resident"],
                        pools_resident=cfg["pools_resident"],
                        batch_size=cfg["pool_batch"])


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, help="embedding dimension")
    p.add_argument("--epochs", type=int, help="total epoch budget (overrides preset)")
    p.add_argument("--smoothing", type=float, help="uniform share of the epoch budget, 0..1")
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--neg", type=int, help="negative samples per positive")
    p.add_argument("--threshold", type=int, help="stop coarsening at this many vertices")
    p.add_argument("--workers", type=int, help="logical worker count")
    p.add_argument("--seed", type=int, help="training seed")
    p.add_argument("--epoch-unit", dest="epoch_unit", choices=EPOCH_UNITS,
                   help="what one epoch means")
    p.add_argument("--resident-mb", dest="resident_mb", type=float,
                   help="resident budget in MiB; enables partitioned training")
    p.add_argument("--parts-resident", dest="parts_resident", type=int,
                   help="resident sub-matrix slots (P)")
    p.add_argument("--pools-resident", dest="pools_resident", type=int,
                   help="staged sample pools (S)")
    p.add_argument("--pool-batch", dest="pool_batch", type=int,
                   help="positive samples per vertex per pool (B)")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="tuned configuration bundle")
    p.add_argument("--repeats", type=int, help="evaluation repetitions")
    p.add_argument("--no-coarsen", dest="no_coarsen", action="store_true",
                   default=None, help="train the input graph only")
    p.add_argument("--directed", action="store_true", default=None,
                   help="treat the edge list as directed")
    p.add_argument("--test-fraction", dest="test_fraction", type=float,
                   help="edge fraction withheld for evaluation")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--dump-config", dest="dump_config", action="store_true",
                   help="print the resolved configuration and exit")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlembed",
                                 description="multilevel graph embedding toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coarsen-stats", help="coarsen and print per-level stats")
    p.add_argument("input", help="edge list or binary graph cache")
    _add_common_flags(p)

    p = sub.add_parser("embed", help="train an embedding")
    p.add_argument("input", help="edge list or binary graph cache")
    p.add_argument("--output", required=True, help="binary embedding output path")
    p.add_argument("--tsv", help="also write a text embedding here")
    _add_common_flags(p)

    p = sub.add_parser("evaluate", help="link-prediction evaluation")
    p.add_argument("input", help="edge list or binary graph cache")
    _add_common_flags(p)
    return ap


def _cmd_coarsen_stats(args, cfg: dict) -> int:
    g = _load_any_graph(args.input, cfg["directed"] == "true")
    hier = coarsen_all(g, threshold=cfg["threshold"],
                       num_workers=cfg["workers"])
    for i, level in enumerate(hier.graphs):
        elapsed = hier.level_ms[i - 1] if i > 0 else 0.0
        print(json.dumps({"level": i, "num_vertices": level.num_vertices,
                          "num_edges": level.num_edges,
                          "elapsed_ms": round(elapsed, 3)}))
    print(json.dumps({"depth": hier.depth, "stalled": hier.stalled}))
    return EXIT_OK


def _cmd_embed(args, cfg: dict) -> int:
    g = _load_any_graph(args.input, cfg["directed"] == "true")
    tc = _train_config(cfg, g.num_vertices)
    budget = _budget(cfg)
    t0 = time.perf_counter()
    M = train_multilevel(g, tc, budget, threshold=cfg["threshold"],
                         no_coarsen=cfg["no_coarsen"] == "true")
    elapsed = time.perf_counter() - t0
    save_embedding(M, args.output)
    if args.tsv:
        with open(args.tsv, "w") as f:
            write_embedding_tsv(M, f, orig_ids=g.orig_ids)
    print(json.dumps({"vertices": g.num_vertices, "arcs": g.num_edges,
                      "dim": tc.dim, "epochs": tc.total_epochs,
                      "train_s": round(elapsed, 3), "output": args.output},
                     sort_keys=True))
    return EXIT_OK


def _cmd_evaluate(args, cfg: dict) -> int:
    g = _load_any_graph(args.input, cfg["directed"] == "true")
    tc = _train_config(cfg, g.num_vertices)
    budget = _budget(cfg)
    aucs = []
    last = None
    for rep in range(cfg["repeats"]):
        report = run_link_prediction(
            g, tc, eval_seed=cfg["seed"] + rep, budget=budget,
            threshold=cfg["threshold"],
            no_coarsen=cfg["no_coarsen"] == "true",
            test_fraction=cfg["test_fraction"])
        aucs.append(report.aucroc)
        last = report
    arr = np.asarray(aucs)
    out = {"aucroc_mean": float(arr.mean()),
           "aucroc_sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
           "aucroc_runs": [float(a) for a in aucs],
           "repeats": cfg["repeats"],
           "counts": last.counts, "times": last.times,
           "config": last.config}
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return int(ex.code or 0)
    try:
        cfg = _resolve_config(args)
        if args.dump_config:
            sys.stdout.write(_dump_config(cfg))
            return EXIT_OK
        if args.command == "coarsen-stats":
            return _cmd_coarsen_stats(args, cfg)
        if args.command == "embed":
            return _cmd_embed(args, cfg)
        if args.command == "evaluate":
            return _cmd_evaluate(args, cfg)
        parser.error(f"unknown command {args.command!r}")
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError,
            EdgeListParseError, EmptyGraphError, UnicodeDecodeError) as ex:
        print(f"mlembed: input error: {ex}", file=sys.stderr)
        return EXIT_INPUT
    except (MlembedError, ValueError, FloatingPointError, RuntimeError) as ex:
        print(f"mlembed: {ex}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
