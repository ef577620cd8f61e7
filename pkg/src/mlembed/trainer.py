"""Embedding training: logistic positive/negative updates, per-level epoch
budgeting, and the multilevel driver.

An embedding matrix is a plain float32 ndarray, one row per vertex. Training
walks the coarsening ladder from the coarsest graph to the input graph,
projecting each level's rows onto the next finer level, so early updates act
on whole clusters and later ones refine individual vertices.

Concurrency contract: within one pass a vertex is the source of at most one
update at a time (workers own disjoint sources), but rows touched as samples
race benignly; that is accepted and single-worker runs are bit-reproducible.
All sample draws come from counter-based streams keyed by (seed, level, pass,
vertex), so the draws themselves do not depend on scheduling.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import IO, NamedTuple

import numpy as np
from numba import njit, prange

from ._atomics import fetch_add_i64
from ._rng import draw_below, stream_key
from .coarsen import GRAB_BATCH, Hierarchy, Mapping, coarsen_all
from .errors import ConfigError, PlanError
from .graph import Graph

EMBED_MAGIC = b"GSHE"
EMBED_VERSION = 1

SIGMOID_CLAMP = 10.0
LR_FLOOR = 1e-4

EPOCH_UNITS = ("vertex-pass", "edge-scaled")


@dataclass
class TrainConfig:
    """Knobs for one embedding run; see cli.PRESETS for tuned bundles."""

    dim: int = 128
    total_epochs: int = 100
    smoothing_ratio: float = 0.3
    learning_rate: float = 0.035
    negative_samples: int = 3
    seed: int = 1
    num_workers: int = 1
    epoch_unit: str = "vertex-pass"
    # Apply the sample-row update with the already-updated source row instead
    # of its pre-update copy (chained half-updates). Off by default: the
    # pre-update copy makes the step an exact gradient step.
    reuse_updated_source: bool = False

    def validate(self) -> None:
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        if self.total_epochs < 0:
            raise ConfigError("total_epochs must be >= 0")
        if not 0.0 <= self.smoothing_ratio <= 1.0:
            raise ConfigError("smoothing_ratio must be in [0, 1]")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.negative_samples < 0:
            raise ConfigError("negative_samples must be >= 0")
        if self.num_workers < 1:
            raise ConfigError("num_workers must be >= 1")
        if self.epoch_unit not in EPOCH_UNITS:
            raise ConfigError(f"epoch_unit must be one of {EPOCH_UNITS}")


@dataclass
class EpochPlan:
    """Per-level epoch counts, index 0 = finest level."""

    per_level: np.ndarray


class TrainStats(NamedTuple):
    passes: int
    updates: int


def init_embedding(num_rows: int, dim: int, seed: int) -> np.ndarray:
    """I.i.d. uniform rows in [-0.5/dim, +0.5/dim], float32, seeded."""
    if num_rows < 1 or dim < 1:
        raise ConfigError("embedding dimensions must be positive")
    rng = np.random.default_rng(seed)
    half = 0.5 / dim
    return rng.uniform(-half, half, size=(num_rows, dim)).astype(np.float32)


def sigmoid(x):
    """Logistic function with inputs clamped to +-10 to avoid overflow."""
    z = np.clip(x, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


@njit(cache=True, inline="always")
def _nce_update(Msrc, v, Mtgt, s, b, lr, reuse):
    """One logistic update between row v of Msrc and row s of Mtgt.

    score = (b - sigmoid(Msrc[v] . Mtgt[s])) * lr; the source row moves by
    score * target row, the target row by score * the source row's
    pre-update copy (or its updated value when reuse is set). Safe when both
    arguments alias the same row.
    """
    acc = 0.0
    for t in range(Msrc.shape[1]):
        acc += np.float64(Msrc[v, t]) * np.float64(Mtgt[s, t])
    if acc > SIGMOID_CLAMP:
        acc = SIGMOID_CLAMP
    elif acc < -SIGMOID_CLAMP:
        acc = -SIGMOID_CLAMP
    sig = 1.0 / (1.0 + math.exp(-acc))
    score = np.float32((b - sig) * lr)
    if reuse:
        for t in range(Msrc.shape[1]):
            Msrc[v, t] = Msrc[v, t] + Mtgt[s, t] * score
        for t in range(Msrc.shape[1]):
            Mtgt[s, t] = Mtgt[s, t] + Msrc[v, t] * score
    else:
        for t in range(Msrc.shape[1]):
            v_old = Msrc[v, t]
            Msrc[v, t] = v_old + Mtgt[s, t] * score
            Mtgt[s, t] = Mtgt[s, t] + v_old * score


@njit(cache=True)
def _nce_update_jit(M, v, s, b, lr, reuse):
    _nce_update(M, v, M, s, b, lr, reuse)


def update_embedding(M: np.ndarray, v: int, s: int, b: int, lr: float,
                     reuse_updated_source: bool = False) -> None:
    """Apply one in-place positive (b=1) or negative (b=0) update."""
    if M.dtype != np.float32:
        raise TypeError("embedding matrix must be float32")
    _nce_update_jit(M, v, s, b, lr, reuse_updated_source)


def epoch_shares(e: int, p: float, depth: int) -> tuple[float, np.ndarray]:
    """Pre-rounding epoch split: uniform share per level and the geometric
    shares g_i with g_{i} = g_{i+1}/2 toward finer levels."""
    uniform = p * e / depth
    weights = np.power(2.0, np.arange(depth))
    geo = (1.0 - p) * e * weights / (2.0 ** depth - 1.0)
    return uniform, geo


def epoch_plan(e: int, p: float, depth: int) -> EpochPlan:
    """Split e epochs over depth levels: a p fraction uniformly, the rest
    doubling toward coarser levels. Sum is exactly e after rounding repair."""
    if depth < 1:
        raise PlanError("depth must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ConfigError("smoothing ratio must be in [0, 1]")
    if e < depth:
        raise PlanError(f"epoch budget {e} smaller than depth {depth}")
    uniform, geo = epoch_shares(e, p, depth)
    plan = np.floor(uniform + geo + 0.5).astype(np.int64)
    plan = np.maximum(plan, 1)
    residue = int(e - plan.sum())
    if residue > 0:
        plan[-1] += residue
    while residue < 0:
        # take from the largest entry, preferring coarser levels on ties
        i = depth - 1 - int(np.argmax(plan[::-1]))
        if plan[i] <= 1:
            raise PlanError("cannot repair rounding under the >=1 floor")
        plan[i] -= 1
        residue += 1
    return EpochPlan(per_level=plan)


def lr_at(lr0: float, j: int, e_i: int) -> float:
    """Linear decay over the level's epochs with a small floor."""
    return lr0 * max(1.0 - j / e_i, LR_FLOOR)


@njit(cache=True, parallel=True)
def _train_pass(xadj, adj, M, lr, n_s, seed, stream, pass_idx, num_workers,
                reuse):
    """One pass over all non-isolated sources: 1 positive + n_s negatives
    each. Dynamic batching via a shared cursor."""
    n = xadj.shape[0] - 1
    cursor = np.zeros(1, dtype=np.int64)
    for _w in prange(num_workers):
        while True:
            lo = fetch_add_i64(cursor, 0, GRAB_BATCH)
            if lo >= n:
                break
            hi = min(lo + GRAB_BATCH, n)
            for v in range(lo, hi):
                deg = xadj[v + 1] - xadj[v]
                if deg == 0:
                    continue
                key = stream_key(np.uint64(seed), np.uint64(stream),
                                 np.uint64(pass_idx), np.uint64(v))
                pos = adj[xadj[v] + draw_below(key, np.uint64(0), deg)]
                _nce_update(M, v, M, np.int64(pos), 1.0, lr, reuse)
                for q in range(n_s):
                    neg = draw_below(key, np.uint64(1 + q), n)
                    _nce_update(M, v, M, neg, 0.0, lr, reuse)


def train_level(g: Graph, M: np.ndarray, cfg: TrainConfig, e_i: int,
                lr0: float | None = None, rng_stream: int = 0) -> TrainStats:
    """Train M in place on g for e_i epochs (decaying lr per epoch).

    With epoch_unit="edge-scaled" every nominal epoch runs
    ceil(|E|/|V|) vertex passes, so one epoch draws about |E| positive
    samples instead of |V|.
    """
    cfg.validate()
    if M.shape[0] != g.num_vertices:
        raise ValueError("matrix rows must match vertex count")
    if lr0 is None:
        lr0 = cfg.learning_rate
    if cfg.epoch_unit == "edge-scaled" and g.num_edges > 0:
        passes_per_epoch = -(-g.num_edges // g.num_vertices)
    else:
        passes_per_epoch = 1
    non_isolated = int((g.degrees() > 0).sum())
    total_passes = 0
    for j in range(e_i):
        lr = np.float32(lr_at(lr0, j, e_i))
        for r in range(passes_per_epoch):
            _train_pass(g.xadj, g.adj, M, lr, cfg.negative_samples,
                        cfg.seed, rng_stream, j * passes_per_epoch + r,
                        cfg.num_workers, cfg.reuse_updated_source)
            total_passes += 1
        if not np.isfinite(M).all():
            raise FloatingPointError(f"non-finite embedding after epoch {j}")
    return TrainStats(passes=total_passes,
                      updates=total_passes * non_isolated
                      * (1 + cfg.negative_samples))


def expand_embedding(M_next: np.ndarray, m: Mapping) -> np.ndarray:
    """Project a coarse matrix up: row v of the result is the row of v's
    cluster."""
    if M_next.shape[0] != m.num_clusters:
        raise ValueError(f"matrix has {M_next.shape[0]} rows, mapping expects "
                         f"{m.num_clusters}")
    return M_next[m.map]


def train_multilevel(g0: Graph, cfg: TrainConfig, budget=None,
                     threshold: int = 100, no_coarsen: bool = False,
                     hierarchy: Hierarchy | None = None) -> np.ndarray:
    """Coarsen, then train from the coarsest level down to g0.

    Levels whose matrix plus graph exceed budget.resident_bytes are trained
    by the partitioned out-of-core path; with budget=None everything runs in
    memory. total_epochs=0 skips training and returns the random projection
    (chance baseline).
    """
    cfg.validate()
    if hierarchy is None:
        if no_coarsen:
            hierarchy = Hierarchy(graphs=[g0], mappings=[])
        else:
            hierarchy = coarsen_all(g0, threshold=threshold,
                                    num_workers=cfg.num_workers)
    depth = hierarchy.depth
    if cfg.total_epochs == 0:
        plan = np.zeros(depth, dtype=np.int64)
    else:
        plan = epoch_plan(cfg.total_epochs, cfg.smoothing_ratio,
                          depth).per_level
    M = init_embedding(hierarchy.graphs[-1].num_vertices, cfg.dim, cfg.seed)
    for i in range(depth - 1, -1, -1):
        g_i = hierarchy.graphs[i]
        e_i = int(plan[i])
        if e_i > 0:
            need = (M.nbytes + g_i.xadj.nbytes + g_i.adj.nbytes)
            if budget is None or need <= budget.resident_bytes:
                train_level(g_i, M, cfg, e_i, rng_stream=i)
            else:
                from .bigtrain import train_large
                train_large(g_i, M, cfg, e_i, budget, rng_stream=i)
        if i > 0:
            M = expand_embedding(M, hierarchy.mappings[i - 1])
    return M


def save_embedding(M: np.ndarray, path: str) -> None:
    """Binary matrix dump (little-endian header + float32 rows)."""
    with open(path, "wb") as f:
        f.write(EMBED_MAGIC)
        f.write(struct.pack("<I", EMBED_VERSION))
        f.write(struct.pack("<Q", M.shape[0]))
        f.write(struct.pack("<I", M.shape[1]))
        f.write(np.ascontiguousarray(M, dtype="<f4").tobytes())


def load_embedding(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != EMBED_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {EMBED_MAGIC!r}")
        version, = struct.unpack("<I", f.read(4))
        if version != EMBED_VERSION:
            raise ValueError(f"unsupported embedding version {version}")
        rows, = struct.unpack("<Q", f.read(8))
        dim, = struct.unpack("<I", f.read(4))
        data = np.frombuffer(f.read(4 * rows * dim), dtype="<f4")
    return data.reshape(rows, dim).astype(np.float32)


def write_embedding_tsv(M: np.ndarray, stream: IO[str],
                        orig_ids: np.ndarray | None = None) -> None:
    """Text form: one "orig_id\\tv0 v1 ..." line per vertex."""
    ids = orig_ids if orig_ids is not None else np.arange(M.shape[0])
    for i in range(M.shape[0]):
        vals = " ".join(repr(float(x)) for x in M[i])
        stream.write(f"{ids[i]}\t{vals}\n")
