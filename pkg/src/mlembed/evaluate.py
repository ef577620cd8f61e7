"""Link-prediction evaluation: Hadamard edge features, balanced negative
sampling, a native logistic-regression classifier, and AUCROC.

The classifier is implemented here rather than imported: it is a commodity
component whose only job is to turn edge features into a ranking, and a
deterministic ~60-line implementation keeps the whole pipeline reproducible
from a seed.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .bigtrain import MemoryBudget
from .errors import SamplingError, SplitError
from .graph import Graph, split_train_test
from .trainer import TrainConfig, sigmoid, train_multilevel


@dataclass
class FeatureSet:
    """Per-pair feature rows with aligned binary labels."""

    rows: np.ndarray
    labels: np.ndarray


@dataclass
class LogRegConfig:
    """Deterministic mini-batch gradient descent hyperparameters.

    single_pass switches to one shuffled per-sample pass, the cheap mode for
    feature sets too large for 100 full epochs.
    """

    epochs: int = 100
    step: float = 0.1
    batch_size: int = 256
    seed: int = 0
    single_pass: bool = False


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    hyper: LogRegConfig


@dataclass
class EvalReport:
    """AUCROC plus enough context to rerun the measurement."""

    aucroc: float
    counts: dict
    times: dict
    config: dict

    def to_json(self) -> str:
        return json.dumps({"aucroc": self.aucroc, "counts": self.counts,
                           "times": self.times, "config": self.config},
                          sort_keys=True)


def hadamard_features(M: np.ndarray, pairs: np.ndarray,
                      labels: np.ndarray) -> FeatureSet:
    """Row i = M[u_i] * M[v_i] elementwise; labels carried alongside."""
    pairs = np.asarray(pairs, dtype=np.int64)
    labels = np.asarray(labels)
    if pairs.shape[0] != labels.shape[0]:
        raise ValueError("pairs and labels must have equal length")
    if pairs.size and (pairs.min() < 0 or pairs.max() >= M.shape[0]):
        raise ValueError("vertex id out of range for the embedding")
    rows = M[pairs[:, 0]] * M[pairs[:, 1]]
    return FeatureSet(rows=rows, labels=labels.astype(np.int8))


def _isin_sorted(sorted_keys: np.ndarray, keys: np.ndarray) -> np.ndarray:
    if sorted_keys.shape[0] == 0:
        return np.zeros(keys.shape[0], dtype=bool)
    idx = np.searchsorted(sorted_keys, keys)
    idx = np.minimum(idx, sorted_keys.shape[0] - 1)
    return sorted_keys[idx] == keys


def sample_negative_edges(g: Graph, count: int, seed: int,
                          exclude_pairs: np.ndarray | None = None
                          ) -> np.ndarray:
    """count uniform ordered non-edges (u != v, no arc u->v), rejection
    sampled, deterministic per seed. exclude_pairs (and their reverses) are
    rejected as well, for sampling test negatives outside train+test."""
    V = g.num_vertices
    non_edges = V * (V - 1) - g.num_edges
    if count > non_edges:
        raise SamplingError(f"asked for {count} non-edges, graph has "
                            f"{non_edges}")
    u_all = np.repeat(np.arange(V, dtype=np.int64), np.diff(g.xadj))
    edge_keys = u_all * V + g.adj.astype(np.int64)  # CSR order: sorted
    if exclude_pairs is not None and len(exclude_pairs):
        ex = np.asarray(exclude_pairs, dtype=np.int64)
        ex_keys = np.sort(np.concatenate([ex[:, 0] * V + ex[:, 1],
                                          ex[:, 1] * V + ex[:, 0]]))
    else:
        ex_keys = np.empty(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    out_u: list[np.ndarray] = []
    out_v: list[np.ndarray] = []
    need = count
    while need > 0:
        m = max(1024, 2 * need)
        u = rng.integers(0, V, size=m)
        v = rng.integers(0, V, size=m)
        key = u * V + v
        ok = (u != v) & ~_isin_sorted(edge_keys, key)
        if ex_keys.shape[0]:
            ok &= ~_isin_sorted(ex_keys, key)
        u, v = u[ok][:need], v[ok][:need]
        out_u.append(u)
        out_v.append(v)
        need -= u.shape[0]
    return np.column_stack([np.concatenate(out_u), np.concatenate(out_v)])


def train_logreg(f: FeatureSet, hyper: LogRegConfig | None = None
                 ) -> LogRegModel:
    """Fit logistic regression by seeded mini-batch gradient descent."""
    h = hyper if hyper is not None else LogRegConfig()
    X = f.rows
    y = f.labels.astype(np.float64)
    if y.shape[0] == 0 or y.min() == y.max():
        raise ValueError("training set must contain both classes")
    n, d = X.shape
    w = np.zeros(d, dtype=np.float64)
    b = 0.0
    rng = np.random.default_rng(h.seed)
    epochs = 1 if h.single_pass else h.epochs
    bs = 1 if h.single_pass else h.batch_size
    for _ in range(epochs):
        perm = rng.permutation(n)
        for i in range(0, n, bs):
            idx = perm[i:i + bs]
            z = X[idx] @ w + b
            resid = sigmoid(z) - y[idx]
            w -= h.step * (X[idx].T @ resid) / idx.shape[0]
            b -= h.step * float(resid.mean())
    if not (np.isfinite(w).all() and np.isfinite(b)):
        raise FloatingPointError("logistic regression diverged")
    return LogRegModel(weights=w, bias=b, hyper=h)


def predict_scores(model: LogRegModel, rows: np.ndarray) -> np.ndarray:
    """Decision scores (logits); monotone in the predicted probability."""
    return rows @ model.weights + model.bias


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve via the rank statistic with midrank ties:
    P(score_pos > score_neg) + 0.5 * P(tie). Exact up to float division."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n = s.shape[0]
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes required")
    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    # doubled midranks stay integers, so the numerator below is exact
    brk = np.flatnonzero(ss[1:] != ss[:-1])
    starts = np.concatenate([[0], brk + 1])
    ends = np.concatenate([brk, [n - 1]])
    group_rank2 = starts + ends + 2
    rank2_sorted = np.repeat(group_rank2, ends - starts + 1)
    rank2 = np.empty(n, dtype=np.int64)
    rank2[order] = rank2_sorted
    r2p = int(rank2[y == 1].sum())
    return (r2p - n_pos * (n_pos + 1)) / (2.0 * n_pos * n_neg)


def run_link_prediction(g: Graph, cfg: TrainConfig, eval_seed: int,
                        budget: MemoryBudget | None = None,
                        threshold: int = 100, no_coarsen: bool = False,
                        test_fraction: float = 0.2,
                        logreg: LogRegConfig | None = None) -> EvalReport:
    """Split, embed the train graph, fit on balanced train features, report
    AUCROC on balanced test features."""
    times: dict[str, float] = {}
    t_all = time.perf_counter()

    t0 = time.perf_counter()
    split = split_train_test(g, test_fraction, eval_seed)
    tg = split.train_graph
    if split.test_edges.shape[0] == 0:
        raise SplitError("no test edges survived endpoint filtering")
    times["split_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    M = train_multilevel(tg, cfg, budget, threshold=threshold,
                         no_coarsen=no_coarsen)
    times["embed_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pos_train = tg.undirected_pairs()
    neg_train = sample_negative_edges(tg, pos_train.shape[0],
                                      seed=eval_seed + 1)
    train_pairs = np.vstack([pos_train, neg_train])
    train_labels = np.concatenate([np.ones(pos_train.shape[0], dtype=np.int8),
                                   np.zeros(neg_train.shape[0],
                                            dtype=np.int8)])
    f_train = hadamard_features(M, train_pairs, train_labels)

    pos_test = split.test_edges
    neg_test = sample_negative_edges(tg, pos_test.shape[0],
                                     seed=eval_seed + 2,
                                     exclude_pairs=pos_test)
    test_pairs = np.vstack([pos_test, neg_test])
    test_labels = np.concatenate([np.ones(pos_test.shape[0], dtype=np.int8),
                                  np.zeros(neg_test.shape[0],
                                           dtype=np.int8)])
    f_test = hadamard_features(M, test_pairs, test_labels)
    times["features_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    hyper = logreg if logreg is not None else LogRegConfig(seed=eval_seed)
    model = train_logreg(f_train, hyper)
    times["fit_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    scores = predict_scores(model, f_test.rows)
    auc = auc_roc(scores, f_test.labels)
    times["score_s"] = time.perf_counter() - t0
    times["total_s"] = time.perf_counter() - t_all

    config = dict(asdict(cfg))
    config.update({"threshold": threshold, "no_coarsen": no_coarsen,
                   "test_fraction": test_fraction, "eval_seed": eval_seed,
                   "resident_bytes": (budget.resident_bytes
                                      if budget is not None else None)})
    counts = {"train_pos": int(pos_train.shape[0]),
              "train_neg": int(neg_train.shape[0]),
              "test_pos": int(pos_test.shape[0]),
              "test_neg": int(neg_test.shape[0]),
              "train_vertices": tg.num_vertices,
              "train_arcs": tg.num_edges}
    return EvalReport(aucroc=float(auc), counts=counts, times=times,
                      config=config)
