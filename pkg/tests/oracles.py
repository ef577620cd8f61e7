"""Independent reference implementations the tests check against.

Each function here is written the slow, obvious way on purpose: plain
Python loops and sets, no shared code with the package. When a test
compares package output to one of these, agreement means two separate
derivations landed on the same answer.
"""
from __future__ import annotations

import math

import numpy as np

import mlembed as ml


# -- coarsening ------------------------------------------------------------

def degree_order_oracle(g: ml.Graph) -> list[int]:
    deg = [g.degree(v) for v in range(g.num_vertices)]
    return sorted(range(g.num_vertices), key=lambda v: (-deg[v], v))


def replay_collapse(g: ml.Graph, order) -> list[int]:
    """Sequential cluster collapse, replayed with sets and loops.

    A vertex claims a fresh cluster when visited unmarked, then pulls in
    each unmarked neighbor unless both endpoints sit above the density
    cutoff. Returns the cluster id per vertex, densely relabeled in first
    appearance order along the traversal.
    """
    delta = g.num_edges / g.num_vertices
    deg = [g.degree(v) for v in range(g.num_vertices)]
    cluster = [-1] * g.num_vertices
    next_id = 0
    for v in order:
        if cluster[v] != -1:
            continue
        cluster[v] = next_id
        for u in g.neighbors(v):
            if cluster[u] != -1:
                continue
            if deg[v] <= delta or deg[u] <= delta:
                cluster[u] = next_id
        next_id += 1
    return cluster


def canonical_labels(cmap) -> list[int]:
    """Relabel cluster ids by first appearance so two maps can be compared
    regardless of how each side numbered its clusters."""
    seen: dict[int, int] = {}
    out = []
    for c in cmap:
        c = int(c)
        if c not in seen:
            seen[c] = len(seen)
        out.append(seen[c])
    return out


def brute_coarse_csr(g: ml.Graph, cmap, num_clusters: int):
    """Coarse CSR built from scratch: map both endpoints, drop self arcs,
    dedup, sort each row."""
    rows: list[set[int]] = [set() for _ in range(num_clusters)]
    for v in range(g.num_vertices):
        for u in g.neighbors(v):
            cv, cu = int(cmap[v]), int(cmap[u])
            if cv != cu:
                rows[cv].add(cu)
    xadj = [0]
    adj: list[int] = []
    for r in rows:
        adj.extend(sorted(r))
        xadj.append(len(adj))
    return np.asarray(xadj, dtype=np.int64), np.asarray(adj, dtype=np.int32)


# -- training --------------------------------------------------------------

def logistic_loglik(v: np.ndarray, s: np.ndarray, b: int) -> float:
    z = float(np.dot(v.astype(np.float64), s.astype(np.float64)))
    sig = 1.0 / (1.0 + math.exp(-z))
    return math.log(sig) if b == 1 else math.log(1.0 - sig)


def fd_nce_gradient(v: np.ndarray, s: np.ndarray, b: int,
                    h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences of the positive/negative log likelihood
    with respect to both rows, in double precision."""
    v = v.astype(np.float64)
    s = s.astype(np.float64)
    gv = np.zeros_like(v)
    gs = np.zeros_like(s)
    for t in range(v.shape[0]):
        vp, vm = v.copy(), v.copy()
        vp[t] += h
        vm[t] -= h
        gv[t] = (logistic_loglik(vp, s, b)
                 - logistic_loglik(vm, s, b)) / (2 * h)
    for t in range(s.shape[0]):
        sp, sm = s.copy(), s.copy()
        sp[t] += h
        sm[t] -= h
        gs[t] = (logistic_loglik(v, sp, b)
                 - logistic_loglik(v, sm, b)) / (2 * h)
    return gv, gs


# -- scheduling ------------------------------------------------------------

def unroll_rotation(K: int) -> list[tuple[int, int]]:
    """The pair order spelled out step by step from its recurrence."""
    pairs = [(0, 0)]
    while len(pairs) < K * (K + 1) // 2:
        a, b = pairs[-1]
        pairs.append((a, b + 1) if a > b else (a + 1, 0))
    return pairs


def plan_k_oracle(num_rows: int, dim: int, resident_bytes: int,
                  parts: int, pools: int, batch: int) -> int:
    per_row = parts * dim * 4 + pools * 2 * batch * 4
    cap = resident_bytes // per_row
    if cap < 1:
        raise ValueError("budget below one row")
    return max(parts, -(-num_rows // cap))


# -- evaluation ------------------------------------------------------------

def brute_auc(scores, labels) -> float:
    """Pairwise AUCROC: wins plus half ties over all pos/neg pairs.

    Materializes the full pos-by-neg comparison matrix, so it shares no
    machinery with a rank-based computation."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = int((pos[:, None] > neg[None, :]).sum())
    ties = int((pos[:, None] == neg[None, :]).sum())
    return (2 * wins + ties) / (2 * pos.shape[0] * neg.shape[0])
