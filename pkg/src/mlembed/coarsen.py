"""Multilevel graph coarsening.

Each round sorts vertices by degree, greedily collapses neighborhoods into
clusters, and rebuilds the graph over clusters, repeating until the vertex
count drops under a threshold. The merge rule refuses to put two vertices in
one cluster across an edge whose endpoints both have degree above the graph
density delta = |E|/|V| (|E| counts stored arcs; note delta would halve if
undirected edges were counted instead). That keeps hub vertices in separate
clusters, which preserves enough structure for the trainer.

The parallel collapse treats each map entry as a try-lock: a worker claims a
vertex with a compare-and-swap and simply skips candidates it loses. Results
are valid for any worker count but only the 1-worker run is deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from ._atomics import cas_i32, fetch_add_i64
from .errors import ConfigError
from .graph import Graph

# Work-grab size for dynamic scheduling; small enough to balance, big enough
# to keep the shared counter off the critical path.
GRAB_BATCH = 64

# A level that shrinks less than this is discarded and coarsening stops.
STALL_RATIO = 0.99


@dataclass
class Mapping:
    """Cluster assignment for one coarsening step: map[v] is the id of v's
    cluster in the next level; ids are dense in [0, num_clusters)."""

    map: np.ndarray
    num_clusters: int

    def validate(self) -> None:
        if self.map.shape[0] == 0:
            raise ValueError("empty mapping")
        if self.map.min() < 0 or self.map.max() >= self.num_clusters:
            raise ValueError("cluster id out of range")
        if np.bincount(self.map, minlength=self.num_clusters).min() < 1:
            raise ValueError("mapping not surjective")


@dataclass
class Hierarchy:
    """The coarsening ladder: graphs[0] is the input, graphs[-1] the
    coarsest level; mappings[i] sends level-i vertices to level-i+1
    clusters."""

    graphs: list[Graph]
    mappings: list[Mapping]
    stalled: bool = False
    level_ms: list[float] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.graphs)


@njit(cache=True)
def _counting_order(deg):
    """Vertices by nonincreasing degree, ties by ascending id. Counting sort."""
    n = deg.shape[0]
    maxd = 0
    for v in range(n):
        if deg[v] > maxd:
            maxd = deg[v]
    count = np.zeros(maxd + 1, dtype=np.int64)
    for v in range(n):
        count[deg[v]] += 1
    start = np.zeros(maxd + 1, dtype=np.int64)
    s = 0
    for d in range(maxd, -1, -1):
        start[d] = s
        s += count[d]
    order = np.empty(n, dtype=np.int64)
    for v in range(n):
        d = deg[v]
        order[start[d]] = v
        start[d] += 1
    return order


def degree_order(g: Graph) -> np.ndarray:
    """Permutation of vertex ids in nonincreasing degree order."""
    return _counting_order(g.degrees())


@njit(cache=True)
def _collapse_seq(xadj, adj, deg, order, delta):
    n = order.shape[0]
    cmap = np.full(n, -1, dtype=np.int32)
    c = 0
    for i in range(n):
        v = order[i]
        if cmap[v] != -1:
            continue
        cmap[v] = c
        v_small = deg[v] <= delta
        for e in range(xadj[v], xadj[v + 1]):
            u = adj[e]
            if cmap[u] == -1 and (v_small or deg[u] <= delta):
                cmap[u] = c
        c += 1
    return cmap, c


@njit(cache=True, parallel=True)
def _collapse_par(xadj, adj, deg, order, delta, num_workers):
    n = order.shape[0]
    cmap = np.full(n, -1, dtype=np.int32)
    cursor = np.zeros(1, dtype=np.int64)
    for _w in prange(num_workers):
        while True:
            lo = fetch_add_i64(cursor, 0, GRAB_BATCH)
            if lo >= n:
                break
            hi = min(lo + GRAB_BATCH, n)
            for i in range(lo, hi):
                v = order[i]
                # claim v as a new cluster hub; provisional id = own vertex id
                if cas_i32(cmap, v, -1, np.int32(v)) != -1:
                    continue
                v_small = deg[v] <= delta
                for e in range(xadj[v], xadj[v + 1]):
                    u = adj[e]
                    if cmap[u] == -1 and (v_small or deg[u] <= delta):
                        cas_i32(cmap, u, -1, np.int32(v))  # lost race: skip u
    return cmap


@njit(cache=True)
def _normalize(cmap, order):
    """Densify provisional hub-id clusters; hubs are numbered by their
    position in `order`, matching the sequential discovery order."""
    n = cmap.shape[0]
    dense = np.full(n, -1, dtype=np.int32)
    c = 0
    for i in range(n):
        v = order[i]
        if cmap[v] == v:
            dense[v] = c
            c += 1
    out = np.empty(n, dtype=np.int32)
    for v in range(n):
        out[v] = dense[cmap[v]]
    return out, c


def collapse_map(g: Graph, order: np.ndarray) -> Mapping:
    """Sequential greedy collapse; pure function of (g, order)."""
    delta = g.num_edges / g.num_vertices
    cmap, nc = _collapse_seq(g.xadj, g.adj, g.degrees(), order, delta)
    return Mapping(map=cmap, num_clusters=int(nc))


def collapse_map_parallel(g: Graph, order: np.ndarray,
                          num_workers: int) -> Mapping:
    """Parallel collapse with per-entry try-locks and skip-on-failure.

    num_workers=1 reproduces collapse_map exactly; more workers give a valid
    but run-dependent mapping.
    """
    if num_workers < 1:
        raise ConfigError("num_workers must be >= 1")
    delta = g.num_edges / g.num_vertices
    cmap = _collapse_par(g.xadj, g.adj, g.degrees(), order, delta,
                         num_workers)
    out, nc = _normalize(cmap, order)
    return Mapping(map=out, num_clusters=int(nc))


@njit(cache=True)
def _cluster_buckets(cmap, nc):
    """Counting sort of vertices by cluster id: offsets + member lists."""
    n = cmap.shape[0]
    moff = np.zeros(nc + 1, dtype=np.int64)
    for v in range(n):
        moff[cmap[v] + 1] += 1
    for c in range(nc):
        moff[c + 1] += moff[c]
    members = np.empty(n, dtype=np.int64)
    fill = moff[:-1].copy()
    for v in range(n):
        c = cmap[v]
        members[fill[c]] = v
        fill[c] += 1
    return moff, members


@njit(cache=True, parallel=True)
def _coarse_fill(xadj, adj, cmap, moff, members, roff, scratch, ends, sizes,
                 num_workers):
    """Phase 1: write each cluster's mapped neighbors into its private
    scratch region, sort it, and count distinct targets."""
    nc = moff.shape[0] - 1
    cursor = np.zeros(1, dtype=np.int64)
    for _w in prange(num_workers):
        while True:
            lo = fetch_add_i64(cursor, 0, GRAB_BATCH)
            if lo >= nc:
                break
            hi = min(lo + GRAB_BATCH, nc)
            for c in range(lo, hi):
                p = roff[c]
                for mi in range(moff[c], moff[c + 1]):
                    v = members[mi]
                    for e in range(xadj[v], xadj[v + 1]):
                        t = cmap[adj[e]]
                        if t != c:
                            scratch[p] = t
                            p += 1
                seg = scratch[roff[c]:p]
                seg.sort()
                cnt = 0
                prev = -1
                for i in range(seg.shape[0]):
                    if seg[i] != prev:
                        cnt += 1
                        prev = seg[i]
                ends[c] = p
                sizes[c] = cnt


@njit(cache=True, parallel=True)
def _coarse_emit(roff, ends, scratch, xadj_new, adj_new, num_workers):
    """Phase 2: copy each sorted region's distinct values into the final CSR."""
    nc = roff.shape[0] - 1
    cursor = np.zeros(1, dtype=np.int64)
    for _w in prange(num_workers):
        while True:
            lo = fetch_add_i64(cursor, 0, GRAB_BATCH)
            if lo >= nc:
                break
            hi = min(lo + GRAB_BATCH, nc)
            for c in range(lo, hi):
                q = xadj_new[c]
                prev = -1
                for i in range(roff[c], ends[c]):
                    t = scratch[i]
                    if t != prev:
                        adj_new[q] = t
                        q += 1
                        prev = t


def build_coarse_graph(g: Graph, m: Mapping,
                       num_workers: int = 1) -> Graph:
    """Contract g along m: cluster ids become vertices, parallel arcs are
    deduplicated, self-loops dropped. Deterministic for any worker count."""
    nc = m.num_clusters
    moff, members = _cluster_buckets(m.map, nc)
    deg = g.degrees()
    # per-cluster scratch region sized by its members' total degree
    roff = np.zeros(nc + 1, dtype=np.int64)
    member_deg = deg[members]
    cluster_sizes = np.diff(moff)
    csum = np.concatenate([[0], np.cumsum(member_deg)])
    roff[1:] = csum[np.cumsum(cluster_sizes)]
    scratch = np.empty(g.num_edges, dtype=np.int32)
    ends = np.zeros(nc, dtype=np.int64)
    sizes = np.zeros(nc, dtype=np.int64)
    _coarse_fill(g.xadj, g.adj, m.map, moff, members, roff, scratch, ends,
                 sizes, num_workers)
    xadj_new = np.zeros(nc + 1, dtype=np.int64)
    xadj_new[1:] = np.cumsum(sizes)
    adj_new = np.empty(int(xadj_new[-1]), dtype=np.int32)
    _coarse_emit(roff, ends, scratch, xadj_new, adj_new, num_workers)
    out = Graph(num_vertices=nc, num_edges=int(xadj_new[-1]), xadj=xadj_new,
                adj=adj_new, directed=g.directed)
    out.validate()
    return out


def coarsen_all(g: Graph, threshold: int = 100,
                num_workers: int = 1) -> Hierarchy:
    """Iterate order -> collapse -> contract until the level fits under
    threshold or shrink stalls (a stall is a normal stop, flagged in the
    result)."""
    if threshold < 1:
        raise ConfigError("threshold must be >= 1")
    graphs = [g]
    mappings: list[Mapping] = []
    level_ms: list[float] = []
    stalled = False
    while graphs[-1].num_vertices > threshold:
        cur = graphs[-1]
        t0 = time.perf_counter()
        order = degree_order(cur)
        if num_workers <= 1:
            m = collapse_map(cur, order)
        else:
            m = collapse_map_parallel(cur, order, num_workers)
        if m.num_clusters > STALL_RATIO * cur.num_vertices:
            stalled = True
            break
        nxt = build_coarse_graph(cur, m, num_workers)
        level_ms.append((time.perf_counter() - t0) * 1000.0)
        graphs.append(nxt)
        mappings.append(m)
    return Hierarchy(graphs=graphs, mappings=mappings, stalled=stalled,
                     level_ms=level_ms)
