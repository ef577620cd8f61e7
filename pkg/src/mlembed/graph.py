"""CSR graph core: ingestion, validation, serialization, train/test splitting.

Vertex ids are densified to [0, |V|) at load time; the original ids ride along
in `Graph.orig_ids` so downstream output can be reported under input ids.
Adjacency rows are kept sorted ascending, which the rest of the package relies
on for binary-search membership tests and contiguous range slicing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import EdgeListParseError, EmptyGraphError, SplitError

GRAPH_MAGIC = b"GSHG"
GRAPH_VERSION = 1


@dataclass
class Graph:
    """Immutable compressed-sparse-row adjacency structure.

    num_edges counts stored directed arcs; an undirected graph stores each
    edge as two arcs.
    """

    num_vertices: int
    num_edges: int
    xadj: np.ndarray
    adj: np.ndarray
    directed: bool = False
    orig_ids: np.ndarray | None = field(default=None, repr=False)

    def degree(self, v: int) -> int:
        return int(self.xadj[v + 1] - self.xadj[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.adj[self.xadj[v]:self.xadj[v + 1]]

    def has_arc(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.shape[0] and row[i] == v)

    def degrees(self) -> np.ndarray:
        return (self.xadj[1:] - self.xadj[:-1]).astype(np.int64)

    def undirected_pairs(self) -> np.ndarray:
        """All arcs (u, v) with u < v, shape (m, 2). For undirected graphs
        this enumerates each edge exactly once."""
        u = np.repeat(np.arange(self.num_vertices, dtype=np.int64),
                      np.diff(self.xadj))
        v = self.adj.astype(np.int64)
        keep = u < v
        return np.column_stack([u[keep], v[keep]])

    def validate(self) -> None:
        if self.xadj.shape[0] != self.num_vertices + 1:
            raise ValueError("xadj length must be |V|+1")
        if self.xadj[0] != 0 or self.xadj[-1] != self.num_edges:
            raise ValueError("xadj endpoints inconsistent with |E|")
        if np.any(np.diff(self.xadj) < 0):
            raise ValueError("xadj must be nondecreasing")
        if self.num_edges and (self.adj.min() < 0
                               or self.adj.max() >= self.num_vertices):
            raise ValueError("adj entry out of range")
        if self.num_edges > 1:
            starts = self.xadj[1:-1]
            boundary = np.zeros(self.num_edges, dtype=bool)
            boundary[starts[starts < self.num_edges]] = True
            inner = ~boundary[1:]
            if np.any((np.diff(self.adj) <= 0) & inner):
                raise ValueError("adjacency rows must be strictly ascending")


@dataclass
class SplitResult:
    """Train graph plus withheld test edges, both in train-graph ids.

    kept_vertices maps a train-graph id back to the id it had in the graph
    that was split (isolated vertices are dropped and ids re-densified).
    """

    train_graph: Graph
    test_edges: np.ndarray
    kept_vertices: np.ndarray


def _csr_from_arcs(num_vertices: int, src: np.ndarray, dst: np.ndarray,
                   directed: bool,
                   orig_ids: np.ndarray | None = None) -> Graph:
    """Build a Graph from parallel arc arrays; dedups and sorts rows."""
    if src.shape[0]:
        key = src.astype(np.int64) * num_vertices + dst.astype(np.int64)
        key = np.unique(key)
        src = (key // num_vertices)
        dst = (key % num_vertices)
    xadj = np.zeros(num_vertices + 1, dtype=np.int64)
    if src.shape[0]:
        xadj[1:] = np.cumsum(np.bincount(src, minlength=num_vertices))
    g = Graph(num_vertices=num_vertices, num_edges=int(src.shape[0]),
              xadj=xadj, adj=dst.astype(np.int32), directed=directed,
              orig_ids=orig_ids)
    g.validate()
    return g


def from_edges(pairs: Iterable[tuple[int, int]] | np.ndarray,
               num_vertices: int | None = None,
               directed: bool = False) -> Graph:
    """Build a Graph from (u, v) pairs over already-dense ids.

    Drops self-loops and duplicate arcs; symmetrizes unless directed.
    """
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs,
                     dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if num_vertices is None:
        num_vertices = int(arr.max()) + 1 if arr.size else 0
    if num_vertices == 0:
        raise EmptyGraphError("graph has no vertices")
    keep = arr[:, 0] != arr[:, 1]
    arr = arr[keep]
    if not directed and arr.shape[0]:
        arr = np.vstack([arr, arr[:, ::-1]])
    return _csr_from_arcs(num_vertices, arr[:, 0], arr[:, 1], directed)


def load_edge_list(text_stream: IO[str], directed: bool = False) -> Graph:
    """Parse a plain-text edge list: one "u v" per line, '#' comments.

    Ids need not be contiguous; they are densified in ascending numeric
    order and the original ids retained on the result. Blank lines are
    skipped. Duplicate arcs and self-loops are dropped; undirected input is
    stored symmetrized.
    """
    us: list[int] = []
    vs: list[int] = []
    for lineno, raw in enumerate(text_stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListParseError(lineno, f"expected two fields, got {len(parts)}")
        try:
            u = int(parts[0])
            v = int(parts[1])
        except ValueError:
            raise EdgeListParseError(lineno, f"non-integer vertex id in {line!r}") from None
        us.append(u)
        vs.append(v)
    if not us:
        raise EmptyGraphError("edge list contains no edges")
    u_arr = np.asarray(us, dtype=np.int64)
    v_arr = np.asarray(vs, dtype=np.int64)
    orig = np.unique(np.concatenate([u_arr, v_arr]))
    u_arr = np.searchsorted(orig, u_arr)
    v_arr = np.searchsorted(orig, v_arr)
    keep = u_arr != v_arr
    u_arr, v_arr = u_arr[keep], v_arr[keep]
    if not directed:
        u_arr, v_arr = (np.concatenate([u_arr, v_arr]),
                        np.concatenate([v_arr, u_arr]))
    return _csr_from_arcs(int(orig.shape[0]), u_arr, v_arr, directed,
                          orig_ids=orig)


def write_edge_list(g: Graph, text_stream: IO[str]) -> None:
    """Inverse of load_edge_list up to id densification: undirected graphs
    emit each edge once as "u v"."""
    if g.directed:
        u = np.repeat(np.arange(g.num_vertices, dtype=np.int64), np.diff(g.xadj))
        pairs = np.column_stack([u, g.adj.astype(np.int64)])
    else:
        pairs = g.undirected_pairs()
    ids = g.orig_ids if g.orig_ids is not None else np.arange(g.num_vertices)
    for a, b in pairs:
        text_stream.write(f"{ids[a]} {ids[b]}\n")


def degree(g: Graph, v: int) -> int:
    """Neighborhood size of v."""
    return g.degree(v)


def save_graph(g: Graph, path: str) -> None:
    """Write the binary CSR cache (little-endian)."""
    with open(path, "wb") as f:
        f.write(GRAPH_MAGIC)
        f.write(struct.pack("<I", GRAPH_VERSION))
        f.write(struct.pack("<Q", g.num_vertices))
        f.write(struct.pack("<Q", g.num_edges))
        f.write(g.xadj.astype("<u8").tobytes())
        f.write(g.adj.astype("<u4").tobytes())


def load_graph(path: str, directed: bool = False) -> Graph:
    """Read a binary CSR cache written by save_graph."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != GRAPH_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {GRAPH_MAGIC!r}")
        version, = struct.unpack("<I", f.read(4))
        if version != GRAPH_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        nv, = struct.unpack("<Q", f.read(8))
        ne, = struct.unpack("<Q", f.read(8))
        xadj = np.frombuffer(f.read(8 * (nv + 1)), dtype="<u8").astype(np.int64)
        adj = np.frombuffer(f.read(4 * ne), dtype="<u4").astype(np.int32)
    g = Graph(num_vertices=int(nv), num_edges=int(ne), xadj=xadj, adj=adj,
              directed=directed)
    g.validate()
    return g


def split_train_test(g: Graph, test_fraction: float, seed: int) -> SplitResult:
    """Withhold a uniform fraction of undirected edges for evaluation.

    Isolated vertices are removed from the train graph (ids re-densified);
    test edges that lost an endpoint are dropped, so every surviving test
    endpoint is a non-isolated train vertex. Pure function of (g, fraction,
    seed).
    """
    if g.directed:
        raise SplitError("split requires an undirected graph")
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    pairs = g.undirected_pairs()
    m = pairs.shape[0]
    k = int(round(test_fraction * m))
    if k < 1:
        raise SplitError(f"graph too small to withhold any edge "
                         f"({m} edges at fraction {test_fraction})")
    if k >= m:
        raise SplitError("withholding would leave no training edges")
    rng = np.random.default_rng(seed)
    test_sel = np.zeros(m, dtype=bool)
    test_sel[rng.choice(m, size=k, replace=False)] = True
    train_pairs = pairs[~test_sel]
    test_pairs = pairs[test_sel]

    touched = np.zeros(g.num_vertices, dtype=bool)
    touched[train_pairs[:, 0]] = True
    touched[train_pairs[:, 1]] = True
    kept = np.flatnonzero(touched)
    new_id = np.full(g.num_vertices, -1, dtype=np.int64)
    new_id[kept] = np.arange(kept.shape[0])

    remapped = new_id[train_pairs]
    both = np.vstack([remapped, remapped[:, ::-1]])
    train_graph = _csr_from_arcs(int(kept.shape[0]), both[:, 0], both[:, 1],
                                 directed=False,
                                 orig_ids=(g.orig_ids[kept] if g.orig_ids
                                           is not None else kept.copy()))

    t = new_id[test_pairs]
    t = t[(t[:, 0] >= 0) & (t[:, 1] >= 0)]
    return SplitResult(train_graph=train_graph, test_edges=t,
                       kept_vertices=kept)
