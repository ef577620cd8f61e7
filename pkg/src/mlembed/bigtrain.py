"""Partitioned training under a resident-memory budget.

When a level's embedding matrix does not fit the configured resident byte
budget, its rows are split into K contiguous parts and training walks all
part pairs in an inside-out rotation, keeping at most P parts and S sample
pools resident at a time. Non-resident parts live in the backing matrix and
are moved in and out with explicit flush/load copies, so the scheduler is
exercised honestly even when physical memory would have sufficed.

Three roles cooperate (bounded queues, ownership handoff):
  dispatcher    owns the residency state, trains pairs, prefetches parts;
  sample-maker  builds positive-sample pools ahead of consumption;
  pool-stager   moves finished pools into the staged set, at most S of them.
Only the dispatcher thread launches parallel kernels; the sample-maker uses a
sequential nogil kernel, so compiled regions never nest.
"""

from __future__ import annotations

import threading
import queue
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from ._atomics import fetch_add_i64
from ._rng import draw_below, mix64, stream_key, U64_GOLDEN
from .coarsen import GRAB_BATCH
from .errors import ConfigError, PlanError
from .graph import Graph
from .trainer import TrainConfig, _nce_update, lr_at

POOL_WAIT_TIMEOUT_S = 120.0


@dataclass
class MemoryBudget:
    """Resident budget: bytes plus the part/pool/batch shape knobs."""

    resident_bytes: int
    parts_resident: int = 3
    pools_resident: int = 4
    batch_size: int = 5

    def __post_init__(self) -> None:
        if self.resident_bytes < 1:
            raise ConfigError("resident_bytes must be positive")
        if self.parts_resident < 2:
            raise ConfigError("parts_resident must be >= 2")
        if self.pools_resident < 1:
            raise ConfigError("pools_resident must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class PartitionPlan:
    """K contiguous, near-equal vertex ranges covering [0, num_rows)."""

    K: int
    boundaries: np.ndarray

    def part_range(self, r: int) -> tuple[int, int]:
        return int(self.boundaries[r]), int(self.boundaries[r + 1])

    @property
    def num_rows(self) -> int:
        return int(self.boundaries[-1])

    @property
    def max_rows(self) -> int:
        return int(np.diff(self.boundaries).max())


@dataclass
class SamplePool:
    """Positive targets for one part pair: row i of targets_j holds up to B
    neighbor ids (global, inside V^k) for source vertex lo_j + i; -1 marks an
    absent neighbor. targets_k is the mirror side, None for diagonal pairs."""

    pair: tuple[int, int]
    lo_j: int
    hi_j: int
    lo_k: int
    hi_k: int
    targets_j: np.ndarray
    targets_k: np.ndarray | None

    @property
    def nbytes(self) -> int:
        n = self.targets_j.nbytes
        if self.targets_k is not None:
            n += self.targets_k.nbytes
        return n


@dataclass
class ResidencyState:
    """Which parts currently occupy the P resident slots."""

    plan: PartitionPlan
    backing: np.ndarray
    bins: np.ndarray
    slots: np.ndarray
    in_flight: tuple[int, int] | None = None
    switches: int = 0

    @classmethod
    def create(cls, plan: PartitionPlan, backing: np.ndarray,
               parts_resident: int) -> "ResidencyState":
        slots = np.zeros((parts_resident, plan.max_rows, backing.shape[1]),
                         dtype=np.float32)
        bins = np.full(parts_resident, -1, dtype=np.int64)
        return cls(plan=plan, backing=backing, bins=bins, slots=slots)

    def bin_of(self, part: int) -> int:
        hits = np.flatnonzero(self.bins == part)
        return int(hits[0]) if hits.size else -1

    def resident(self, part: int) -> bool:
        return self.bin_of(part) >= 0

    def view(self, part: int) -> np.ndarray:
        b = self.bin_of(part)
        if b < 0:
            raise RuntimeError(f"part {part} is not resident")
        lo, hi = self.plan.part_range(part)
        return self.slots[b][: hi - lo]


def plan_partitions(num_rows: int, dim: int,
                    budget: MemoryBudget) -> PartitionPlan:
    """Smallest K >= P such that P resident parts plus S staged pools fit in
    resident_bytes; parts are contiguous with sizes differing by at most 1."""
    if num_rows < 1 or dim < 1:
        raise PlanError("num_rows and dim must be positive")
    P, S, B = budget.parts_resident, budget.pools_resident, budget.batch_size
    per_unit = P * dim * 4 + S * 2 * B * 4  # bytes per resident part-row
    cap = budget.resident_bytes // per_unit
    if cap < 1:
        raise PlanError(f"budget {budget.resident_bytes} B cannot hold even "
                        f"single-row parts ({per_unit} B per row)")
    K = max(P, -(-num_rows // cap))
    while (-(-num_rows // K)) * per_unit > budget.resident_bytes:
        K += 1
    boundaries = (np.arange(K + 1, dtype=np.int64) * num_rows) // K
    return PartitionPlan(K=int(K), boundaries=boundaries)


def rotation_pairs(K: int) -> list[tuple[int, int]]:
    """Inside-out pair order: (0,0); after (a,b) with a>b comes (a,b+1);
    after (a,a) comes (a+1,0). Every unordered pair appears exactly once."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    pairs = [(0, 0)]
    while len(pairs) < K * (K + 1) // 2:
        a, b = pairs[-1]
        pairs.append((a, b + 1) if a > b else (a + 1, 0))
    return pairs


@njit(cache=True, nogil=True)
def _fill_pool_side(xadj, adj, lo_s, hi_s, lo_t, hi_t, B, seed, side, out):
    """Draw B targets per source uniformly (with replacement) from the
    source's neighbors inside [lo_t, hi_t); -1 when there are none.
    Adjacency rows are sorted, so the intersection is one binary search."""
    for v in range(lo_s, hi_s):
        lo_e = xadj[v]
        hi_e = xadj[v + 1]
        a = lo_e
        b = hi_e
        while a < b:
            mid = (a + b) // 2
            if adj[mid] < lo_t:
                a = mid + 1
            else:
                b = mid
        first = a
        b = hi_e
        while a < b:
            mid = (a + b) // 2
            if adj[mid] < hi_t:
                a = mid + 1
            else:
                b = mid
        cnt = a - first
        key = stream_key(np.uint64(seed), np.uint64(side), np.uint64(0),
                         np.uint64(v))
        for t in range(B):
            if cnt > 0:
                out[v - lo_s, t] = adj[first + draw_below(key, np.uint64(t),
                                                          cnt)]
            else:
                out[v - lo_s, t] = -1


def build_sample_pool(g: Graph, plan: PartitionPlan, pair: tuple[int, int],
                      B: int, seed: int) -> SamplePool:
    """Positive-sample pool for one part pair; deterministic per seed."""
    j, k = pair
    lo_j, hi_j = plan.part_range(j)
    lo_k, hi_k = plan.part_range(k)
    tj = np.empty((hi_j - lo_j, B), dtype=np.int32)
    _fill_pool_side(g.xadj, g.adj, lo_j, hi_j, lo_k, hi_k, B, seed, 0, tj)
    tk = None
    if j != k:
        tk = np.empty((hi_k - lo_k, B), dtype=np.int32)
        _fill_pool_side(g.xadj, g.adj, lo_k, hi_k, lo_j, hi_j, B, seed, 1, tk)
    return SamplePool(pair=(j, k), lo_j=lo_j, hi_j=hi_j, lo_k=lo_k,
                      hi_k=hi_k, targets_j=tj, targets_k=tk)


@njit(cache=True, parallel=True)
def _train_pool_side(Msrc, Mtgt, targets, lo_t, n_t, n_s, lr, seed, side,
                     num_workers, reuse):
    n_src = targets.shape[0]
    B = targets.shape[1]
    cursor = np.zeros(1, dtype=np.int64)
    for _w in prange(num_workers):
        while True:
            lo = fetch_add_i64(cursor, 0, GRAB_BATCH)
            if lo >= n_src:
                break
            hi = min(lo + GRAB_BATCH, n_src)
            for i in range(lo, hi):
                key = stream_key(np.uint64(seed), np.uint64(side),
                                 np.uint64(1), np.uint64(i))
                for t in range(B):
                    tgt = targets[i, t]
                    if tgt < 0:
                        continue
                    _nce_update(Msrc, i, Mtgt, np.int64(tgt) - lo_t, 1.0, lr,
                                reuse)
                    for q in range(n_s):
                        neg = draw_below(key, np.uint64(t * n_s + q), n_t)
                        _nce_update(Msrc, i, Mtgt, neg, 0.0, lr, reuse)


def train_pair(Mj: np.ndarray, Mk: np.ndarray, pool: SamplePool, n_s: int,
               lr: float, seed: int, num_workers: int = 1,
               reuse_updated_source: bool = False) -> int:
    """Train one co-resident part pair from its pool, in place.

    Each source with a present slot gets one positive update per present slot
    plus n_s negatives drawn from the opposite part (the own part for
    diagonal pairs). Returns the number of positive updates applied.
    """
    pos = int((pool.targets_j >= 0).sum())
    if pool.hi_j > pool.lo_j and pool.hi_k > pool.lo_k:
        _train_pool_side(Mj, Mk, pool.targets_j, pool.lo_k,
                         pool.hi_k - pool.lo_k, n_s, lr, seed, 2,
                         num_workers, reuse_updated_source)
        if pool.targets_k is not None:
            _train_pool_side(Mk, Mj, pool.targets_k, pool.lo_j,
                             pool.hi_j - pool.lo_j, n_s, lr, seed, 3,
                             num_workers, reuse_updated_source)
            pos += int((pool.targets_k >= 0).sum())
    return pos


def next_submatrix(state: ResidencyState, position: int,
                   pairs: list[tuple[int, int]]) -> int | None:
    """First part needed after `position` in the pair sequence that is not
    resident; None when everything upcoming is already loaded."""
    for a, b in pairs[position + 1:]:
        if not state.resident(a):
            return a
        if not state.resident(b):
            return b
    return None


def switch_submatrices(state: ResidencyState, evict: int,
                       admit: int) -> ResidencyState:
    """Flush `evict` (or fill an empty bin when evict is -1) and load
    `admit` into the freed bin."""
    if state.resident(admit):
        raise ValueError(f"part {admit} is already resident")
    if evict == -1:
        empties = np.flatnonzero(state.bins == -1)
        if empties.size == 0:
            raise ValueError("no empty bin available")
        b = int(empties[0])
    else:
        b = state.bin_of(evict)
        if b < 0:
            raise ValueError(f"part {evict} is not resident")
        if state.in_flight is not None and evict in state.in_flight:
            raise RuntimeError(f"scheduling bug: evicting part {evict} "
                               f"needed by in-flight pair {state.in_flight}")
        lo, hi = state.plan.part_range(evict)
        state.backing[lo:hi] = state.slots[b][: hi - lo]
    lo, hi = state.plan.part_range(admit)
    state.slots[b][: hi - lo] = state.backing[lo:hi]
    state.bins[b] = admit
    state.switches += 1
    return state


def _derived_seed(seed: int, stream: int, pos: int) -> int:
    mixed = (seed ^ (stream * int(U64_GOLDEN))) & 0xFFFFFFFFFFFFFFFF
    h = mix64(np.uint64(mixed))
    h = mix64(h ^ np.uint64(pos))
    return int(h & np.uint64(0x7FFFFFFFFFFFFFFF))


def _pick_victim(state: ResidencyState, schedule: list[tuple[int, int]],
                 position: int, protect: set[int]) -> int | None:
    """Resident part whose next use lies farthest ahead (never one in
    `protect`); None if every bin is protected."""
    next_use: dict[int, int] = {}
    for part in state.bins:
        part = int(part)
        if part < 0 or part in protect:
            continue
        next_use[part] = len(schedule) + 1
        for off, (a, b) in enumerate(schedule[position + 1:]):
            if part == a or part == b:
                next_use[part] = off
                break
    if not next_use:
        return None
    return max(next_use.items(), key=lambda kv: kv[1])[0]


def _ensure_resident(state: ResidencyState, parts: tuple[int, int],
                     schedule: list[tuple[int, int]], position: int) -> None:
    protect = set(parts)
    for part in dict.fromkeys(parts):
        if state.resident(part):
            continue
        if np.any(state.bins == -1):
            switch_submatrices(state, -1, part)
        else:
            victim = _pick_victim(state, schedule, position, protect)
            if victim is None:
                raise RuntimeError("no evictable bin for demand load")
            switch_submatrices(state, victim, part)


def train_large(g: Graph, M: np.ndarray, cfg: TrainConfig, e_i: int,
                budget: MemoryBudget, rng_stream: int = 0) -> dict:
    """Out-of-core training of M on g for a budget of e_i epochs.

    Epochs are converted to rotations (e' = max(1, round(e_i / (B*K)))); one
    rotation trains every part pair once, so each vertex receives at most
    B*K positive updates per rotation. Returns a stats dict (rotations, K,
    switches, update counts, peak resident bytes).
    """
    cfg.validate()
    if M.shape[0] != g.num_vertices:
        raise ValueError("matrix rows must match vertex count")
    plan = plan_partitions(M.shape[0], M.shape[1], budget)
    K = plan.K
    B = budget.batch_size
    pairs = rotation_pairs(K)
    # One rotation gives every vertex up to B*K positive updates, one
    # vertex-pass epoch gives it one; edge-scaled epochs are worth
    # ceil(|E|/|V|) passes each, mirroring train_level.
    eff = e_i
    if cfg.epoch_unit == "edge-scaled" and g.num_edges > 0:
        eff = e_i * (-(-g.num_edges // g.num_vertices))
    rotations = max(1, round(eff / (B * K)))
    schedule = pairs * rotations
    state = ResidencyState.create(plan, M, budget.parts_resident)
    for part in range(min(budget.parts_resident, K)):
        switch_submatrices(state, -1, part)

    slot_bytes = state.slots.nbytes
    staged: dict[int, SamplePool] = {}
    staged_cv = threading.Condition()
    stage_sem = threading.Semaphore(budget.pools_resident)
    built_q: queue.Queue = queue.Queue()
    stop = threading.Event()
    errors: list[BaseException] = []
    acct = {"staged_bytes": 0, "peak_bytes": slot_bytes}

    def sample_maker() -> None:
        try:
            for pos, pr in enumerate(schedule):
                if stop.is_set():
                    return
                stage_sem.acquire()
                if stop.is_set():
                    return
                pool = build_sample_pool(g, plan, pr, B,
                                         _derived_seed(cfg.seed, rng_stream,
                                                       pos))
                with staged_cv:
                    # a pool occupies the budget from the moment it exists
                    acct["staged_bytes"] += pool.nbytes
                    peak = slot_bytes + acct["staged_bytes"]
                    if peak > acct["peak_bytes"]:
                        acct["peak_bytes"] = peak
                built_q.put((pos, pool))
        except BaseException as ex:  # surfaced by the dispatcher
            errors.append(ex)
            stop.set()
            with staged_cv:
                staged_cv.notify_all()
        finally:
            built_q.put(None)

    def pool_stager() -> None:
        try:
            while True:
                item = built_q.get()
                if item is None:
                    return
                pos, pool = item
                with staged_cv:
                    staged[pos] = pool
                    staged_cv.notify_all()
        except BaseException as ex:
            errors.append(ex)
            stop.set()
            with staged_cv:
                staged_cv.notify_all()

    threads = [threading.Thread(target=sample_maker, name="sample-maker"),
               threading.Thread(target=pool_stager, name="pool-stager")]
    for t in threads:
        t.start()

    pos_updates = 0
    pool_wait_s = 0.0
    try:
        position = 0
        for r in range(rotations):
            lr = lr_at(cfg.learning_rate, r, rotations)
            for pr in pairs:
                a, b = pr
                _ensure_resident(state, pr, schedule, position)
                t0 = time.perf_counter()
                with staged_cv:
                    while position not in staged and not stop.is_set():
                        if not staged_cv.wait(timeout=POOL_WAIT_TIMEOUT_S):
                            raise RuntimeError("timed out waiting for a "
                                               "sample pool")
                    if stop.is_set() and position not in staged:
                        raise errors[0] if errors else RuntimeError(
                            "pool pipeline stopped unexpectedly")
                    pool = staged.pop(position)
                    acct["staged_bytes"] -= pool.nbytes
                pool_wait_s += time.perf_counter() - t0
                state.in_flight = pr
                seed_rp = _derived_seed(cfg.seed, rng_stream, position)
                Ma = state.view(a)
                Mb = Ma if b == a else state.view(b)
                pos_updates += train_pair(Ma, Mb, pool,
                                          cfg.negative_samples, lr, seed_rp,
                                          num_workers=cfg.num_workers,
                                          reuse_updated_source=
                                          cfg.reuse_updated_source)
                state.in_flight = None
                stage_sem.release()
                nxt = next_submatrix(state, position, schedule)
                if nxt is not None:
                    if np.any(state.bins == -1):
                        switch_submatrices(state, -1, nxt)
                    else:
                        upcoming = (set(schedule[position + 1])
                                    if position + 1 < len(schedule) else set())
                        victim = _pick_victim(state, schedule, position,
                                              upcoming)
                        if victim is not None:
                            switch_submatrices(state, victim, nxt)
                position += 1
    finally:
        stop.set()
        stage_sem.release()  # unblock a sampler waiting on the bound
        for t in threads:
            t.join(timeout=POOL_WAIT_TIMEOUT_S)
    if errors:
        raise errors[0]
    for part in [int(p) for p in state.bins if p >= 0]:
        lo, hi = plan.part_range(part)
        bi = state.bin_of(part)
        M[lo:hi] = state.slots[bi][: hi - lo]
    if not np.isfinite(M).all():
        raise FloatingPointError("non-finite embedding after training")
    return {
        "rotations": rotations,
        "K": K,
        "switches": state.switches,
        "pos_updates": pos_updates,
        "neg_updates": pos_updates * cfg.negative_samples,
        "peak_bytes": int(acct["peak_bytes"]),
        "budget_bytes": budget.resident_bytes,
        "pool_wait_s": pool_wait_s,
    }
