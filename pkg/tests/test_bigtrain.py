"""Partition planning, rotation schedule, sample pools, residency, and the
budgeted trainer."""
from __future__ import annotations

import numpy as np
import pytest

import mlembed as ml
from mlembed.bigtrain import (MemoryBudget, PartitionPlan, ResidencyState,
                              _derived_seed, _ensure_resident, _pick_victim,
                              build_sample_pool, next_submatrix,
                              plan_partitions, rotation_pairs,
                              switch_submatrices, train_large, train_pair)
from mlembed.errors import ConfigError, PlanError
from mlembed.trainer import TrainConfig, init_embedding, update_embedding

import oracles
import synth


# -- partition planning ------------------------------------------------------

def test_plan_partitions_reference_case():
    # 1e6 rows at d=128 under 512 MiB with 3 parts, 4 pools, batch 5:
    # bytes per row = 3*128*4 + 4*2*5*4 = 1696, cap = floor(512Mi/1696),
    # so four parts are needed even though only three fit at once.
    b = MemoryBudget(512 * 1024 * 1024)
    plan = plan_partitions(1_000_000, 128, b)
    assert plan.K == 4
    assert plan.K == oracles.plan_k_oracle(1_000_000, 128,
                                           512 * 1024 * 1024, 3, 4, 5)


def test_plan_partitions_matches_oracle_on_random_inputs():
    rng = np.random.default_rng(77)
    for _ in range(200):
        n = int(rng.integers(10, 2_000_000))
        d = int(rng.integers(4, 256))
        parts = int(rng.integers(2, 6))
        pools = int(rng.integers(1, 8))
        batch = int(rng.integers(1, 12))
        per_row = parts * d * 4 + pools * 2 * batch * 4
        res = int(rng.integers(per_row, per_row * n * 2))
        b = MemoryBudget(res, parts_resident=parts, pools_resident=pools,
                         batch_size=batch)
        plan = plan_partitions(n, d, b)
        assert plan.K == oracles.plan_k_oracle(n, d, res, parts, pools,
                                               batch)
        # boundaries tile [0, n) in near-equal contiguous ranges
        assert plan.boundaries[0] == 0 and plan.boundaries[-1] == n
        widths = np.diff(plan.boundaries)
        assert widths.min() >= 1
        assert widths.max() - widths.min() <= 1


def test_plan_partitions_rejects_hopeless_budget():
    b = MemoryBudget(64)  # less than one row of anything useful
    with pytest.raises(PlanError):
        plan_partitions(1000, 128, b)


def test_memory_budget_validation():
    with pytest.raises(ConfigError):
        MemoryBudget(0)
    with pytest.raises(ConfigError):
        MemoryBudget(1 << 20, parts_resident=1)
    with pytest.raises(ConfigError):
        MemoryBudget(1 << 20, pools_resident=0)
    with pytest.raises(ConfigError):
        MemoryBudget(1 << 20, batch_size=0)


# -- rotation schedule --------------------------------------------------------

def test_rotation_pairs_small_unrolls():
    assert rotation_pairs(1) == [(0, 0)]
    assert rotation_pairs(3) == [(0, 0), (1, 0), (1, 1),
                                 (2, 0), (2, 1), (2, 2)]
    for K in range(1, 9):
        assert rotation_pairs(K) == oracles.unroll_rotation(K)


def test_rotation_pairs_cover_every_pair_once():
    for K in (2, 7, 12):
        pairs = rotation_pairs(K)
        assert len(pairs) == K * (K + 1) // 2
        assert len(set(pairs)) == len(pairs)
        assert all(a >= b for a, b in pairs)


# -- sample pools --------------------------------------------------------------

def _two_part_plan(n: int) -> PartitionPlan:
    half = n // 2
    return PartitionPlan(K=2, boundaries=np.asarray([0, half, n],
                                                    dtype=np.int64))


def test_sample_pool_targets_are_in_range_neighbors():
    g = synth.path_graph(6)
    plan = _two_part_plan(6)
    pool = build_sample_pool(g, plan, (1, 0), B=4, seed=3)
    # part-1 sources aiming at part 0: only vertex 3 has a neighbor there
    assert np.all(pool.targets_j[0] == 2)
    assert np.all(pool.targets_j[1:] == -1)
    # part-0 sources aiming at part 1: only vertex 2 qualifies
    assert np.all(pool.targets_k[2] == 3)
    assert np.all(pool.targets_k[:2] == -1)


def test_sample_pool_diagonal_has_single_side():
    g = synth.path_graph(6)
    pool = build_sample_pool(g, _two_part_plan(6), (0, 0), B=2, seed=1)
    assert pool.targets_k is None
    for v in range(3):
        row = pool.targets_j[v]
        nbrs = set(g.neighbors(v).tolist()) & {0, 1, 2}
        if nbrs:
            assert set(row.tolist()) <= nbrs
        else:
            assert np.all(row == -1)


def test_sample_pool_is_deterministic():
    g = synth.gnp_graph(40, 0.2, seed=5)
    plan = _two_part_plan(40)
    a = build_sample_pool(g, plan, (1, 0), B=6, seed=9)
    b = build_sample_pool(g, plan, (1, 0), B=6, seed=9)
    assert np.array_equal(a.targets_j, b.targets_j)
    assert np.array_equal(a.targets_k, b.targets_k)


def test_train_pair_matches_single_update_oracle():
    # with batch 1 and no negatives the pool trainer must reproduce two
    # plain updates applied in pool order: first (3 -> 2), then (2 -> 3)
    g = synth.path_graph(6)
    plan = _two_part_plan(6)
    pool = build_sample_pool(g, plan, (1, 0), B=1, seed=3)
    M = init_embedding(6, 8, seed=2)
    expect = M.copy()
    update_embedding(expect, 3, 2, 1, 0.05)
    update_embedding(expect, 2, 3, 1, 0.05)
    Mj = M[3:6].copy()
    Mk = M[0:3].copy()
    pos = train_pair(Mj, Mk, pool, 0, 0.05, seed=123)
    assert pos == 2
    assert np.array_equal(Mj, expect[3:6])
    assert np.array_equal(Mk, expect[0:3])


def test_train_pair_counts_present_slots():
    g = synth.gnp_graph(30, 0.3, seed=8)
    plan = _two_part_plan(30)
    pool = build_sample_pool(g, plan, (1, 0), B=3, seed=4)
    Mj = init_embedding(15, 4, seed=0)
    Mk = init_embedding(15, 4, seed=1)
    pos = train_pair(Mj, Mk, pool, 2, 0.02, seed=99)
    want = int((pool.targets_j >= 0).sum() + (pool.targets_k >= 0).sum())
    assert pos == want


# -- residency ------------------------------------------------------------------

def _state_with(parts, K=5, rows=20, dim=4):
    plan = PartitionPlan(K=K, boundaries=np.linspace(0, rows, K + 1,
                                                     dtype=np.int64))
    backing = np.arange(rows * dim, dtype=np.float32).reshape(rows, dim)
    st = ResidencyState.create(plan, backing, parts_resident=len(parts))
    for p in parts:
        switch_submatrices(st, -1, p)
    return st


def test_next_submatrix_prefetch_walkthrough():
    # parts 1, 2, 4 are loaded and the walk sits just before (4, 1); the
    # pairs (4, 1) and (4, 2) are satisfied, so part 3 is what comes next
    st = _state_with([1, 2, 4])
    pairs = rotation_pairs(5)
    position = pairs.index((4, 0))
    assert next_submatrix(st, position, pairs) == 3


def test_next_submatrix_none_when_everything_upcoming_is_loaded():
    st = _state_with([4, 3])
    pairs = rotation_pairs(5)
    position = pairs.index((4, 2))  # remaining: (4,3), (4,4)
    assert next_submatrix(st, position, pairs) is None


def test_switch_flushes_evicted_rows():
    st = _state_with([0, 1], K=4, rows=16)
    st.view(0)[:] = 7.5
    switch_submatrices(st, 0, 2)
    lo, hi = st.plan.part_range(0)
    assert np.all(st.backing[lo:hi] == 7.5)
    assert st.resident(2) and not st.resident(0)
    # and the admitted bin holds the backing rows for part 2
    lo2, hi2 = st.plan.part_range(2)
    assert np.array_equal(st.view(2), st.backing[lo2:hi2])


def test_switch_rejects_bad_moves():
    st = _state_with([0, 1], K=4, rows=16)
    with pytest.raises(ValueError):
        switch_submatrices(st, 0, 1)  # admit already resident
    with pytest.raises(ValueError):
        switch_submatrices(st, 3, 2)  # evict not resident
    with pytest.raises(ValueError):
        switch_submatrices(st, -1, 2)  # no empty bin left
    st.in_flight = (0, 1)
    with pytest.raises(RuntimeError):
        switch_submatrices(st, 0, 2)  # evicting an in-flight part


def test_pick_victim_prefers_farthest_next_use():
    st = _state_with([0, 1, 2], K=5, rows=20)
    # upcoming uses: 0 soonest, then 1; 2 never appears again
    schedule = [(0, 0), (1, 0), (3, 3), (4, 3)]
    assert _pick_victim(st, schedule, -1, protect=set()) == 2
    assert _pick_victim(st, schedule, -1, protect={2}) == 1
    assert _pick_victim(st, schedule, -1, protect={0, 1, 2}) is None


def test_ensure_resident_demand_loads():
    st = _state_with([0], K=5, rows=20)
    # one empty bin remains (len(parts)=1 but create gave 1 bin) -> rebuild
    plan = st.plan
    st = ResidencyState.create(plan, st.backing, parts_resident=3)
    switch_submatrices(st, -1, 0)
    _ensure_resident(st, (2, 4), rotation_pairs(5), 0)
    assert st.resident(2) and st.resident(4) and st.resident(0)


def test_derived_seed_spreads():
    seeds = {_derived_seed(1, 0, p) for p in range(100)}
    assert len(seeds) == 100
    assert all(s >= 0 for s in seeds)
    assert _derived_seed(1, 0, 5) == _derived_seed(1, 0, 5)
    assert _derived_seed(1, 1, 5) != _derived_seed(1, 0, 5)


# -- the budgeted trainer ---------------------------------------------------------

def _forced_budget(n: int, dim: int, K: int, B: int) -> MemoryBudget:
    per_row = 3 * dim * 4 + 4 * 2 * B * 4
    return MemoryBudget(per_row * (-(-n // K)) + 256, batch_size=B)


def test_train_large_runs_within_budget():
    g = synth.planted_graph(4, 12, 0.4, 0.05, seed=6)
    cfg = TrainConfig(dim=8, total_epochs=12, seed=3, negative_samples=2)
    M = init_embedding(g.num_vertices, 8, seed=3)
    before = M.copy()
    budget = _forced_budget(g.num_vertices, 8, 3, B=2)
    stats = train_large(g, M, cfg, e_i=12, budget=budget)
    assert stats["K"] == 3
    assert stats["rotations"] == max(1, round(12 / (2 * 3)))
    assert stats["peak_bytes"] <= stats["budget_bytes"]
    assert stats["pos_updates"] > 0
    assert stats["neg_updates"] == stats["pos_updates"] * 2
    assert np.isfinite(M).all()
    assert not np.array_equal(M, before)


def test_train_large_is_deterministic():
    g = synth.planted_graph(3, 10, 0.5, 0.05, seed=7)
    cfg = TrainConfig(dim=8, total_epochs=8, seed=11)
    budget = _forced_budget(g.num_vertices, 8, 3, B=1)
    Ma = init_embedding(g.num_vertices, 8, seed=11)
    Mb = Ma.copy()
    sa = train_large(g, Ma, cfg, e_i=8, budget=budget, rng_stream=2)
    sb = train_large(g, Mb, cfg, e_i=8, budget=budget, rng_stream=2)
    assert np.array_equal(Ma, Mb)
    assert sa["switches"] == sb["switches"]


def test_train_large_edge_scaled_epoch_conversion():
    g = synth.complete_graph(12)  # 132 arcs over 12 vertices -> factor 11
    cfg = TrainConfig(dim=4, total_epochs=6, seed=1,
                      epoch_unit="edge-scaled")
    budget = _forced_budget(12, 4, 3, B=2)
    M = init_embedding(12, 4, seed=1)
    stats = train_large(g, M, cfg, e_i=6, budget=budget)
    assert stats["rotations"] == max(1, round(6 * 11 / (2 * 3)))


def test_train_large_rejects_row_mismatch():
    g = synth.path_graph(10)
    cfg = TrainConfig(dim=4, total_epochs=4)
    M = init_embedding(9, 4, seed=0)
    with pytest.raises(ValueError):
        train_large(g, M, cfg, e_i=4,
                    budget=_forced_budget(10, 4, 3, B=1))
