"""Packing orders, bin geometry, and layout invariants."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacset.errors import ConfigError
from pacset.layout import (LayoutConfig, build_bins, pack, pack_bfs, pack_dfs,
                           pack_wdfs)
from pacset.model import annotate_cardinalities, parse_model

from conftest import random_forest


# ---------------------------------------------------------------------------
# helpers (independent oracles)
# ---------------------------------------------------------------------------

def stored_keys(forest):
    keys = set()
    for ti, tree in enumerate(forest.trees):
        for nid, node in tree.nodes.items():
            if node.is_leaf and forest.inlines_leaves and nid != tree.root:
                continue
            keys.add((ti, nid))
    return keys


def emitted_order(pm, start=0):
    items = [(pos, key) for key, pos in pm.positions.items() if pos >= start]
    return [key for _, key in sorted(items)]


def residual_order(pm):
    return emitted_order(pm, start=pm.residual_base)


def bfs_oracle(forest, ti):
    tree = forest.trees[ti]
    order, queue = [], [tree.root]
    while queue:
        nid = queue.pop(0)
        node = tree.nodes[nid]
        if not (node.is_leaf and forest.inlines_leaves and nid != tree.root):
            order.append((ti, nid))
        if not node.is_leaf:
            queue.extend([node.left, node.right])
    return order


def dfs_oracle(forest, ti):
    tree = forest.trees[ti]
    order, stack = [], [tree.root]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if not (node.is_leaf and forest.inlines_leaves and nid != tree.root):
            order.append((ti, nid))
        if not node.is_leaf:
            stack.append(node.right)
            stack.append(node.left)
    return order


def node_depths(tree):
    depths = {tree.root: 0}
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if not node.is_leaf:
            depths[node.left] = depths[nid] + 1
            depths[node.right] = depths[nid] + 1
            stack.extend([node.left, node.right])
    return depths


def weight(forest, ti, nid):
    node = forest.trees[ti].nodes[nid]
    if node.is_leaf:
        return node.cardinality if node.cardinality is not None else node.leaf_count
    return node.cardinality


def replay_block_alignment(forest, pm):
    """Re-derive the frontier from scratch and check every block start is a
    frontier maximum; returns the number of violations."""
    depth = pm.header.bin_depth
    npb = pm.header.nodes_per_block
    available = {}
    for ti, tree in enumerate(forest.trees):
        depths = node_depths(tree)
        for nid, node in tree.nodes.items():
            if depths[nid] != depth:
                continue
            if node.is_leaf and forest.inlines_leaves:
                continue
            available[(ti, nid)] = weight(forest, ti, nid)

    violations = 0
    for i, key in enumerate(residual_order(pm)):
        assert key in available, f"{key} emitted before its parent"
        if i % npb == 0 and available:
            if available[key] != max(available.values()):
                violations += 1
        del available[key]
        ti, nid = key
        node = forest.trees[ti].nodes[nid]
        if not node.is_leaf:
            for child in (node.left, node.right):
                cnode = forest.trees[ti].nodes[child]
                if not (cnode.is_leaf and forest.inlines_leaves):
                    available[(ti, child)] = weight(forest, ti, child)
    assert not available, "some stored residual nodes were never emitted"
    return violations


# ---------------------------------------------------------------------------
# BFS / DFS baselines
# ---------------------------------------------------------------------------

def make_forest(doc):
    return annotate_cardinalities(parse_model(json.dumps(doc).encode()))


def small_regress_tree():
    # A(B, C); B(D, E): regression so every node is stored.
    return {"root": 0, "nodes": [
        {"id": 0, "feature": 0, "threshold": 0.5, "left": 1, "right": 2},
        {"id": 1, "feature": 1, "threshold": 0.3, "left": 3, "right": 4},
        {"id": 2, "leaf_value": 1.0, "leaf_count": 2},
        {"id": 3, "leaf_value": 2.0, "leaf_count": 3},
        {"id": 4, "leaf_value": 3.0, "leaf_count": 4}]}


def test_bfs_level_order():
    doc = {"task": "regress", "kind": "rf", "num_features": 2,
           "trees": [small_regress_tree()]}
    pm = pack_bfs(make_forest(doc), LayoutConfig(layout="bfs", block_bytes=256))
    assert emitted_order(pm) == [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)]


def test_dfs_preorder():
    doc = {"task": "regress", "kind": "rf", "num_features": 2,
           "trees": [small_regress_tree()]}
    pm = pack_dfs(make_forest(doc), LayoutConfig(layout="dfs", block_bytes=256))
    # A, B, D, E, C
    assert emitted_order(pm) == [(0, 0), (0, 1), (0, 3), (0, 4), (0, 2)]


def test_two_stumps_concatenate_in_tree_order():
    stump = {"root": 0, "nodes": [{"id": 0, "leaf_value": 1.0,
                                   "leaf_count": 1}]}
    doc = {"task": "regress", "kind": "rf", "num_features": 1,
           "trees": [stump, dict(stump)]}
    pm = pack_bfs(make_forest(doc), LayoutConfig(layout="bfs", block_bytes=256))
    assert emitted_order(pm) == [(0, 0), (1, 0)]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bfs_dfs_match_oracles(seed):
    forest = random_forest(seed, num_trees=4)
    cfg = LayoutConfig(layout="bfs", block_bytes=512)
    pm = pack_bfs(forest, cfg)
    expected = [key for ti in range(4) for key in bfs_oracle(forest, ti)]
    assert emitted_order(pm) == expected
    pm = pack_dfs(forest, LayoutConfig(layout="dfs", block_bytes=512))
    expected = [key for ti in range(4) for key in dfs_oracle(forest, ti)]
    assert emitted_order(pm) == expected


# ---------------------------------------------------------------------------
# Bins
# ---------------------------------------------------------------------------

def complete_tree_doc(depth, leaf_count=4):
    nodes, counter = [], [0]

    def grow(level):
        nid = counter[0]
        counter[0] += 1
        if level == depth:
            nodes.append({"id": nid, "leaf_value": float(nid),
                          "leaf_count": leaf_count})
            return nid
        raw = {"id": nid, "feature": 0, "threshold": 0.5}
        nodes.append(raw)
        raw["left"] = grow(level + 1)
        raw["right"] = grow(level + 1)
        return nid

    root = grow(0)
    return {"root": root, "nodes": nodes}


def test_bin_striping_four_complete_trees():
    doc = {"task": "regress", "kind": "rf", "num_features": 1,
           "trees": [complete_tree_doc(3) for _ in range(4)]}
    forest = make_forest(doc)
    cfg = LayoutConfig(layout="bin_dfs", block_bytes=1024, bin_depth=2,
                       trees_per_bin=4)
    directory, slot_map, residual_roots = build_bins(forest, cfg)
    assert len(directory) == 1
    # Region order: the 4 roots in slots 0..3, then all 8 level-1 nodes.
    for ti in range(4):
        assert slot_map[(ti, 0)] == ti
    level1 = sorted((slot_map[(ti, nid)], ti)
                    for ti in range(4)
                    for nid in (forest.trees[ti].nodes[0].left,
                                forest.trees[ti].nodes[0].right))
    assert [slot for slot, _ in level1] == list(range(4, 12))
    # Four residual subtrees per tree.
    assert all(len(roots) == 4 for roots in residual_roots)


def test_bin_682_trees_fills_one_64k_block():
    forest = random_forest(4077, num_trees=682, max_depth=3, task="classify",
                           kind="rf")
    cfg = LayoutConfig(layout="bin_block_wdfs", block_bytes=65536, bin_depth=2,
                       trees_per_bin=682)
    pm = pack(forest, cfg)
    assert pm.header.num_bins == 1
    assert cfg.nodes_per_block == 2048
    assert 682 * 3 == 2046 <= 2048
    bin_slots = pm.records[:2046]
    assert all(rec is not None for rec in bin_slots)
    assert all(rec is None for rec in pm.records[2046:2048])
    assert pm.residual_base == 2048


def test_stump_tree_pads_level_one_with_sentinels():
    # A decision stump (one split, two inlined leaves).
    doc = {"task": "classify", "kind": "rf", "num_features": 1,
           "num_classes": 2, "trees": [{"root": 0, "nodes": [
               {"id": 0, "feature": 0, "threshold": 0.5, "left": 1, "right": 2},
               {"id": 1, "leaf_class": 0, "cardinality": 1},
               {"id": 2, "leaf_class": 1, "cardinality": 1}]}]}
    forest = make_forest(doc)
    cfg = LayoutConfig(layout="bin_dfs", block_bytes=256, bin_depth=2,
                       trees_per_bin=1)
    pm = pack(forest, cfg)
    assert pm.records[0] is not None and not pm.records[0].is_sentinel
    assert pm.records[1].is_sentinel and pm.records[2].is_sentinel
    assert pm.residual_roots == [[]]
    assert pm.residual_record_count() == 0


def test_pure_stump_root_leaf_record():
    doc = {"task": "classify", "kind": "rf", "num_features": 1,
           "num_classes": 5, "trees": [{"root": 0, "nodes": [
               {"id": 0, "leaf_class": 3, "cardinality": 9}]}]}
    forest = make_forest(doc)
    pm = pack(forest, LayoutConfig(layout="bin_dfs", block_bytes=256,
                                   bin_depth=2, trees_per_bin=1))
    root = pm.records[0]
    assert root.is_leaf
    assert root.left == (1 << 31) | 3
    assert pm.records[1].is_sentinel and pm.records[2].is_sentinel
    assert pm.residual_roots == [[]]


def test_bin_exceeding_block_rejected():
    forest = random_forest(5, num_trees=4)
    cfg = LayoutConfig(layout="bin_dfs", block_bytes=256, bin_depth=2,
                       trees_per_bin=4)  # 4*3*32 = 384 > 256
    with pytest.raises(ConfigError):
        build_bins(forest, cfg)


def test_auto_trees_per_bin_single_tree_too_deep():
    forest = random_forest(6, num_trees=2)
    cfg = LayoutConfig(layout="bin_dfs", block_bytes=256, bin_depth=4)
    # One tree needs 15 slots = 480 bytes > 256.
    with pytest.raises(ConfigError):
        cfg.resolve_trees_per_bin(2)


# ---------------------------------------------------------------------------
# Weighted DFS orders
# ---------------------------------------------------------------------------

def weighted_example_forest():
    """Topology of the weighted-layout figure: bin holds A (root) and its
    children; C outweighs B; the heavy chain under C is E-H-K; L hangs off
    E with leaves summing 20; the B side holds the long thin chain D-G-J-M.
    Classification, so all leaves inline."""
    A, B, C, D, E, F, G, H, I, J, K, L, M = range(13)
    leaves = iter(range(20, 40))

    def leaf(card):
        return {"id": next(leaves), "leaf_class": 0, "cardinality": card}

    nodes = []

    def interior(nid, left, right):
        nodes.append({"id": nid, "feature": 0, "threshold": 0.5,
                      "left": left["id"] if isinstance(left, dict) else left,
                      "right": right["id"] if isinstance(right, dict) else right})
        for child in (left, right):
            if isinstance(child, dict):
                nodes.append(child)

    interior(A, B, C)
    interior(B, D, leaf(5))          # implicit leaf of cardinality 5 off B
    interior(C, E, F)
    interior(E, H, L)
    interior(H, K, leaf(10))
    interior(K, leaf(30), leaf(25))
    interior(L, leaf(12), leaf(8))   # leaves under L sum to 20
    interior(F, I, leaf(6))
    interior(I, leaf(15), leaf(14))
    interior(D, G, leaf(2))
    interior(G, J, leaf(3))
    interior(J, M, leaf(4))
    interior(M, leaf(9), leaf(8))
    doc = {"task": "classify", "kind": "rf", "num_features": 1,
           "num_classes": 2,
           "trees": [{"root": A, "nodes": sorted(nodes, key=lambda n: n["id"])}]}
    return make_forest(doc)


def test_weighted_preorder_matches_figure():
    forest = weighted_example_forest()
    # Sanity: the figure's weights (C=120 > B=31, E=85 > F=35, H=65 > L=20).
    t = forest.trees[0].nodes
    assert t[2].cardinality > t[1].cardinality
    assert t[4].cardinality > t[5].cardinality
    assert t[7].cardinality > t[11].cardinality

    cfg = LayoutConfig(layout="bin_wdfs", block_bytes=4096, bin_depth=2,
                       trees_per_bin=1)
    pm = pack_wdfs(forest, cfg, block_aligned=False)
    names = dict(zip(range(13), "ABCDEFGHIJKLM"))
    order = [names[nid] for _, nid in residual_order(pm)]
    # Heavy side first: E,H,K then back up for L and F; then I under F;
    # then the whole B/D chain in weighted preorder.
    assert order == ["E", "H", "K", "L", "F", "I", "D", "G", "J", "M"]


def test_equal_cardinalities_reduce_to_plain_dfs():
    doc = {"task": "regress", "kind": "rf", "num_features": 1,
           "trees": [complete_tree_doc(3, leaf_count=4) for _ in range(2)]}
    forest = make_forest(doc)
    base = dict(block_bytes=1024, bin_depth=2, trees_per_bin=2)
    wdfs = pack(forest, LayoutConfig(layout="bin_wdfs", **base))
    dfs = pack(forest, LayoutConfig(layout="bin_dfs", **base))
    assert residual_order(wdfs) == residual_order(dfs)


def test_block_aligned_fills_then_resets():
    """Two-tree forest in the spirit of the block-aligned figure: the first
    residual block is exactly the heaviest chain of tree 0, the next block
    starts from tree 1's best subtree, and the deferred low-cardinality
    nodes trail at the end."""
    leaves = iter(range(100, 140))

    def leaf(card):
        return {"id": next(leaves), "leaf_class": 0, "cardinality": card}

    def interior(nodes, nid, left, right):
        entry = {"id": nid, "feature": 0, "threshold": 0.5}
        for key, child in (("left", left), ("right", right)):
            if isinstance(child, dict):
                entry[key] = child["id"]
                nodes.append(child)
            else:
                entry[key] = child
        nodes.append(entry)

    # Tree 0: root -> (D chain, inlined leaf); D,E,F,G heavy; H,I light.
    R1, D, E, F, G, H, I = 0, 1, 2, 3, 4, 5, 6
    t0 = []
    interior(t0, R1, D, leaf(5))
    interior(t0, D, E, leaf(10))
    interior(t0, E, F, leaf(20))
    interior(t0, F, leaf(60), G)
    interior(t0, G, H, I)
    interior(t0, H, leaf(2), leaf(1))
    interior(t0, I, leaf(1), leaf(1))
    # Tree 1: root -> (E2 subtree of four stored nodes, inlined leaf).
    R2, E2, H2, K2, L2 = 0, 1, 2, 3, 4
    t1 = []
    interior(t1, R2, E2, leaf(5))
    interior(t1, E2, H2, L2)
    interior(t1, H2, K2, leaf(5))
    interior(t1, K2, leaf(20), leaf(15))
    interior(t1, L2, leaf(12), leaf(8))

    doc = {"task": "classify", "kind": "rf", "num_features": 1,
           "num_classes": 2, "trees": [
               {"root": R1, "nodes": sorted(t0, key=lambda n: n["id"])},
               {"root": R2, "nodes": sorted(t1, key=lambda n: n["id"])}]}
    forest = make_forest(doc)

    cfg = LayoutConfig(layout="bin_block_wdfs", block_bytes=128, bin_depth=1,
                       trees_per_bin=2)  # 4 records per block
    pm = pack(forest, cfg)
    order = residual_order(pm)
    assert order[0:4] == [(0, D), (0, E), (0, F), (0, G)]
    assert order[4:8] == [(1, E2), (1, H2), (1, K2), (1, L2)]
    assert order[8:10] == [(0, H), (0, I)]
    assert replay_block_alignment(forest, pm) == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_block_alignment_replay_oracle(seed):
    forest = random_forest(seed, num_trees=6, max_depth=7, p_leaf=0.2)
    cfg = LayoutConfig(layout="bin_block_wdfs", block_bytes=256, bin_depth=1)
    pm = pack(forest, cfg)
    assert replay_block_alignment(forest, pm) == 0


# ---------------------------------------------------------------------------
# Cross-layout invariants
# ---------------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_and_bin_coverage(seed):
    forest = random_forest(seed, num_trees=5)
    expected = stored_keys(forest)
    for layout in ("bfs", "dfs", "bin_dfs", "bin_wdfs", "bin_block_wdfs"):
        cfg = LayoutConfig(layout=layout, block_bytes=512, bin_depth=2)
        pm = pack(forest, cfg)
        assert set(pm.positions) == expected
        real = [r for r in pm.records if r is not None and not r.is_sentinel]
        assert len(real) == len(expected)
        if pm.header.num_bins:
            for ti, tree in enumerate(forest.trees):
                depths = node_depths(tree)
                for (t, nid), pos in pm.positions.items():
                    if t != ti:
                        continue
                    in_bin = pos < pm.residual_base
                    assert in_bin == (depths[nid] < pm.header.bin_depth)


def test_packing_is_deterministic():
    from pacset.codec import encode
    forest = random_forest(77, num_trees=6)
    cfg = LayoutConfig(layout="bin_block_wdfs", block_bytes=512, bin_depth=2)
    assert encode(pack(forest, cfg)) == encode(pack(forest, cfg))
