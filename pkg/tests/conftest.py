"""Shared builders: seeded random forests in the interchange format."""

from __future__ import annotations

import numpy as np
import pytest

from pacset.layout import as_f32
from pacset.model import annotate_cardinalities, parse_model
import json


def random_tree_nodes(rng, num_features, max_depth, task, kind, num_classes,
                      p_leaf=0.3, allow_stump=True):
    """Grow one random tree; returns (nodes, root) with preorder ids."""
    nodes = []
    value_leaves = not (task == "classify" and kind == "rf")

    def leaf(nid):
        card = int(rng.integers(0, 50))
        raw = {"id": nid, "cardinality": card}
        if value_leaves:
            raw["leaf_value"] = float(as_f32(rng.uniform(-2.0, 2.0)))
            raw["leaf_count"] = card
        else:
            raw["leaf_class"] = int(rng.integers(num_classes))
        nodes.append(raw)

    counter = [0]

    def grow(depth):
        nid = counter[0]
        counter[0] += 1
        if depth >= max_depth or (depth > 0 and rng.random() < p_leaf):
            leaf(nid)
            return nid
        raw = {"id": nid, "feature": int(rng.integers(num_features)),
               "threshold": float(as_f32(rng.random()))}
        nodes.append(raw)
        raw["left"] = grow(depth + 1)
        raw["right"] = grow(depth + 1)
        return nid

    if allow_stump and rng.random() < 0.05:
        leaf(counter[0])
        return nodes, 0
    root = grow(0)
    return nodes, root


def random_forest_doc(seed, num_trees=None, task=None, kind=None,
                      num_features=8, num_classes=5, max_depth=6,
                      p_leaf=0.3) -> dict:
    rng = np.random.default_rng(seed)
    if num_trees is None:
        num_trees = int(rng.integers(1, 12))
    if task is None:
        task = ("classify", "regress")[int(rng.integers(2))]
    if kind is None:
        kind = ("rf", "gbt")[int(rng.integers(2))]
    doc = {"task": task, "kind": kind, "num_features": num_features}
    if task == "classify":
        doc["num_classes"] = 2 if kind == "gbt" else num_classes
    if kind == "gbt":
        doc["base_score"] = float(as_f32(rng.uniform(-0.5, 0.5)))
    doc["trees"] = []
    for _ in range(num_trees):
        nodes, root = random_tree_nodes(
            rng, num_features, max_depth, task, kind,
            doc.get("num_classes", 0), p_leaf=p_leaf)
        doc["trees"].append({"root": root, "nodes": nodes})
    return doc


def random_forest(seed, **kwargs):
    doc = random_forest_doc(seed, **kwargs)
    return annotate_cardinalities(parse_model(json.dumps(doc).encode()))


@pytest.fixture
def toy_classify_forest():
    return random_forest(1234, num_trees=4, task="classify", kind="rf")


@pytest.fixture
def toy_regress_forest():
    return random_forest(99, num_trees=4, task="regress", kind="rf")
