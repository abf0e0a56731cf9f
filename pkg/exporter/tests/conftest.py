"""Test helpers: toy datasets and an independent interchange-JSON walker."""

from __future__ import annotations

import math

import numpy as np
import pytest


def grid_dataset(seed=0, rows=400, features=6, classes=3):
    """Deterministic toy data on a coarse grid (quarter steps), so every
    split midpoint is exactly representable in float32."""
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 16, size=(rows, features)).astype(np.float64) / 4.0
    y = ((X[:, 0] + X[:, 1] * 0.5 + rng.normal(0, 0.3, rows)) % classes)
    return X, y.astype(np.int64) % classes


def grid_regression(seed=0, rows=400, features=6):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 16, size=(rows, features)).astype(np.float64) / 4.0
    y = X[:, 0] * 2.0 - X[:, 1] + rng.normal(0, 0.2, rows)
    return X, y


# ---------------------------------------------------------------------------
# Independent reference traversal over the interchange document
# ---------------------------------------------------------------------------

def _walk(tree, x):
    nodes = {n["id"]: n for n in tree["nodes"]}
    node = nodes[tree["root"]]
    while "left" in node:
        nid = node["left"] if x[node["feature"]] <= node["threshold"] \
            else node["right"]
        node = nodes[nid]
    return node


def predict_document(doc, x):
    """Reference prediction from the interchange document alone."""
    leaves = [_walk(tree, x) for tree in doc["trees"]]
    if doc["task"] == "classify" and doc["kind"] == "rf":
        votes = [0] * doc["num_classes"]
        for leaf in leaves:
            votes[leaf["leaf_class"]] += 1
        return max(range(len(votes)), key=lambda c: (votes[c], -c))
    total = sum(leaf["leaf_value"] for leaf in leaves)
    if doc["kind"] == "gbt":
        margin = doc.get("base_score", 0.0) + total
        if doc["task"] == "classify":
            return 1 if 1.0 / (1.0 + math.exp(-margin)) >= 0.5 else 0
        return margin
    return total / len(leaves)
