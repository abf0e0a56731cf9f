"""Reference inference over the decoded Forest, independent of packing.

This walks the interchange structure directly and defines the semantics
that every packed layout must reproduce: left iff x[feature] <= threshold,
majority vote with ties to the smallest label (rf classification), mean of
leaf values (rf regression), base_score plus the sum of leaf values (gbt),
and a 0.5 sigmoid threshold for binary gbt classification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import Forest, Tree, TreeNode


@dataclass(frozen=True, slots=True)
class Prediction:
    label: int | None = None
    value: float | None = None
    votes: tuple[int, ...] | None = None
    score: float | None = None


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def walk_tree(tree: Tree, x) -> TreeNode:
    """Route one observation to its leaf."""
    node = tree.nodes[tree.root]
    while not node.is_leaf:
        nid = node.left if x[node.feature] <= node.threshold else node.right
        node = tree.nodes[nid]
    return node


def leaf_path(tree: Tree, x) -> list[int]:
    """Node ids visited from root to leaf, inclusive."""
    path = [tree.root]
    node = tree.nodes[tree.root]
    while not node.is_leaf:
        nid = node.left if x[node.feature] <= node.threshold else node.right
        path.append(nid)
        node = tree.nodes[nid]
    return path


def aggregate_outputs(task: str, kind: str, num_classes: int,
                      base_score: float, num_trees: int,
                      leaf_outputs: list[int | float],
                      bin_sizes: list[int] | None = None) -> Prediction:
    """Combine per-tree leaf outputs into a prediction.

    ``bin_sizes`` fixes the reduction grouping for real-valued outputs:
    partial sums are taken per group (in order) and then reduced in group
    order.  Packed inference uses its bin partition here, so sequential
    and per-bin-parallel evaluation are bit-identical.
    """
    if bin_sizes is None:
        bin_sizes = [num_trees]

    if task == "classify" and kind == "rf":
        votes = [0] * num_classes
        for label in leaf_outputs:
            votes[label] += 1
        best = max(range(num_classes), key=lambda c: (votes[c], -c))
        return Prediction(label=best, votes=tuple(votes))

    total = 0.0
    i = 0
    for size in bin_sizes:
        part = 0.0
        for _ in range(size):
            part += leaf_outputs[i]
            i += 1
        total += part

    if kind == "gbt":
        margin = base_score + total
        if task == "classify":
            prob = sigmoid(margin)
            return Prediction(label=1 if prob >= 0.5 else 0, score=prob)
        return Prediction(value=margin)
    return Prediction(value=total / num_trees)


def aggregate(forest: Forest, leaf_outputs: list[int | float],
              bin_sizes: list[int] | None = None) -> Prediction:
    return aggregate_outputs(forest.task, forest.kind,
                             forest.num_classes or 0, forest.base_score,
                             len(forest.trees), leaf_outputs, bin_sizes)


def predict(forest: Forest, x) -> Prediction:
    outputs = []
    for tree in forest.trees:
        leaf = walk_tree(tree, x)
        outputs.append(leaf.leaf_class if forest.inlines_leaves else leaf.leaf_value)
    return aggregate(forest, outputs)
