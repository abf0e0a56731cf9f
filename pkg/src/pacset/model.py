"""Decoded tree-ensemble model and the canonical interchange JSON.

The interchange document is a UTF-8 JSON object:

    {"task": "classify"|"regress", "kind": "rf"|"gbt",
     "num_features": int, "num_classes": int?, "base_score": float?,
     "trees": [{"root": int,
                "nodes": [{"id": int, "feature": int?, "threshold": float?,
                           "left": int?, "right": int?, "leaf_class": int?,
                           "leaf_value": float?, "leaf_count": int?,
                           "cardinality": int?}, ...]}, ...]}

The split rule is fixed: an observation goes left iff
``x[feature] <= threshold``.  Leaf payloads depend on the model family:
random-forest classifiers carry ``leaf_class``; every other combination
(regression, and gradient-boosted trees for either task) carries
``leaf_value`` plus an optional ``leaf_count``.  A leaf's cardinality is
taken from ``cardinality`` when present, else from ``leaf_count``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .errors import ModelParseError, ModelValidationError

TASKS = ("classify", "regress")
KINDS = ("rf", "gbt")


@dataclass(frozen=True, slots=True)
class TreeNode:
    """One node of a decision tree.

    Interior nodes carry ``feature``/``threshold``/``left``/``right``;
    leaves carry a payload (``leaf_class`` or ``leaf_value``/``leaf_count``).
    ``cardinality`` counts the training observations routed through the
    node; for interior nodes it is filled in by ``annotate_cardinalities``.
    """

    feature: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    leaf_class: int | None = None
    leaf_value: float | None = None
    leaf_count: int | None = None
    cardinality: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True, slots=True)
class Tree:
    nodes: dict[int, TreeNode]
    root: int

    def depth_of(self) -> int:
        """Maximum root-to-leaf edge count."""
        best = 0
        stack = [(self.root, 0)]
        while stack:
            nid, d = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                best = max(best, d)
            else:
                stack.append((node.left, d + 1))
                stack.append((node.right, d + 1))
        return best


@dataclass(frozen=True, slots=True)
class Forest:
    """A validated, immutable ensemble plus its task metadata."""

    trees: tuple[Tree, ...]
    task: str
    kind: str
    num_features: int
    num_classes: int | None = None
    base_score: float = 0.0

    @property
    def inlines_leaves(self) -> bool:
        """True when leaves carry only a class label and can be inlined
        into the parent's child reference (random-forest classification)."""
        return self.task == "classify" and self.kind == "rf"

    def node_count(self) -> int:
        return sum(len(t.nodes) for t in self.trees)


def leaf_cardinality(node: TreeNode) -> int | None:
    if node.cardinality is not None:
        return node.cardinality
    return node.leaf_count


def _require(cond: bool, msg: str):
    if not cond:
        raise ModelValidationError(msg)


def _check_int(value, what: str, minimum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ModelValidationError(f"{what} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ModelValidationError(f"{what} must be >= {minimum}, got {value}")
    return value


def _check_real(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelValidationError(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ModelValidationError(f"{what} must be finite, got {value!r}")
    return float(value)


def _parse_node(raw: dict, where: str, forest_meta: dict) -> TreeNode:
    _require(isinstance(raw, dict), f"{where}: node must be an object")
    known = {"id", "feature", "threshold", "left", "right",
             "leaf_class", "leaf_value", "leaf_count", "cardinality"}
    for key in raw:
        _require(key in known, f"{where}: unknown field {key!r}")

    has_children = raw.get("left") is not None or raw.get("right") is not None
    task, kind = forest_meta["task"], forest_meta["kind"]

    card = raw.get("cardinality")
    if card is not None:
        card = _check_int(card, f"{where}: cardinality", minimum=0)
    leaf_count = raw.get("leaf_count")
    if leaf_count is not None:
        leaf_count = _check_int(leaf_count, f"{where}: leaf_count", minimum=0)

    if has_children:
        _require(raw.get("left") is not None and raw.get("right") is not None,
                 f"{where}: interior node must have both children")
        for bad in ("leaf_class", "leaf_value"):
            _require(raw.get(bad) is None,
                     f"{where}: interior node carries leaf payload {bad!r}")
        feature = _check_int(raw.get("feature"), f"{where}: feature", minimum=0)
        _require(feature < forest_meta["num_features"],
                 f"{where}: feature {feature} out of range "
                 f"(num_features={forest_meta['num_features']})")
        threshold = _check_real(raw.get("threshold"), f"{where}: threshold")
        return TreeNode(feature=feature, threshold=threshold,
                        left=_check_int(raw["left"], f"{where}: left"),
                        right=_check_int(raw["right"], f"{where}: right"),
                        cardinality=card)

    # Leaf: payload rules depend on task/kind.
    if task == "classify" and kind == "rf":
        label = raw.get("leaf_class")
        _require(label is not None, f"{where}: classification leaf needs leaf_class")
        label = _check_int(label, f"{where}: leaf_class", minimum=0)
        _require(label < forest_meta["num_classes"],
                 f"{where}: leaf_class {label} out of range "
                 f"(num_classes={forest_meta['num_classes']})")
        _require(raw.get("leaf_value") is None,
                 f"{where}: rf-classify leaf carries leaf_value")
        return TreeNode(leaf_class=label, leaf_count=leaf_count, cardinality=card)

    value = raw.get("leaf_value")
    _require(value is not None, f"{where}: leaf needs leaf_value")
    _require(raw.get("leaf_class") is None,
             f"{where}: value-carrying leaf also has leaf_class")
    return TreeNode(leaf_value=_check_real(value, f"{where}: leaf_value"),
                    leaf_count=leaf_count, cardinality=card)


def _parse_tree(raw: dict, tree_index: int, forest_meta: dict) -> Tree:
    where = f"tree {tree_index}"
    _require(isinstance(raw, dict), f"{where}: tree must be an object")
    _require("nodes" in raw and "root" in raw,
             f"{where}: tree needs 'nodes' and 'root'")
    nodes: dict[int, TreeNode] = {}
    for raw_node in raw["nodes"]:
        nid = _check_int(raw_node.get("id"), f"{where}: node id")
        _require(nid not in nodes, f"{where}: duplicate node id {nid}")
        nodes[nid] = _parse_node(raw_node, f"{where}, node {nid}", forest_meta)

    root = _check_int(raw["root"], f"{where}: root")
    _require(root in nodes, f"{where}: root {root} not among nodes")

    # Structure: every node reachable from the root exactly once, and no
    # node has two parents.
    seen: set[int] = set()
    stack = [root]
    while stack:
        nid = stack.pop()
        _require(nid in nodes, f"{where}: child reference {nid} does not exist")
        _require(nid not in seen,
                 f"{where}: node {nid} reachable twice (shared child or cycle)")
        seen.add(nid)
        node = nodes[nid]
        if not node.is_leaf:
            stack.append(node.left)
            stack.append(node.right)
    _require(len(seen) == len(nodes),
             f"{where}: {len(nodes) - len(seen)} nodes unreachable from root")
    return Tree(nodes=nodes, root=root)


def parse_model(json_document: bytes | str) -> Forest:
    """Parse and validate an interchange document into a Forest.

    Raises ModelParseError (with byte offset) on malformed JSON and
    ModelValidationError (naming the tree and node) on schema violations.
    Leaf cardinalities are taken from the document; interior cardinalities
    are left unset until ``annotate_cardinalities`` runs.
    """
    if isinstance(json_document, bytes):
        json_document = json_document.decode("utf-8")
    try:
        doc = json.loads(json_document)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"malformed JSON at byte {exc.pos}: {exc.msg}",
                              offset=exc.pos) from exc

    _require(isinstance(doc, dict), "document must be a JSON object")
    task = doc.get("task")
    _require(task in TASKS, f"task must be one of {TASKS}, got {task!r}")
    kind = doc.get("kind")
    _require(kind in KINDS, f"kind must be one of {KINDS}, got {kind!r}")
    num_features = _check_int(doc.get("num_features"), "num_features", minimum=1)

    num_classes = None
    if task == "classify":
        num_classes = _check_int(doc.get("num_classes"), "num_classes", minimum=1)
        if kind == "gbt":
            _require(num_classes == 2,
                     "gradient-boosted classification is binary only "
                     f"(num_classes={num_classes})")
    else:
        _require(doc.get("num_classes") in (None,),
                 "num_classes is only valid for task=classify")

    base_score = 0.0
    if doc.get("base_score") is not None:
        _require(kind == "gbt", "base_score is only valid for kind=gbt")
        base_score = _check_real(doc["base_score"], "base_score")

    raw_trees = doc.get("trees")
    _require(isinstance(raw_trees, list) and raw_trees,
             "document needs a non-empty 'trees' array")

    meta = {"task": task, "kind": kind, "num_features": num_features,
            "num_classes": num_classes}
    trees = tuple(_parse_tree(t, i, meta) for i, t in enumerate(raw_trees))
    return Forest(trees=trees, task=task, kind=kind, num_features=num_features,
                  num_classes=num_classes, base_score=base_score)


def annotate_cardinalities(forest: Forest) -> Forest:
    """Return a forest whose interior cardinalities are subtree sums of
    leaf cardinalities.  Leaves are unchanged; every leaf must carry a
    cardinality (or a leaf_count that stands in for it).
    """
    new_trees = []
    for ti, tree in enumerate(forest.trees):
        sums: dict[int, int] = {}
        # Children before parents: post-order without recursion.
        stack: list[tuple[int, bool]] = [(tree.root, False)]
        while stack:
            nid, expanded = stack.pop()
            node = tree.nodes[nid]
            if node.is_leaf:
                card = leaf_cardinality(node)
                if card is None:
                    raise ModelValidationError(
                        f"tree {ti}, leaf {nid}: missing cardinality")
                sums[nid] = card
            elif expanded:
                sums[nid] = sums[node.left] + sums[node.right]
            else:
                stack.append((nid, True))
                stack.append((node.left, False))
                stack.append((node.right, False))
        new_nodes = {
            nid: node if node.is_leaf else replace(node, cardinality=sums[nid])
            for nid, node in tree.nodes.items()
        }
        new_trees.append(Tree(nodes=new_nodes, root=tree.root))
    return replace(forest, trees=tuple(new_trees))


def forest_to_document(forest: Forest) -> dict:
    """Inverse of parse_model: emit the interchange dict for a Forest."""
    doc: dict = {"task": forest.task, "kind": forest.kind,
                 "num_features": forest.num_features}
    if forest.num_classes is not None:
        doc["num_classes"] = forest.num_classes
    if forest.kind == "gbt":
        doc["base_score"] = forest.base_score
    doc["trees"] = []
    for tree in forest.trees:
        nodes = []
        for nid in sorted(tree.nodes):
            node = tree.nodes[nid]
            raw: dict = {"id": nid}
            if node.is_leaf:
                if node.leaf_class is not None:
                    raw["leaf_class"] = node.leaf_class
                if node.leaf_value is not None:
                    raw["leaf_value"] = node.leaf_value
                if node.leaf_count is not None:
                    raw["leaf_count"] = node.leaf_count
            else:
                raw["feature"] = node.feature
                raw["threshold"] = node.threshold
                raw["left"] = node.left
                raw["right"] = node.right
            if node.cardinality is not None:
                raw["cardinality"] = node.cardinality
            nodes.append(raw)
        doc["trees"].append({"root": tree.root, "nodes": nodes})
    return doc
