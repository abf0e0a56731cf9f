"""scikit-learn random forests -> interchange JSON.

scikit-learn already splits with `x <= threshold`, so thresholds pass
through unchanged; a warning is recorded for any threshold that would lose
precision when the packer narrows it to 32-bit. Leaf cardinalities come
from the fitted trees' per-node sample counts. Classifier leaves export
the class *index* (position in ``model.classes_``).
"""

from __future__ import annotations

import struct

import numpy as np

from . import ExportError, ExportReport

_F32 = struct.Struct("<f")


def _loses_f32_precision(x: float) -> bool:
    return _F32.unpack(_F32.pack(x))[0] != x


def _tree_nodes(tree, is_classifier: bool, counts, report: ExportReport,
                tree_index: int) -> list[dict]:
    left = tree.children_left
    right = tree.children_right
    nodes = []
    lossy = 0
    for nid in range(tree.node_count):
        card = int(counts[nid])
        raw: dict = {"id": nid, "cardinality": card}
        if left[nid] < 0:  # leaf
            if is_classifier:
                raw["leaf_class"] = int(np.argmax(tree.value[nid, 0]))
            else:
                raw["leaf_value"] = float(tree.value[nid, 0, 0])
                raw["leaf_count"] = card
        else:
            threshold = float(tree.threshold[nid])
            if _loses_f32_precision(threshold):
                lossy += 1
            raw.update(feature=int(tree.feature[nid]), threshold=threshold,
                       left=int(left[nid]), right=int(right[nid]))
        nodes.append(raw)
    if lossy:
        report.warnings.append(
            f"tree {tree_index}: {lossy} thresholds lose precision at 32-bit")
    return nodes


def export_sklearn(model, sample_counts=None) -> tuple[dict, ExportReport]:
    """Export a fitted RandomForestClassifier/Regressor.

    ``sample_counts`` optionally overrides the per-node training counts:
    one array per tree, indexed by sklearn node id.  Returns the
    interchange document and an ExportReport.
    """
    from sklearn.ensemble import (RandomForestClassifier,
                                  RandomForestRegressor)
    from sklearn.exceptions import NotFittedError
    from sklearn.utils.validation import check_is_fitted

    if not isinstance(model, (RandomForestClassifier, RandomForestRegressor)):
        raise ExportError(f"unsupported model type {type(model).__name__}; "
                          "expected RandomForestClassifier/Regressor")
    try:
        check_is_fitted(model)
    except NotFittedError as exc:
        raise ExportError("model is not fitted") from exc
    if model.n_outputs_ != 1:
        raise ExportError(f"multi-output models are unsupported "
                          f"(n_outputs={model.n_outputs_})")

    is_classifier = isinstance(model, RandomForestClassifier)
    doc: dict = {"task": "classify" if is_classifier else "regress",
                 "kind": "rf", "num_features": int(model.n_features_in_)}
    if is_classifier:
        doc["num_classes"] = int(model.n_classes_)

    report = ExportReport()
    doc["trees"] = []
    for ti, estimator in enumerate(model.estimators_):
        tree = estimator.tree_
        counts = (sample_counts[ti] if sample_counts is not None
                  else tree.n_node_samples)
        nodes = _tree_nodes(tree, is_classifier, counts, report, ti)
        doc["trees"].append({"root": 0, "nodes": nodes})
        report.trees_exported += 1
        report.total_nodes += len(nodes)
    return doc, report
