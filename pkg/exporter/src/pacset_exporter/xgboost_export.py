"""XGBoost gbtree JSON dumps -> interchange JSON.

Input is the booster's native JSON model (``Booster.save_model("m.json")``
or the equivalent dict).  XGBoost routes left on ``x < t`` (float32), so
each threshold is stepped down one float32 ulp to express the same region
as ``x <= t'``; exact whenever feature values are float32.  Per-node cover
(sum_hessian) rounds to the integer cardinality - packing only compares
cardinalities, so the weighting survives rounding.

Objectives: ``reg:*`` keep base_score as the additive offset;
``binary:logistic`` stores base_score in probability space, so it is
converted to the margin-space offset log(p / (1-p)).  Multiclass
objectives and gblinear boosters are rejected.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import ExportError, ExportReport


def _as_dict(booster_dump) -> dict:
    if isinstance(booster_dump, (bytes, bytearray)):
        return json.loads(booster_dump.decode("utf-8"))
    if isinstance(booster_dump, str):
        return json.loads(booster_dump)
    return booster_dump


def _step_below(threshold: float) -> float:
    """Largest float32 strictly below the (float32) threshold."""
    t32 = np.float32(threshold)
    return float(np.nextafter(t32, np.float32(-np.inf)))


def export_xgboost(booster_dump) -> tuple[dict, ExportReport]:
    """Export a gbtree model dump; returns (document, report)."""
    dump = _as_dict(booster_dump)
    try:
        learner = dump["learner"]
        booster_name = learner["gradient_booster"]["name"]
        model = learner["gradient_booster"]["model"]
        params = learner["learner_model_param"]
        objective = learner["objective"]["name"]
    except (KeyError, TypeError) as exc:
        raise ExportError(f"not an XGBoost JSON model dump: missing {exc}")

    if booster_name != "gbtree":
        raise ExportError(f"unsupported booster {booster_name!r}; "
                          "only gbtree models export")
    num_class = int(params.get("num_class", "0"))
    if num_class not in (0, 1, 2):
        raise ExportError(f"multiclass objectives are unsupported "
                          f"(num_class={num_class})")

    base_score = float(params["base_score"])
    if objective.startswith("binary:logistic"):
        task = "classify"
        if not 0.0 < base_score < 1.0:
            raise ExportError(f"logistic base_score {base_score} outside (0,1)")
        base_margin = math.log(base_score / (1.0 - base_score))
    elif objective.startswith(("reg:", "count:")):
        task = "regress"
        base_margin = base_score
    else:
        raise ExportError(f"unsupported objective {objective!r}")

    doc: dict = {"task": task, "kind": "gbt",
                 "num_features": int(params["num_feature"]),
                 "base_score": base_margin}
    if task == "classify":
        doc["num_classes"] = 2

    report = ExportReport()
    doc["trees"] = []
    for ti, tree in enumerate(model["trees"]):
        left = tree["left_children"]
        right = tree["right_children"]
        conditions = tree["split_conditions"]
        indices = tree["split_indices"]
        cover = tree["sum_hessian"]
        nodes = []
        for nid in range(len(left)):
            raw: dict = {"id": nid,
                         "cardinality": int(round(float(cover[nid])))}
            if left[nid] < 0:
                raw["leaf_value"] = float(conditions[nid])
                raw["leaf_count"] = raw["cardinality"]
            else:
                raw.update(feature=int(indices[nid]),
                           threshold=_step_below(float(conditions[nid])),
                           left=int(left[nid]), right=int(right[nid]))
            nodes.append(raw)
        doc["trees"].append({"root": 0, "nodes": nodes})
        report.trees_exported += 1
        report.total_nodes += len(nodes)
    return doc, report
