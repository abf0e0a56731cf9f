"""Inference directly against a block store, with per-inference I/O traces.

Each tree is entered at its bin slot (or, for binless layouts, at its root
position from the header) and walked by threshold comparisons: left iff
x[feature] <= threshold.  Child references are followed until an inlined
class label or a leaf record terminates the path.  Every block touched on
the way is recorded in the observation's trace.

``per_bin_parallel`` evaluates each bin's trees in its own thread with an
isolated cold session, then merges per-bin partial aggregates in fixed bin
order; because sequential mode reduces with the same grouping, the two
modes produce bit-identical predictions.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .blockstore import IoTrace, StoreSession, _BaseStore
from .errors import ConfigError, CorruptionError, ModelValidationError
from .layout import FLAG_SENTINEL, INLINE_BIT, REF_NONE
from .reference import Prediction, aggregate_outputs

__all__ = ["infer_one", "infer_batch", "prediction_to_json"]

_LABEL_MASK = INLINE_BIT - 1


def thread_cap(wanted: int) -> int:
    env = os.environ.get("PACSET_THREADS")
    if env:
        try:
            return max(1, min(wanted, int(env)))
        except ValueError:
            raise ConfigError(f"PACSET_THREADS must be an integer, got {env!r}")
    return max(1, min(wanted, os.cpu_count() or 1))


def _tree_output(session: StoreSession, x, pos: int, classify_rf: bool):
    read = session.read_node
    while True:
        feature, threshold, left, right, _card, value, flags, _lc = read(pos)
        if flags:
            if flags & FLAG_SENTINEL:
                raise CorruptionError(f"traversal hit sentinel at position {pos}")
            if classify_rf:
                return left & _LABEL_MASK  # root-leaf label rides in left
            return value
        ref = left if x[feature] <= threshold else right
        if ref == REF_NONE:
            raise CorruptionError(f"dangling child reference at position {pos}")
        if ref & INLINE_BIT:
            if not classify_rf:
                raise CorruptionError(
                    f"inline class reference in a value model at position {pos}")
            return ref & _LABEL_MASK
        pos = ref


def _check_observation(store: _BaseStore, obs) -> None:
    if len(obs) != store.header.num_features:
        raise ModelValidationError(
            f"observation has {len(obs)} features, model expects "
            f"{store.header.num_features}")


def _bin_sizes(store: _BaseStore) -> list[int]:
    if store.directory:
        return [e.tree_count for e in store.directory]
    return [store.header.num_trees]


def _aggregate(store: _BaseStore, outputs) -> Prediction:
    h = store.header
    return aggregate_outputs(h.task, h.kind, h.num_classes, h.base_score,
                             h.num_trees, outputs, _bin_sizes(store))


def infer_one(store: _BaseStore, obs,
              session: StoreSession | None = None) -> tuple[Prediction, IoTrace]:
    """Classify/score one observation; returns the prediction and its trace."""
    _check_observation(store, obs)
    h = store.header
    classify_rf = h.task == "classify" and h.kind == "rf"
    sess = session if session is not None else store.session()
    sess.start_epoch()
    entry = store.entry_position
    outputs = [_tree_output(sess, obs, entry(t), classify_rf)
               for t in range(h.num_trees)]
    trace = sess.finish_epoch()
    return _aggregate(store, outputs), trace


def _run_bin(store: _BaseStore, first_tree: int, tree_count: int, obs,
             classify_rf: bool):
    sess = store.session(cold_start=True)
    sess.start_epoch()
    outputs = [_tree_output(sess, obs, store.entry_position(t), classify_rf)
               for t in range(first_tree, first_tree + tree_count)]
    trace = sess.finish_epoch()
    return outputs, trace


def infer_batch(store: _BaseStore, observations, mode: str = "sequential"):
    """Run a batch; returns (predictions, traces) aligned with the input.

    Modes: "sequential" reuses one session across observations (so a warm
    store keeps its cache); "per_bin_parallel" evaluates bins concurrently
    with isolated cold sessions and merges deterministically.
    """
    h = store.header
    if mode == "sequential":
        sess = store.session()
        predictions, traces = [], []
        for obs in observations:
            pred, trace = infer_one(store, obs, session=sess)
            predictions.append(pred)
            traces.append(trace)
        return predictions, traces

    if mode != "per_bin_parallel":
        raise ConfigError(f"unknown batch mode {mode!r}")

    classify_rf = h.task == "classify" and h.kind == "rf"
    if store.directory:
        groups = [(e.first_tree, e.tree_count) for e in store.directory]
    else:
        groups = [(0, h.num_trees)]
    predictions, traces = [], []
    with ThreadPoolExecutor(max_workers=thread_cap(len(groups))) as pool:
        for obs in observations:
            _check_observation(store, obs)
            futures = [pool.submit(_run_bin, store, ft, tc, obs, classify_rf)
                       for ft, tc in groups]
            outputs: list = []
            fetched: list[int] = []
            nodes = 0
            for future in futures:  # fixed bin order
                bin_outputs, bin_trace = future.result()
                outputs.extend(bin_outputs)
                fetched.extend(bin_trace.fetched)
                nodes += bin_trace.nodes_read
            predictions.append(_aggregate(store, outputs))
            traces.append(IoTrace(fetched=tuple(fetched),
                                  unique_count=len(set(fetched)),
                                  bytes_transferred=len(fetched) * store.unit_bytes,
                                  nodes_read=nodes))
    return predictions, traces


def prediction_to_json(obs_index: int, pred: Prediction,
                       trace: IoTrace | None = None) -> dict:
    out: dict = {"obs": obs_index}
    if pred.label is not None:
        out["label"] = pred.label
    if pred.value is not None:
        out["value"] = pred.value
    if pred.votes is not None:
        out["votes"] = list(pred.votes)
    if pred.score is not None:
        out["score"] = pred.score
    if trace is not None:
        out["unique_blocks"] = trace.unique_count
    return out
