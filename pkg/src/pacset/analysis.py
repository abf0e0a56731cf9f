"""I/O-counting evaluation: unique-block distributions, layout comparisons,
bin-depth sweeps, and KV bucket-size sweeps, on synthetic workloads.

Synthetic forests are complete binary trees whose thresholds are placed in
the cumulative-mass domain of a uniform feature distribution: every split
hands a chosen fraction of its parent's probability mass to one child
(one half each for the "uniform" skew, a heavy fraction on a random side
for "geometric").  Leaf cardinalities are the resulting path masses scaled
to a population total, so drawing observations uniformly at random hits
every tree's leaves in proportion to their cardinality: an in-distribution
workload for the whole ensemble at once, with no per-tree path sampling.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field

import numpy as np

from .blockstore import FileBlockStore, KvBlockStore, KvStoreConfig, _BaseStore
from .codec import encode
from .errors import ConfigError, ModelValidationError
from .inference import infer_batch
from .layout import LayoutConfig, LAYOUTS, PackedModel, as_f32, pack
from .model import Forest, Tree, TreeNode, annotate_cardinalities

__all__ = ["WorkloadSpec", "IoReport", "count_io", "compare_layouts",
           "sweep_bin_depth", "sweep_kv_bucket", "generate_synthetic_forest",
           "sample_observations", "read_observations"]


# --------------------------------------------------------------------------
# Workloads
# --------------------------------------------------------------------------

def sample_observations(num_features: int, count: int, seed: int) -> list[tuple]:
    """Seed-deterministic feature vectors, uniform on [0, 1)^num_features.

    For forests built by generate_synthetic_forest this is in-distribution
    traffic: path probabilities equal the leaf-cardinality fractions.
    """
    rng = np.random.default_rng(seed)
    return [tuple(row) for row in rng.random((count, num_features)).tolist()]


def read_observations(path: str) -> list[tuple]:
    """Load observations from CSV (optional header) or a JSON array of arrays."""
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            rows = json.load(fh)
        return [tuple(float(v) for v in row) for row in rows]
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                out.append(tuple(float(v) for v in row))
            except ValueError:
                if i == 0:
                    continue  # header row
                raise ModelValidationError(f"non-numeric value in row {i}")
    return out


@dataclass(frozen=True, slots=True)
class WorkloadSpec:
    """Observation source for an evaluation run.

    With no ``source`` file, ``repetitions`` observations are drawn from the
    seeded synthetic sampler.  ``cold_start`` drops the block cache between
    inferences, which is the latency regime the counts are meant to model.
    """

    source: str | None = None
    repetitions: int = 100
    seed: int = 0
    cold_start: bool = True

    def observations(self, num_features: int) -> list[tuple]:
        if self.source is not None:
            return read_observations(self.source)
        return sample_observations(num_features, self.repetitions, self.seed)


# --------------------------------------------------------------------------
# I/O counting
# --------------------------------------------------------------------------

@dataclass(slots=True)
class IoReport:
    layout: str
    observations: int
    min_blocks: int
    mean_blocks: float
    median_blocks: float
    p95_blocks: float
    max_blocks: int
    cumulative_unique: int
    total_body_blocks: int
    config: dict
    counts: tuple[int, ...] = field(repr=False, default=())

    def to_dict(self, include_counts: bool = False) -> dict:
        out = {"layout": self.layout, "observations": self.observations,
               "min": self.min_blocks, "mean": self.mean_blocks,
               "median": self.median_blocks, "p95": self.p95_blocks,
               "max": self.max_blocks,
               "cumulative_unique": self.cumulative_unique,
               "total_body_blocks": self.total_body_blocks,
               "config": self.config}
        if include_counts:
            out["counts"] = list(self.counts)
        return out


def as_store(packed, cold_start: bool = True) -> _BaseStore:
    if isinstance(packed, _BaseStore):
        return packed
    if isinstance(packed, PackedModel):
        packed = encode(packed)
    return FileBlockStore(packed, cold_start=cold_start)


def _run_workload(store: _BaseStore, workload: WorkloadSpec):
    obs = workload.observations(store.header.num_features)
    predictions, traces = infer_batch(store, obs)
    return obs, predictions, traces


def _report(store: _BaseStore, workload: WorkloadSpec, traces) -> IoReport:
    counts = [t.unique_count for t in traces]
    union: set[int] = set()
    for t in traces:
        union.update(t.fetched)
    arr = np.asarray(counts)
    h = store.header
    return IoReport(
        layout=h.layout, observations=len(counts),
        min_blocks=int(arr.min()), mean_blocks=float(arr.mean()),
        median_blocks=float(np.median(arr)),
        p95_blocks=float(np.percentile(arr, 95)), max_blocks=int(arr.max()),
        cumulative_unique=len(union),
        total_body_blocks=store.total_slots // h.nodes_per_block,
        config={"layout": h.layout, "block_bytes": h.block_bytes,
                "bin_depth": h.bin_depth, "trees_per_bin": h.trees_per_bin,
                "num_trees": h.num_trees, "cold_start": workload.cold_start,
                "seed": workload.seed, "repetitions": workload.repetitions},
        counts=tuple(counts))


def count_io(packed, workload: WorkloadSpec) -> IoReport:
    """Unique blocks fetched per inference over the whole ensemble."""
    store = as_store(packed, cold_start=workload.cold_start)
    _, _, traces = _run_workload(store, workload)
    return _report(store, workload, traces)


def compare_layouts(forest: Forest, cfg: LayoutConfig, workload: WorkloadSpec,
                    layouts: tuple[str, ...] = LAYOUTS):
    """Pack the forest under each layout and count I/O on the same workload.

    Returns (reports, predictions), both keyed by layout name.  Predictions
    must agree across layouts; callers can assert or display that.
    """
    forest = annotate_cardinalities(forest)
    reports: dict[str, IoReport] = {}
    predictions: dict[str, list] = {}
    for name in layouts:
        variant = LayoutConfig(layout=name, block_bytes=cfg.block_bytes,
                               bin_depth=cfg.bin_depth,
                               trees_per_bin=cfg.trees_per_bin)
        store = as_store(pack(forest, variant), cold_start=workload.cold_start)
        _, preds, traces = _run_workload(store, workload)
        reports[name] = _report(store, workload, traces)
        predictions[name] = preds
    return reports, predictions


def sweep_bin_depth(forest: Forest, depths, workload: WorkloadSpec,
                    block_bytes: int = 65536,
                    layout: str = "bin_block_wdfs") -> dict:
    """Per-depth unique-block distributions with auto-shrinking bin width.

    Flags the depth with the lowest mean and the one with the lowest
    variance.  Depths whose single-tree bin exceeds one block raise
    ConfigError.
    """
    forest = annotate_cardinalities(forest)
    entries = []
    for depth in depths:
        cfg = LayoutConfig(layout=layout, block_bytes=block_bytes,
                           bin_depth=depth, trees_per_bin="auto")
        tpb = cfg.resolve_trees_per_bin(len(forest.trees))
        report = count_io(pack(forest, cfg), workload)
        variance = (statistics.pvariance(report.counts)
                    if len(report.counts) > 1 else 0.0)
        entries.append({"bin_depth": depth, "trees_per_bin": tpb,
                        "mean": report.mean_blocks,
                        "variance": variance,
                        "median": report.median_blocks,
                        "p95": report.p95_blocks,
                        "min": report.min_blocks, "max": report.max_blocks})
    best_mean = min(entries, key=lambda e: (e["mean"], e["bin_depth"]))
    best_var = min(entries, key=lambda e: (e["variance"], e["bin_depth"]))
    return {"layout": layout, "block_bytes": block_bytes, "entries": entries,
            "best_mean_depth": best_mean["bin_depth"],
            "best_variance_depth": best_var["bin_depth"]}


def sweep_kv_bucket(packed, sizes, workload: WorkloadSpec) -> dict:
    """Fetch count / bytes / useful-fraction trade-off across bucket sizes.

    ``sizes`` entries are node counts per key/value pair, or "all" for a
    single bucket spanning the whole body.  Runs with the per-inference
    cache enabled so the fetch count per observation equals the unique
    buckets its paths touch.
    """
    if isinstance(packed, PackedModel):
        packed = encode(packed)
    entries = []
    for size in sizes:
        if size == "all":
            probe = KvBlockStore(packed, KvStoreConfig(nodes_per_value=1))
            npv = probe.total_slots
        else:
            npv = int(size)
            if npv < 1:
                raise ConfigError(f"bucket size must be positive, got {size}")
        store = KvBlockStore(packed, KvStoreConfig(
            nodes_per_value=npv, per_inference_cache=True),
            cold_start=workload.cold_start)
        _, _, traces = _run_workload(store, workload)
        fetches = sum(len(t.fetched) for t in traces)
        transferred = sum(t.bytes_transferred for t in traces)
        useful = sum(t.nodes_read for t in traces) * 32
        entries.append({
            "nodes_per_value": npv, "label": str(size),
            "fetches_total": fetches,
            "fetches_mean": fetches / max(1, len(traces)),
            "bytes_transferred": transferred,
            "useful_fraction": useful / transferred if transferred else 0.0,
        })
    return {"entries": entries}


# --------------------------------------------------------------------------
# Synthetic forests
# --------------------------------------------------------------------------

def generate_synthetic_forest(seed: int, num_trees: int, depth: int,
                              skew: str = "geometric", task: str = "classify",
                              kind: str = "rf", num_features: int = 16,
                              num_classes: int = 10,
                              total_weight: int = 100_000,
                              heavy_fraction: float = 0.8) -> Forest:
    """Deterministic complete-tree forest with skew-controlled cardinalities.

    ``uniform`` splits each node's probability mass in half, so all 2^depth
    leaves land within +-1 of total_weight / 2^depth.  ``geometric`` hands
    ``heavy_fraction`` of the mass to a random side at every split, so
    sorted leaf cardinalities decay geometrically.
    """
    if skew not in ("uniform", "geometric"):
        raise ConfigError(f"unknown skew {skew!r}")
    if depth < 1 or num_trees < 1 or num_features < 1:
        raise ConfigError("num_trees, depth and num_features must be positive")
    rng = np.random.default_rng(seed)
    trees = tuple(
        _build_synthetic_tree(rng, depth, num_features, skew, heavy_fraction,
                              total_weight, task, kind, num_classes)
        for _ in range(num_trees))
    base = float(as_f32(rng.uniform(-0.5, 0.5))) if kind == "gbt" else 0.0
    return Forest(trees=trees, task=task, kind=kind, num_features=num_features,
                  num_classes=num_classes if task == "classify" else None,
                  base_score=base)


def _build_synthetic_tree(rng, depth, num_features, skew, heavy, total,
                          task, kind, num_classes) -> Tree:
    nodes: dict[int, TreeNode] = {}
    counter = [0]
    value_leaves = not (task == "classify" and kind == "rf")

    def build(level: int, intervals: list[tuple[float, float]],
              mass: float) -> int:
        nid = counter[0]
        counter[0] += 1
        if level == depth:
            card = int(round(mass * total))
            if value_leaves:
                nodes[nid] = TreeNode(
                    leaf_value=as_f32(rng.uniform(-1.0, 1.0)),
                    leaf_count=card, cardinality=card)
            else:
                nodes[nid] = TreeNode(leaf_class=int(rng.integers(num_classes)),
                                      cardinality=card)
            return nid
        feat = int(rng.integers(num_features))
        for _ in range(8):
            if intervals[feat][1] - intervals[feat][0] > 1e-4:
                break
            feat = int(rng.integers(num_features))
        lo, hi = intervals[feat]
        if skew == "uniform":
            thr = as_f32((lo + hi) / 2.0)
        else:
            frac = heavy if rng.integers(2) else 1.0 - heavy
            thr = as_f32(lo + (hi - lo) * frac)
        if not lo < thr < hi:
            thr = as_f32((lo + hi) / 2.0)
        frac_left = (thr - lo) / (hi - lo)
        left_iv = list(intervals)
        left_iv[feat] = (lo, thr)
        right_iv = list(intervals)
        right_iv[feat] = (thr, hi)
        left = build(level + 1, left_iv, mass * frac_left)
        right = build(level + 1, right_iv, mass * (1.0 - frac_left))
        nodes[nid] = TreeNode(feature=feat, threshold=thr, left=left,
                              right=right)
        return nid

    root = build(0, [(0.0, 1.0)] * num_features, 1.0)
    return Tree(nodes=nodes, root=root)
