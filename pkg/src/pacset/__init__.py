"""pacset: I/O-optimized serialization and selective-access inference for
tree ensembles.

Typical flow: parse an interchange JSON model, annotate cardinalities,
pack it under a block-aware layout, encode to a .pac file, then run
inference straight off a block store while counting the blocks touched.
"""

from .analysis import (IoReport, WorkloadSpec, compare_layouts, count_io,
                       generate_synthetic_forest, sample_observations,
                       sweep_bin_depth, sweep_kv_bucket)
from .blockstore import (FileBlockStore, IoTrace, KvBlockStore, KvStoreConfig,
                         fetch, open_file_store, open_kv_store)
from .codec import decode, encode
from .errors import (BlockRangeError, CapacityError, ConfigError,
                     CorruptionError, FormatError, IntegrityError,
                     ModelParseError, ModelValidationError, PacsetError)
from .inference import infer_batch, infer_one
from .layout import (LAYOUTS, LayoutConfig, NodeRecord, PackedHeader,
                     PackedModel, build_bins, pack, pack_bfs, pack_dfs,
                     pack_wdfs)
from .model import (Forest, Tree, TreeNode, annotate_cardinalities,
                    forest_to_document, parse_model)
from .reference import Prediction, aggregate, predict

__version__ = "0.1.0"

__all__ = [
    "Forest", "Tree", "TreeNode", "parse_model", "annotate_cardinalities",
    "forest_to_document",
    "LayoutConfig", "PackedModel", "PackedHeader", "NodeRecord", "LAYOUTS",
    "pack", "pack_bfs", "pack_dfs", "pack_wdfs", "build_bins",
    "encode", "decode",
    "FileBlockStore", "KvBlockStore", "KvStoreConfig", "IoTrace",
    "open_file_store", "open_kv_store", "fetch",
    "infer_one", "infer_batch", "Prediction", "predict", "aggregate",
    "WorkloadSpec", "IoReport", "count_io", "compare_layouts",
    "sweep_bin_depth", "sweep_kv_bucket", "generate_synthetic_forest",
    "sample_observations",
    "PacsetError", "ModelParseError", "ModelValidationError", "ConfigError",
    "CapacityError", "FormatError", "CorruptionError", "BlockRangeError",
    "IntegrityError",
]
