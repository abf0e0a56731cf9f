"""Packing: arrange ensemble nodes into a block-aware linear array.

Five layouts are supported:

  bfs             per-tree level order, trees back to back
  dfs             per-tree preorder, trees back to back
  bin_dfs         interleaved bins for the top levels, residuals in preorder
  bin_wdfs        bins + weighted preorder (heavier-cardinality child first)
  bin_block_wdfs  bins + weighted preorder that halts at every block
                  boundary and restarts from the heaviest available node

An interleaved bin stripes the top ``bin_depth`` levels of ``trees_per_bin``
trees level by level, so one block holds the prefix of every path through
those trees.  Node slots inside a bin are addressed arithmetically:
the node at heap index h (level-order index, root = 0) of the bin's
tree-slot t lives at bin_base + h*T + t, and its children sit at heap
indices 2h+1 and 2h+2.  Missing nodes leave sentinel-padded slots so the
stride is uniform.

Classification-forest leaves (rf only) are not stored: the parent's child
reference carries the class label inline.  A single-node tree has no
parent to inline into, so its root leaf is stored as an explicit record.
Value-carrying leaves (regression, and gbt for either task) are stored as
records and take part in the weighted ordering with their own cardinality.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field

from .errors import CapacityError, ConfigError, ModelValidationError
from .model import Forest, Tree, TreeNode, leaf_cardinality

NODE_BYTES = 32
LAYOUTS = ("bfs", "dfs", "bin_dfs", "bin_wdfs", "bin_block_wdfs")
BIN_LAYOUTS = ("bin_dfs", "bin_wdfs", "bin_block_wdfs")

FLAG_LEAF = 1
FLAG_SENTINEL = 2
INLINE_BIT = 1 << 31
REF_NONE = 0xFFFFFFFF
MAX_POSITION = (1 << 31) - 1

_F32 = struct.Struct("<f")


def as_f32(x: float) -> float:
    """Round to the nearest binary32 value (records store 32-bit floats)."""
    return _F32.unpack(_F32.pack(x))[0]


@dataclass(frozen=True, slots=True)
class LayoutConfig:
    layout: str = "bin_block_wdfs"
    block_bytes: int = 65536
    bin_depth: int = 2
    trees_per_bin: int | str = "auto"

    def validate(self) -> None:
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}; "
                              f"expected one of {LAYOUTS}")
        bb = self.block_bytes
        if bb < NODE_BYTES or bb & (bb - 1):
            raise ConfigError(f"block_bytes must be a power of two >= "
                              f"{NODE_BYTES}, got {bb}")
        if self.uses_bins:
            if self.bin_depth < 1:
                raise ConfigError("bin_depth must be >= 1")
            if self.trees_per_bin != "auto":
                if not isinstance(self.trees_per_bin, int) or self.trees_per_bin < 1:
                    raise ConfigError("trees_per_bin must be a positive integer "
                                      "or 'auto'")

    @property
    def uses_bins(self) -> bool:
        return self.layout in BIN_LAYOUTS

    @property
    def nodes_per_block(self) -> int:
        return self.block_bytes // NODE_BYTES

    def resolve_trees_per_bin(self, num_trees: int) -> int:
        """Resolve 'auto' to the largest T whose bin fits one block,
        capped at the forest size; reject configurations whose bin region
        cannot hold even a single tree."""
        slots_per_tree = (1 << self.bin_depth) - 1
        fit = self.block_bytes // (slots_per_tree * NODE_BYTES)
        if fit < 1:
            raise ConfigError(
                f"bin of depth {self.bin_depth} needs {slots_per_tree} slots "
                f"per tree and does not fit a {self.block_bytes}-byte block")
        if self.trees_per_bin == "auto":
            return min(fit, num_trees)
        t = self.trees_per_bin
        if t * slots_per_tree * NODE_BYTES > self.block_bytes:
            raise ConfigError(
                f"bin region of {t} trees x {slots_per_tree} slots exceeds "
                f"one {self.block_bytes}-byte block")
        return t


@dataclass(frozen=True, slots=True)
class NodeRecord:
    """Fixed 32-byte on-disk node. Field order matches the wire format:
    feature u32, threshold f32, left u32, right u32, cardinality u32,
    value f32, flags u32, leaf_count u32."""

    feature: int
    threshold: float
    left: int
    right: int
    cardinality: int
    value: float
    flags: int
    leaf_count: int

    @property
    def is_leaf(self) -> bool:
        return bool(self.flags & FLAG_LEAF)

    @property
    def is_sentinel(self) -> bool:
        return bool(self.flags & FLAG_SENTINEL)


SENTINEL_RECORD = NodeRecord(feature=0, threshold=0.0, left=REF_NONE,
                             right=REF_NONE, cardinality=0, value=0.0,
                             flags=FLAG_SENTINEL, leaf_count=0)


@dataclass(frozen=True, slots=True)
class BinEntry:
    first_block: int     # body-relative block index of the bin's block
    first_tree: int
    tree_count: int


@dataclass(frozen=True, slots=True)
class PackedHeader:
    task: str
    kind: str
    layout: str
    block_bytes: int
    bin_depth: int
    trees_per_bin: int
    num_trees: int
    num_classes: int          # 0 for regression
    num_features: int
    base_score: float
    num_bins: int
    residual_region_block: int  # body-relative block where residuals begin

    @property
    def nodes_per_block(self) -> int:
        return self.block_bytes // NODE_BYTES


@dataclass(slots=True)
class PackedModel:
    """Linear node array plus the geometry needed to navigate it.

    ``records`` is indexed by node position: one slot per NODE_BYTES of the
    file body, None where the body holds zero padding (bin-block tails and
    the final partial residual block). ``positions`` maps (tree_index,
    node_id) to the node's slot and is rebuilt only by pack(), never by
    decode(); it is excluded from structural equality.
    """

    header: PackedHeader
    records: list[NodeRecord | None]
    bin_directory: list[BinEntry]
    residual_roots: list[list[int]]
    positions: dict[tuple[int, int], int] | None = field(default=None, compare=False)

    @property
    def num_body_blocks(self) -> int:
        return len(self.records) // self.header.nodes_per_block

    @property
    def residual_base(self) -> int:
        return self.header.num_bins * self.header.nodes_per_block

    def residual_record_count(self) -> int:
        count = 0
        for rec in self.records[self.residual_base:]:
            if rec is None:
                break
            count += 1
        return count

    def block_of(self, position: int) -> int:
        return position // self.header.nodes_per_block


def node_weight(tree: Tree, nid: int) -> int:
    node = tree.nodes[nid]
    card = leaf_cardinality(node) if node.is_leaf else node.cardinality
    if card is None:
        raise ModelValidationError(
            f"node {nid} has no cardinality; annotate the forest before packing")
    return card


def _is_stored(forest: Forest, node: TreeNode, is_root: bool) -> bool:
    """Whether a node gets a record of its own (inlined leaves do not)."""
    if not node.is_leaf:
        return True
    if not forest.inlines_leaves:
        return True
    return is_root


def _node_depths(tree: Tree) -> dict[int, int]:
    depths = {tree.root: 0}
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if not node.is_leaf:
            depths[node.left] = depths[nid] + 1
            depths[node.right] = depths[nid] + 1
            stack.append(node.left)
            stack.append(node.right)
    return depths


def _weighted_children(tree: Tree, nid: int) -> tuple[int, int]:
    """Children in visit order: heavier cardinality first, ties left-first."""
    node = tree.nodes[nid]
    if node_weight(tree, node.right) > node_weight(tree, node.left):
        return node.right, node.left
    return node.left, node.right


def _bin_heap_map(tree: Tree, depth: int) -> dict[int, int]:
    """Map heap index (level-order position, root=0) -> node id for the top
    ``depth`` levels.  Absent positions (below leaves) are simply missing."""
    heap: dict[int, int] = {0: tree.root}
    last_interior = (1 << (depth - 1)) - 1  # first heap index of the last level
    for h in range(last_interior):
        nid = heap.get(h)
        if nid is None:
            continue
        node = tree.nodes[nid]
        if not node.is_leaf:
            heap[2 * h + 1] = node.left
            heap[2 * h + 2] = node.right
    return heap


# --------------------------------------------------------------------------
# Emission orders
# --------------------------------------------------------------------------

def _bfs_order(forest: Forest, tree: Tree) -> list[int]:
    order = []
    queue = [tree.root]
    qi = 0
    while qi < len(queue):
        nid = queue[qi]
        qi += 1
        node = tree.nodes[nid]
        if _is_stored(forest, node, nid == tree.root):
            order.append(nid)
        if not node.is_leaf:
            queue.append(node.left)
            queue.append(node.right)
    return order


def _dfs_order(forest: Forest, tree: Tree) -> list[int]:
    order = []
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if _is_stored(forest, node, nid == tree.root):
            order.append(nid)
        if not node.is_leaf:
            stack.append(node.right)
            stack.append(node.left)
    return order


def _residual_preorder(forest: Forest, tree: Tree, depths: dict[int, int],
                       bin_depth: int, weighted: bool) -> list[int]:
    """Preorder from the tree root, emitting only nodes below the bin.

    The walk starts at the root (not at the residual roots) so that sibling
    subtrees under a heavy shared ancestor stay adjacent; bin nodes steer
    the descent but are not emitted.
    """
    order = []
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if depths[nid] >= bin_depth and _is_stored(forest, node, nid == tree.root):
            order.append(nid)
        if not node.is_leaf:
            if weighted:
                first, second = _weighted_children(tree, nid)
            else:
                first, second = node.left, node.right
            stack.append(second)
            stack.append(first)
    return order


def _block_aligned_order(forest: Forest, residual_roots: list[list[int]],
                         nodes_per_block: int) -> list[tuple[int, int]]:
    """Global weighted preorder with a frontier reset at every block boundary.

    The frontier holds every unemitted stored node whose parent is emitted
    or lives in a bin.  Each run starts at the frontier maximum (ties:
    smallest tree id, then smallest node id) and emits a weighted preorder
    until either the subtree is exhausted or the current block fills; at a
    block boundary the run's pending nodes return to the frontier so the
    next block again starts with the globally heaviest available node.
    """
    frontier: list[tuple[int, int, int]] = []
    for ti, roots in enumerate(residual_roots):
        tree = forest.trees[ti]
        for nid in roots:
            heapq.heappush(frontier, (-node_weight(tree, nid), ti, nid))

    order: list[tuple[int, int]] = []
    while frontier:
        _, ti, start = heapq.heappop(frontier)
        tree = forest.trees[ti]
        stack = [start]
        while stack:
            nid = stack.pop()
            order.append((ti, nid))
            node = tree.nodes[nid]
            if not node.is_leaf:
                first, second = _weighted_children(tree, nid)
                if _is_stored(forest, tree.nodes[second], False):
                    stack.append(second)
                if _is_stored(forest, tree.nodes[first], False):
                    stack.append(first)
            if stack and len(order) % nodes_per_block == 0:
                # Block boundary mid-run: suspend, return work to the frontier.
                for pending in stack:
                    heapq.heappush(
                        frontier, (-node_weight(tree, pending), ti, pending))
                stack = []
    return order


# --------------------------------------------------------------------------
# Bin construction
# --------------------------------------------------------------------------

def build_bins(forest: Forest, cfg: LayoutConfig):
    """Partition trees into bins and assign interleaved slots.

    Returns (bin_directory, slot_map, residual_roots) where slot_map maps
    (tree_index, node_id) -> body slot for every stored bin node, and
    residual_roots lists, per tree, the stored level-``bin_depth`` node ids
    in left-to-right order.
    """
    cfg.validate()
    if not cfg.uses_bins and cfg.layout in ("bfs", "dfs"):
        raise ConfigError("build_bins requires a bin layout")
    depth = cfg.bin_depth
    tpb = cfg.resolve_trees_per_bin(len(forest.trees))
    npb = cfg.nodes_per_block
    num_trees = len(forest.trees)
    num_bins = (num_trees + tpb - 1) // tpb

    directory = []
    slot_map: dict[tuple[int, int], int] = {}
    residual_roots: list[list[int]] = []
    bin_span = 1 << depth  # heap indices [0, 2^depth - 1) live in the bin

    for b in range(num_bins):
        first_tree = b * tpb
        count = min(tpb, num_trees - first_tree)
        directory.append(BinEntry(first_block=b, first_tree=first_tree,
                                  tree_count=count))

    for ti, tree in enumerate(forest.trees):
        b, t_local = divmod(ti, tpb)
        base = b * npb
        heap = _bin_heap_map(tree, depth)
        for h, nid in heap.items():
            if _is_stored(forest, tree.nodes[nid], nid == tree.root):
                slot_map[(ti, nid)] = base + h * tpb + t_local
        roots = []
        for h in range((bin_span >> 1) - 1, bin_span - 1):
            nid = heap.get(h)
            if nid is None:
                continue
            node = tree.nodes[nid]
            if node.is_leaf:
                continue
            for child in (node.left, node.right):
                if _is_stored(forest, tree.nodes[child], False):
                    roots.append(child)
        residual_roots.append(roots)

    return directory, slot_map, residual_roots


# --------------------------------------------------------------------------
# Record assembly
# --------------------------------------------------------------------------

def _check_position(pos: int) -> int:
    if pos > MAX_POSITION:
        raise CapacityError(f"node position {pos} exceeds 2^31 - 1")
    return pos


def _child_ref(forest: Forest, tree: Tree, child_id: int,
               pos_of: dict, ti: int) -> int:
    child = tree.nodes[child_id]
    if child.is_leaf and forest.inlines_leaves:
        label = child.leaf_class
        if label >= INLINE_BIT - 1:
            raise CapacityError(f"class label {label} does not fit the "
                                "inline encoding")
        return INLINE_BIT | label
    return _check_position(pos_of[(ti, child_id)])


def _make_record(forest: Forest, tree: Tree, ti: int, nid: int,
                 pos_of: dict) -> NodeRecord:
    node = tree.nodes[nid]
    card = node_weight(tree, nid)
    if card > 0xFFFFFFFF:
        raise CapacityError(f"cardinality {card} exceeds u32")
    if node.is_leaf:
        lc = node.leaf_count if node.leaf_count is not None else card
        if forest.inlines_leaves:
            # Only a root leaf reaches here; its label rides in the left ref.
            if node.leaf_class >= INLINE_BIT - 1:
                raise CapacityError(f"class label {node.leaf_class} does not "
                                    "fit the inline encoding")
            left = INLINE_BIT | node.leaf_class
            return NodeRecord(feature=0, threshold=0.0, left=left,
                              right=REF_NONE, cardinality=card, value=0.0,
                              flags=FLAG_LEAF, leaf_count=lc)
        return NodeRecord(feature=0, threshold=0.0, left=REF_NONE,
                          right=REF_NONE, cardinality=card,
                          value=as_f32(node.leaf_value), flags=FLAG_LEAF,
                          leaf_count=lc)
    return NodeRecord(feature=node.feature, threshold=as_f32(node.threshold),
                      left=_child_ref(forest, tree, node.left, pos_of, ti),
                      right=_child_ref(forest, tree, node.right, pos_of, ti),
                      cardinality=card, value=0.0, flags=0, leaf_count=0)


def _assemble(forest: Forest, cfg: LayoutConfig, tpb: int,
              directory: list[BinEntry], slot_map: dict,
              residual_order: list[tuple[int, int]],
              root_node_ids: list[list[int]]) -> PackedModel:
    npb = cfg.nodes_per_block
    num_bins = len(directory)
    residual_base = num_bins * npb

    pos_of = dict(slot_map)
    for i, (ti, nid) in enumerate(residual_order):
        pos_of[(ti, nid)] = _check_position(residual_base + i)

    residual_blocks = (len(residual_order) + npb - 1) // npb
    total_slots = (num_bins + residual_blocks) * npb
    records: list[NodeRecord | None] = [None] * total_slots

    if num_bins:
        span = (1 << cfg.bin_depth) - 1
        for b in range(num_bins):
            base = b * npb
            for slot in range(base, base + span * tpb):
                records[slot] = SENTINEL_RECORD

    for (ti, nid), pos in pos_of.items():
        records[pos] = _make_record(forest, forest.trees[ti], ti, nid, pos_of)

    residual_roots = [[pos_of[(ti, nid)] for nid in roots]
                      for ti, roots in enumerate(root_node_ids)]

    header = PackedHeader(
        task=forest.task, kind=forest.kind, layout=cfg.layout,
        block_bytes=cfg.block_bytes, bin_depth=cfg.bin_depth if num_bins else 0,
        trees_per_bin=tpb if num_bins else 0, num_trees=len(forest.trees),
        num_classes=forest.num_classes or 0, num_features=forest.num_features,
        base_score=forest.base_score, num_bins=num_bins,
        residual_region_block=num_bins)
    return PackedModel(header=header, records=records, bin_directory=directory,
                       residual_roots=residual_roots, positions=pos_of)


def pack(forest: Forest, cfg: LayoutConfig) -> PackedModel:
    """Pack an annotated forest under the configured layout."""
    cfg.validate()
    if cfg.layout == "bfs":
        return _pack_flat(forest, cfg, _bfs_order)
    if cfg.layout == "dfs":
        return _pack_flat(forest, cfg, _dfs_order)
    return _pack_binned(forest, cfg)


def pack_bfs(forest: Forest, cfg: LayoutConfig) -> PackedModel:
    return _pack_flat(forest, cfg, _bfs_order)


def pack_dfs(forest: Forest, cfg: LayoutConfig) -> PackedModel:
    return _pack_flat(forest, cfg, _dfs_order)


def pack_wdfs(forest: Forest, cfg: LayoutConfig,
              block_aligned: bool = False) -> PackedModel:
    layout = "bin_block_wdfs" if block_aligned else "bin_wdfs"
    if cfg.layout != layout:
        cfg = LayoutConfig(layout=layout, block_bytes=cfg.block_bytes,
                           bin_depth=cfg.bin_depth,
                           trees_per_bin=cfg.trees_per_bin)
    return _pack_binned(forest, cfg)


def _pack_flat(forest: Forest, cfg: LayoutConfig, per_tree_order) -> PackedModel:
    cfg = LayoutConfig(layout=cfg.layout, block_bytes=cfg.block_bytes)
    order: list[tuple[int, int]] = []
    residual_roots: list[list[int]] = []
    for ti, tree in enumerate(forest.trees):
        for nid in per_tree_order(forest, tree):
            order.append((ti, nid))
        residual_roots.append([tree.root])
    return _assemble(forest, cfg, tpb=0, directory=[], slot_map={},
                     residual_order=order, root_node_ids=residual_roots)


def _pack_binned(forest: Forest, cfg: LayoutConfig) -> PackedModel:
    directory, slot_map, residual_roots = build_bins(forest, cfg)
    tpb = cfg.resolve_trees_per_bin(len(forest.trees))

    if cfg.layout == "bin_block_wdfs":
        order = _block_aligned_order(forest, residual_roots,
                                     cfg.nodes_per_block)
    else:
        weighted = cfg.layout == "bin_wdfs"
        order = []
        for ti, tree in enumerate(forest.trees):
            depths = _node_depths(tree)
            for nid in _residual_preorder(forest, tree, depths,
                                          cfg.bin_depth, weighted):
                order.append((ti, nid))
    return _assemble(forest, cfg, tpb, directory, slot_map, order,
                     residual_roots)
