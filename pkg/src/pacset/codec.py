"""Binary codec for the packed model file (".pac", little-endian).

Layout of the file:

    header region, zero-padded to a block_bytes multiple:
        magic "PACS"            4s
        version                 u16 = 1
        task                    u8   0=classify 1=regress
        kind                    u8   0=rf 1=gbt
        layout                  u8   0=bfs 1=dfs 2=bin_dfs 3=bin_wdfs
                                     4=bin_block_wdfs
        reserved                u8 = 0
        node_bytes              u16 = 32
        block_bytes             u32
        bin_depth               u16
        trees_per_bin           u16
        num_trees               u32
        num_classes             u32  (0 for regression)
        num_features            u32
        base_score              f64
        num_bins                u32
        residual_region_block   u32  (body-relative)
        per-bin directory       num_bins x (first_block u32, first_tree u32,
                                            tree_count u32)
        residual_record_count   u32
        tree root positions     num_trees x u32, present only for the
                                binless layouts (bfs, dfs)
    body, one block per bin then the residual blocks:
        NodeRecord              feature u32, threshold f32, left u32,
                                right u32, cardinality u32, value f32,
                                flags u32 (bit0 leaf, bit1 sentinel),
                                leaf_count u32

Child references: bit31 clear = node position; bit31 set = inlined class
label in bits 0..30; 0xFFFFFFFF = none.  Block indices in the header and
in traces are body-relative: block 0 is the first block after the header.
Bin-block tails and the final partial residual block are zero padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import CapacityError, FormatError
from .layout import (BIN_LAYOUTS, NODE_BYTES, BinEntry, NodeRecord,
                     PackedHeader, PackedModel, INLINE_BIT, REF_NONE,
                     MAX_POSITION)

MAGIC = b"PACS"
VERSION = 1

HEADER_FIXED = struct.Struct("<4sHBBBBHIHHIIIdII")
DIR_ENTRY = struct.Struct("<III")
U32 = struct.Struct("<I")
NODE = struct.Struct("<IfIIIfII")

TASK_CODES = {"classify": 0, "regress": 1}
KIND_CODES = {"rf": 0, "gbt": 1}
LAYOUT_CODES = {"bfs": 0, "dfs": 1, "bin_dfs": 2, "bin_wdfs": 3,
                "bin_block_wdfs": 4}
TASK_NAMES = {v: k for k, v in TASK_CODES.items()}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
LAYOUT_NAMES = {v: k for k, v in LAYOUT_CODES.items()}


@dataclass(slots=True)
class ParsedHeader:
    header: PackedHeader
    directory: list[BinEntry]
    residual_record_count: int
    roots: list[int] | None          # per-tree entry position, binless layouts
    header_blocks: int

    @property
    def body_offset(self) -> int:
        return self.header_blocks * self.header.block_bytes

    @property
    def body_blocks(self) -> int:
        npb = self.header.nodes_per_block
        residual_blocks = (self.residual_record_count + npb - 1) // npb
        return self.header.num_bins + residual_blocks


def _header_bytes(packed: PackedModel) -> bytes:
    h = packed.header
    parts = [HEADER_FIXED.pack(
        MAGIC, VERSION, TASK_CODES[h.task], KIND_CODES[h.kind],
        LAYOUT_CODES[h.layout], 0, NODE_BYTES, h.block_bytes, h.bin_depth,
        h.trees_per_bin, h.num_trees, h.num_classes, h.num_features,
        h.base_score, h.num_bins, h.residual_region_block)]
    for entry in packed.bin_directory:
        parts.append(DIR_ENTRY.pack(entry.first_block, entry.first_tree,
                                    entry.tree_count))
    parts.append(U32.pack(packed.residual_record_count()))
    if h.layout not in BIN_LAYOUTS:
        for roots in packed.residual_roots:
            parts.append(U32.pack(roots[0]))
    return b"".join(parts)


def encode(packed: PackedModel) -> bytes:
    """Serialize a packed model to its bit-exact file image."""
    h = packed.header
    if len(packed.records) > MAX_POSITION:
        raise CapacityError(
            f"{len(packed.records)} node slots exceed the 2^31 - 1 limit")
    raw_header = _header_bytes(packed)
    header_blocks = (len(raw_header) + h.block_bytes - 1) // h.block_bytes

    out = bytearray(header_blocks * h.block_bytes +
                    len(packed.records) * NODE_BYTES)
    out[:len(raw_header)] = raw_header
    base = header_blocks * h.block_bytes
    pack_into = NODE.pack_into
    for i, rec in enumerate(packed.records):
        if rec is None:
            continue
        pack_into(out, base + i * NODE_BYTES, rec.feature, rec.threshold,
                  rec.left, rec.right, rec.cardinality, rec.value, rec.flags,
                  rec.leaf_count)
    return bytes(out)


def header_extent(fixed: bytes) -> int:
    """Byte length of the full header region, given its first 48 bytes."""
    if len(fixed) < HEADER_FIXED.size:
        raise FormatError("file too short for a header")
    (magic, version, _t, _k, layout_c, _r, _nb, _bb, _bd, _tpb, num_trees,
     _nc, _nf, _bs, num_bins, _rb) = HEADER_FIXED.unpack_from(fixed, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if layout_c not in LAYOUT_NAMES:
        raise FormatError(f"unknown layout code {layout_c}")
    length = HEADER_FIXED.size + DIR_ENTRY.size * num_bins + U32.size
    if LAYOUT_NAMES[layout_c] not in BIN_LAYOUTS:
        length += 4 * num_trees
    return length


def parse_header(data: bytes) -> ParsedHeader:
    """Validate and read the header region of an encoded model."""
    if len(data) < HEADER_FIXED.size:
        raise FormatError("file too short for a header")
    (magic, version, task_c, kind_c, layout_c, _reserved, node_bytes,
     block_bytes, bin_depth, trees_per_bin, num_trees, num_classes,
     num_features, base_score, num_bins,
     residual_block) = HEADER_FIXED.unpack_from(data, 0)

    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if node_bytes != NODE_BYTES:
        raise FormatError(f"unsupported node size {node_bytes}")
    if block_bytes < NODE_BYTES or block_bytes & (block_bytes - 1):
        raise FormatError(f"block_bytes {block_bytes} is not a power of two "
                          f">= {NODE_BYTES}")
    for code, names, what in ((task_c, TASK_NAMES, "task"),
                              (kind_c, KIND_NAMES, "kind"),
                              (layout_c, LAYOUT_NAMES, "layout")):
        if code not in names:
            raise FormatError(f"unknown {what} code {code}")

    offset = HEADER_FIXED.size
    directory = []
    for _ in range(num_bins):
        fb, ft, tc = DIR_ENTRY.unpack_from(data, offset)
        directory.append(BinEntry(first_block=fb, first_tree=ft, tree_count=tc))
        offset += DIR_ENTRY.size
    (residual_count,) = U32.unpack_from(data, offset)
    offset += U32.size

    layout = LAYOUT_NAMES[layout_c]
    roots = None
    if layout not in BIN_LAYOUTS:
        roots = [U32.unpack_from(data, offset + 4 * i)[0]
                 for i in range(num_trees)]
        offset += 4 * num_trees

    header = PackedHeader(
        task=TASK_NAMES[task_c], kind=KIND_NAMES[kind_c], layout=layout,
        block_bytes=block_bytes, bin_depth=bin_depth,
        trees_per_bin=trees_per_bin, num_trees=num_trees,
        num_classes=num_classes, num_features=num_features,
        base_score=base_score, num_bins=num_bins,
        residual_region_block=residual_block)
    header_blocks = (offset + block_bytes - 1) // block_bytes
    return ParsedHeader(header=header, directory=directory,
                        residual_record_count=residual_count, roots=roots,
                        header_blocks=header_blocks)


def _recover_residual_roots(header: PackedHeader, directory: list[BinEntry],
                            records: list[NodeRecord | None]) -> list[list[int]]:
    """Rebuild per-tree residual root positions from the bin records.

    The last interleaved level's interior records hold the only references
    that cross into the residual region; enumerating them per tree slot in
    heap order (left ref before right) recovers the level-D nodes in
    left-to-right order.
    """
    npb = header.nodes_per_block
    tpb = header.trees_per_bin
    span = 1 << header.bin_depth
    roots: list[list[int]] = []
    for ti in range(header.num_trees):
        entry = directory[ti // tpb]
        t_local = ti - entry.first_tree
        base = entry.first_block * npb
        tree_roots = []
        for h in range((span >> 1) - 1, span - 1):
            rec = records[base + h * tpb + t_local]
            if rec is None or rec.is_sentinel or rec.is_leaf:
                continue
            for ref in (rec.left, rec.right):
                if ref != REF_NONE and not ref & INLINE_BIT:
                    tree_roots.append(ref)
        roots.append(tree_roots)
    return roots


def decode(data: bytes) -> PackedModel:
    """Rebuild the packed model from its file image."""
    parsed = parse_header(data)
    header = parsed.header
    npb = header.nodes_per_block
    body = data[parsed.body_offset:]
    expected = parsed.body_blocks * header.block_bytes
    if len(body) != expected:
        raise FormatError(f"body is {len(body)} bytes, expected {expected}")

    total_slots = parsed.body_blocks * npb
    records: list[NodeRecord | None] = [None] * total_slots
    unpack_from = NODE.unpack_from

    if header.num_bins:
        span_slots = ((1 << header.bin_depth) - 1) * header.trees_per_bin
        for entry in parsed.directory:
            base = entry.first_block * npb
            for slot in range(base, base + span_slots):
                records[slot] = NodeRecord(*unpack_from(body, slot * NODE_BYTES))

    residual_base = header.num_bins * npb
    for slot in range(residual_base, residual_base + parsed.residual_record_count):
        records[slot] = NodeRecord(*unpack_from(body, slot * NODE_BYTES))

    if header.layout in BIN_LAYOUTS:
        residual_roots = _recover_residual_roots(header, parsed.directory,
                                                 records)
    else:
        residual_roots = [[pos] for pos in parsed.roots]

    return PackedModel(header=header, records=records,
                       bin_directory=parsed.directory,
                       residual_roots=residual_roots)
