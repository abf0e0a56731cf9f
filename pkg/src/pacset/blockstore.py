"""Block-addressed, read-only access to an encoded model, with tracing.

Two backends serve the same body bytes:

  * FileBlockStore: the body in block_bytes units, read on demand from a
    file (or an in-memory image).  An explicit per-session block cache
    simulates demand paging so traces are exact and portable: a block is
    fetched at most once per trace epoch, and cold-start mode drops the
    cache between epochs.  An optional mmap mode reads through the OS map
    instead of positioned reads; tracing is unchanged.
  * KvBlockStore: the body re-sliced into buckets of ``nodes_per_value``
    records, keyed by the ASCII decimal bucket ordinal.  Every get is
    recorded; there is no caching unless the per-inference cache is
    explicitly enabled in the config.

Block/bucket indices are body-relative: index 0 is the first block after
the header.  Node positions map to units arithmetically
(position // nodes_per_unit), which is what makes trace counts equal to
the analytic position-to-block computation.
"""

from __future__ import annotations

import mmap as _mmap
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .codec import NODE, header_extent, parse_header
from .errors import BlockRangeError, FormatError, IntegrityError
from .layout import NODE_BYTES

__all__ = ["IoTrace", "KvStoreConfig", "StoreSession", "FileBlockStore",
           "KvBlockStore", "open_file_store", "open_kv_store", "fetch",
           "trace_to_json"]


@dataclass(frozen=True, slots=True)
class IoTrace:
    """Blocks fetched during one inference, in fetch order."""

    fetched: tuple[int, ...]
    unique_count: int
    bytes_transferred: int
    nodes_read: int = 0

    @property
    def unique_blocks(self) -> frozenset[int]:
        return frozenset(self.fetched)


def trace_to_json(obs_index: int, trace: IoTrace) -> dict:
    return {"obs": obs_index, "blocks": list(trace.fetched),
            "unique": trace.unique_count}


@dataclass(frozen=True, slots=True)
class KvStoreConfig:
    nodes_per_value: int = 8
    latency_model: tuple[float, float] | None = None  # (base_s, jitter_s)
    per_inference_cache: bool = False
    latency_seed: int = 0


class StoreSession:
    """One trace context over a store.

    A session owns a unit cache and the per-epoch fetch list; it must be
    used from a single thread.  ``caching`` controls whether repeated
    touches of a unit within an epoch are deduplicated (always true for
    the file backend, opt-in for KV).  ``cold_start`` drops the cache at
    every epoch start.
    """

    __slots__ = ("_store", "_cache", "_fetched", "_positions", "cold_start",
                 "caching")

    def __init__(self, store: "_BaseStore", cold_start: bool = True,
                 caching: bool = True):
        self._store = store
        self.cold_start = cold_start
        self.caching = caching
        self._cache: dict[int, bytes] = {}
        self._fetched: list[int] = []
        self._positions: set[int] = set()

    def start_epoch(self) -> None:
        self._fetched = []
        self._positions = set()
        if self.cold_start:
            self._cache.clear()

    def fetch(self, unit_id: int) -> bytes:
        data = self._cache.get(unit_id)
        if data is not None:
            return data
        data = self._store.load_unit(unit_id)
        self._fetched.append(unit_id)
        if self.caching:
            self._cache[unit_id] = data
        return data

    def read_node(self, position: int) -> tuple:
        unit_id, slot = divmod(position, self._store.nodes_per_unit)
        data = self._cache.get(unit_id)
        if data is None:
            data = self.fetch(unit_id)
        self._positions.add(position)
        return NODE.unpack_from(data, slot * NODE_BYTES)

    def finish_epoch(self) -> IoTrace:
        fetched = tuple(self._fetched)
        return IoTrace(fetched=fetched, unique_count=len(set(fetched)),
                       bytes_transferred=len(fetched) * self._store.unit_bytes,
                       nodes_read=len(self._positions))


class _BaseStore:
    """Shared store skeleton: parsed header plus the ambient trace surface."""

    def __init__(self, data_prefix: bytes, cold_start: bool):
        self.parsed = parse_header(data_prefix)
        self.header = self.parsed.header
        self.directory = self.parsed.directory
        self.roots = self.parsed.roots
        self.cold_start = cold_start
        self.total_slots = self.parsed.body_blocks * self.header.nodes_per_block
        self._ambient: StoreSession | None = None

    # -- geometry shared by both backends (file-block based) --------------
    def entry_position(self, tree_index: int) -> int:
        """Body slot where inference enters tree ``tree_index``."""
        header = self.header
        if header.num_bins:
            entry = self.directory[tree_index // header.trees_per_bin]
            return (entry.first_block * header.nodes_per_block
                    + (tree_index - entry.first_tree))
        return self.roots[tree_index]

    # -- backend interface -------------------------------------------------
    nodes_per_unit: int
    unit_bytes: int
    num_units: int
    session_caching = True

    def load_unit(self, unit_id: int) -> bytes:
        raise NotImplementedError

    def session(self, cold_start: bool | None = None) -> StoreSession:
        if cold_start is None:
            cold_start = self.cold_start
        return StoreSession(self, cold_start=cold_start,
                            caching=self.session_caching)

    # -- ambient trace epoch, for direct fetch() use -----------------------
    def begin_trace(self) -> None:
        if self._ambient is None:
            self._ambient = self.session()
        self._ambient.start_epoch()

    def end_trace(self) -> IoTrace:
        if self._ambient is None:
            raise RuntimeError("no active trace")
        return self._ambient.finish_epoch()

    def fetch(self, block_id: int) -> bytes:
        if self._ambient is not None:
            return self._ambient.fetch(block_id)
        return self.load_unit(block_id)


class FileBlockStore(_BaseStore):
    """Body blocks on demand from a .pac file or an in-memory image.

    Only the header region is read at open; blocks are read lazily, by
    seek/read or through an OS memory map.
    """

    session_caching = True

    def __init__(self, source: str | os.PathLike | bytes,
                 block_bytes: int | None = None, cold_start: bool = True,
                 use_mmap: bool = False):
        self._file = None
        self._mmap = None
        self._buf: bytes | _mmap.mmap | None = None
        if isinstance(source, (bytes, bytearray, memoryview)):
            self._buf = bytes(source)
            size = len(self._buf)
            header_region = self._buf
        else:
            self._file = open(source, "rb")
            size = os.fstat(self._file.fileno()).st_size
            if use_mmap:
                self._mmap = _mmap.mmap(self._file.fileno(), 0,
                                        access=_mmap.ACCESS_READ)
                self._buf = self._mmap
                header_region = bytes(self._mmap[:min(size, 48)])
            else:
                header_region = self._file.read(48)
            extent = header_extent(header_region)
            if self._mmap is not None:
                header_region = bytes(self._mmap[:extent])
            else:
                self._file.seek(0)
                header_region = self._file.read(extent)
        super().__init__(header_region, cold_start)

        if block_bytes is not None and block_bytes != self.header.block_bytes:
            raise FormatError(
                f"expected block_bytes {block_bytes}, file declares "
                f"{self.header.block_bytes}")

        self.unit_bytes = self.header.block_bytes
        self.nodes_per_unit = self.header.nodes_per_block
        self.num_units = self.parsed.body_blocks
        self._body_offset = self.parsed.body_offset

        total = self._body_offset + self.num_units * self.unit_bytes
        if size != total:
            raise FormatError(f"file is {size} bytes, expected {total}")

    def load_unit(self, unit_id: int) -> bytes:
        if not 0 <= unit_id < self.num_units:
            raise BlockRangeError(
                f"block {unit_id} out of range [0, {self.num_units})")
        start = self._body_offset + unit_id * self.unit_bytes
        if self._buf is not None:
            return bytes(self._buf[start:start + self.unit_bytes])
        # pread keeps concurrent fetches from racing on the file offset.
        return os.pread(self._file.fileno(), self.unit_bytes, start)

    def close(self) -> None:
        if self._mmap is not None:
            self._mmap.close()
        if self._file is not None:
            self._file.close()


class KvBlockStore(_BaseStore):
    """In-memory key/value model of the packed body.

    The body's node slots are split into buckets of ``nodes_per_value``
    records; bucket k is stored under the key ``str(k)``.  The final
    bucket is zero-padded to full size so every get returns the same
    number of bytes.
    """

    def __init__(self, encoded_model: bytes, cfg: KvStoreConfig,
                 cold_start: bool = True):
        super().__init__(encoded_model, cold_start)
        if cfg.nodes_per_value < 1:
            raise FormatError("nodes_per_value must be positive")
        self.cfg = cfg
        self.session_caching = cfg.per_inference_cache

        npv = cfg.nodes_per_value
        self.nodes_per_unit = npv
        self.unit_bytes = npv * NODE_BYTES
        self.num_units = (self.total_slots + npv - 1) // npv

        body = encoded_model[self.parsed.body_offset:]
        self._table: dict[str, bytes] = {}
        for k in range(self.num_units):
            chunk = body[k * self.unit_bytes:(k + 1) * self.unit_bytes]
            if len(chunk) < self.unit_bytes:
                chunk = chunk + b"\x00" * (self.unit_bytes - len(chunk))
            self._table[str(k)] = chunk
        self._rng = np.random.default_rng(cfg.latency_seed)

    def session(self, cold_start: bool | None = None) -> StoreSession:
        # The per-inference cache never outlives an epoch.
        return StoreSession(self, cold_start=True,
                            caching=self.session_caching)

    def load_unit(self, unit_id: int) -> bytes:
        if not 0 <= unit_id < self.num_units:
            raise BlockRangeError(
                f"bucket {unit_id} out of range [0, {self.num_units})")
        value = self._table.get(str(unit_id))
        if value is None:
            raise IntegrityError(f"bucket key {unit_id} missing from store")
        if self.cfg.latency_model is not None:
            base, jitter = self.cfg.latency_model
            time.sleep(base + jitter * float(self._rng.random()))
        return value


def open_file_store(path: str | os.PathLike | bytes,
                    block_bytes: int | None = None, cold_start: bool = True,
                    use_mmap: bool = False) -> FileBlockStore:
    """Open an encoded model for demand-paged block access."""
    return FileBlockStore(path, block_bytes=block_bytes, cold_start=cold_start,
                          use_mmap=use_mmap)


def open_kv_store(encoded_model: bytes, cfg: KvStoreConfig) -> KvBlockStore:
    """Split an encoded model into key/value buckets."""
    return KvBlockStore(encoded_model, cfg)


def fetch(store: _BaseStore, block_id: int) -> bytes:
    """Fetch one block/bucket, appending to the store's active trace."""
    return store.fetch(block_id)
