"""Reading containers: windowed patch reads assembled across chunk seams, a shared LRU chunk
cache, and deferred batches that load every distinct chunk once and scatter it to all the
windows that need it.
"""
import collections
import concurrent.futures
import dataclasses
import enum
import logging
import mmap
import os
import pathlib
import threading
import time
from typing import Dict, List, Optional, OrderedDict, Tuple, Union

import numpy as np

from . import defaults
from .container import (HEADER_SIZE, TRAILER_SIZE, ChunkGrid, ContainerIndex, ImageMeta, TileVariable,
    crc32, decode_index_parts, decode_trailer)
from .errors import (ContainerIOError, CorruptChunk, CorruptIndex, InvalidState, NotAContainer,
    PartialFailure, ShapeMismatch, WindowOutOfBounds, WstcError)
from .writer import check_window

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


@dataclasses.dataclass(frozen=True)
class PatchWindow:
    """A rectangle in image pixels, top-left anchored."""
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise WindowOutOfBounds(f'window origin ({self.x}, {self.y}) is negative')
        if self.w < 1 or self.h < 1:
            raise WindowOutOfBounds(f'window size {self.w}x{self.h} is empty')

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def check(self, meta: ImageMeta) -> None:
        """Raises WindowOutOfBounds unless the window lies inside the image."""
        check_window(meta, self.x, self.y, self.w, self.h)

    def shape(self, channels: int) -> Tuple[int, int, int]:
        return (self.h, self.w, channels)


class ChunkCache(object):
    __slots__ = ('_capacity', '_entries', '_lock', '_hits', '_misses')

    def __init__(self, capacity: int=defaults.CACHE_CHUNKS) -> None:
        """Bounded least-recently-used map of (row, col) -> chunk array, safe to share between threads.

        Args:
            capacity (int, optional): chunks kept, 0 disables caching. Defaults to 64.
        """
        if capacity < 0:
            raise ValueError('cache capacity cannot be negative')
        self._capacity = capacity
        self._entries: OrderedDict[Tuple[int, int], np.ndarray] = collections.OrderedDict()
        self._lock = threading.Lock()
        self._hits = 0
        self._misses = 0

    @property
    def capacity(self) -> int:
        return self._capacity

    @property
    def hits(self) -> int:
        return self._hits

    @property
    def misses(self) -> int:
        return self._misses

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: Tuple[int, int]) -> Optional[np.ndarray]:
        with self._lock:
            chunk = self._entries.get(key)
            if chunk is None:
                self._misses += 1
                return None
            self._entries.move_to_end(key)
            self._hits += 1
            return chunk

    def put(self, key: Tuple[int, int], chunk: np.ndarray) -> None:
        if self._capacity == 0:
            return
        with self._lock:
            self._entries[key] = chunk
            self._entries.move_to_end(key)
            while len(self._entries) > self._capacity:
                self._entries.popitem(last=False)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            self._hits = 0
            self._misses = 0


class ContainerReader(object):

    def __init__(self, path: PathLike, cache_chunks: int=defaults.CACHE_CHUNKS) -> None:
        """Open a finalized container. Header and trailer are validated and the index is decoded
        and crc-checked; chunk payloads are verified lazily on first touch. The handle can be
        shared by any number of threads.

        Args:
            path (PathLike): container file
            cache_chunks (int, optional): LRU capacity in chunks, 0 disables. Defaults to 64.

        Raises:
            ContainerIOError: the file cannot be opened
            NotAContainer: bad magic, too short, or bad trailer
            CorruptIndex: index crc mismatch or inconsistent trailer
            UnsupportedVersion: version other than 1
        """
        self._path = pathlib.Path(path)
        try:
            with open(self._path, 'rb') as f:
                size = os.fstat(f.fileno()).st_size
                if size < HEADER_SIZE + TRAILER_SIZE:
                    raise NotAContainer(f'{self._path}: {size} bytes is too small for a container')
                self._mmap = mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ)
        except OSError as err:
            raise ContainerIOError(f'cannot open {self._path}: {err}') from err
        try:
            trailer = self._mmap[size - TRAILER_SIZE:size]
            index_offset, index_length, _ = decode_trailer(trailer)
            self._index = decode_index_parts(self._mmap[:HEADER_SIZE],
                self._mmap[index_offset:index_offset + index_length], trailer, size)
            if self._index.data_end > index_offset:
                raise CorruptIndex(f'{self._path}: chunk extents run into the index')
        except WstcError:
            self._mmap.close()
            raise
        self._cache = ChunkCache(cache_chunks)
        self._verified = set()
        self._stats_lock = threading.Lock()
        self._chunk_loads = 0
        self._bytes_read = 0
        self._closed = False
        logger.debug('opened %s: %s, %d variables', self._path, self._index.meta.image_id, len(self._index.variables))

    @property
    def path(self) -> pathlib.Path:
        return self._path

    @property
    def index(self) -> ContainerIndex:
        return self._index

    @property
    def meta(self) -> ImageMeta:
        return self._index.meta

    @property
    def grid(self) -> ChunkGrid:
        return self._index.grid

    @property
    def cache(self) -> ChunkCache:
        return self._cache

    def list_variables(self) -> List[TileVariable]:
        """All tile variables, row-major."""
        return list(self._index.variables)

    def variable(self, row: int, col: int) -> TileVariable:
        return self._index.variable(row, col)

    def chunks_for(self, window: PatchWindow) -> List[Tuple[int, int]]:
        return list(self.grid.intersecting(window.x, window.y, window.w, window.h))

    def stats(self) -> Dict[str, int]:
        return {
            'chunk_loads': self._chunk_loads,
            'bytes_read': self._bytes_read,
            'cache_hits': self._cache.hits,
            'cache_misses': self._cache.misses,
        }

    def reset_stats(self) -> None:
        with self._stats_lock:
            self._chunk_loads = 0
            self._bytes_read = 0

    def _load(self, row: int, col: int) -> np.ndarray:
        if self._closed:
            raise InvalidState(f'{self._path} is closed')
        v = self._index.variable(row, col)
        raw = self._mmap[v.byte_offset:v.byte_end]
        key = (row, col)
        if key not in self._verified:
            actual = crc32(raw)
            if actual != v.crc32:
                raise CorruptChunk(v.name, v.crc32, actual)
            self._verified.add(key)
        with self._stats_lock:
            self._chunk_loads += 1
            self._bytes_read += v.byte_length
        return np.frombuffer(raw, dtype=self.meta.dtype).reshape(v.logical_h, v.logical_w, v.channels)

    def read_chunk(self, row: int, col: int, use_cache: bool=True) -> np.ndarray:
        """One chunk's payload as a read-only (logical_h, logical_w, channels) array.

        Raises:
            CorruptChunk: If the payload fails its crc32 check.
        """
        key = (row, col)
        if use_cache:
            chunk = self._cache.get(key)
            if chunk is not None:
                return chunk
        chunk = self._load(row, col)
        if use_cache:
            self._cache.put(key, chunk)
        return chunk

    def _scatter(self, row: int, col: int, chunk: np.ndarray, window: PatchWindow, out: np.ndarray) -> None:
        x0, y0, _, _ = self.grid.chunk_rect(self.meta, row, col)
        left, top = max(window.x, x0), max(window.y, y0)
        right = min(window.right, x0 + chunk.shape[1])
        bottom = min(window.bottom, y0 + chunk.shape[0])
        out[top - window.y:bottom - window.y, left - window.x:right - window.x] = \
            chunk[top - y0:bottom - y0, left - x0:right - x0]

    def read_patch(self, window: PatchWindow, out: Optional[np.ndarray]=None) -> np.ndarray:
        """Read a strict in-bounds window, assembled from every chunk it touches.

        Args:
            window (PatchWindow): the window
            out (Optional[np.ndarray], optional): destination of the window's shape. Defaults to a new array.

        Raises:
            WindowOutOfBounds: the window leaves the image
            CorruptChunk: a touched chunk fails its crc32 check

        Returns:
            np.ndarray: (h, w, channels) samples
        """
        window.check(self.meta)
        out = self._destination(window, out)
        for row, col in self.chunks_for(window):
            self._scatter(row, col, self.read_chunk(row, col), window, out)
        return out

    def _destination(self, window: PatchWindow, out: Optional[np.ndarray]) -> np.ndarray:
        shape = window.shape(self.meta.channels)
        if out is None:
            return np.empty(shape, dtype=self.meta.dtype)
        if out.shape != shape or out.dtype != self.meta.dtype:
            raise ShapeMismatch(f'destination {out.shape}/{out.dtype} for a {shape}/{self.meta.dtype} window')
        return out

    def batch(self) -> 'DeferredBatch':
        return DeferredBatch(self)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._cache.clear()
            self._mmap.close()

    def __enter__(self) -> 'ContainerReader':
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def open_container(path: PathLike, cache_chunks: int=defaults.CACHE_CHUNKS) -> ContainerReader:
    return ContainerReader(path, cache_chunks)


CSV_FIELDS = ('windows_served', 'chunks_touched', 'bytes_read', 'wall_seconds')


@dataclasses.dataclass(frozen=True)
class ResolutionReport:
    windows_served: int
    chunks_touched: int
    bytes_read: int
    wall_seconds: float

    def to_csv_row(self) -> Dict[str, object]:
        return {k: getattr(self, k) for k in CSV_FIELDS}


class BatchState(enum.Enum):
    OPEN = 'open'
    RESOLVED = 'resolved'


class DeferredBatch(object):

    def __init__(self, reader: ContainerReader) -> None:
        """A queue of window reads resolved together at `perform_reads`. Destinations stay
        untouched until then. A batch belongs to one thread at a time.

        Args:
            reader (ContainerReader): the container to read from
        """
        self._reader = reader
        self._entries: List[Tuple[PatchWindow, np.ndarray]] = []
        self._state = BatchState.OPEN
        self._report: Optional[ResolutionReport] = None

    @property
    def state(self) -> BatchState:
        return self._state

    @property
    def report(self) -> Optional[ResolutionReport]:
        return self._report

    def __len__(self) -> int:
        return len(self._entries)

    def destination(self, token: int) -> np.ndarray:
        return self._entries[token][1]

    def destinations(self) -> List[np.ndarray]:
        return [out for _, out in self._entries]

    def defer_read(self, window: PatchWindow, destination: Optional[np.ndarray]=None) -> int:
        """Queue a window.

        Args:
            window (PatchWindow): strict in-bounds window
            destination (Optional[np.ndarray], optional): array of the window's shape and the
                image dtype. Defaults to a fresh array, see `destination(token)`.

        Raises:
            InvalidState: the batch was already resolved
            WindowOutOfBounds: the window leaves the image

        Returns:
            int: token identifying the request
        """
        if self._state is not BatchState.OPEN:
            raise InvalidState('batch already resolved')
        window.check(self._reader.meta)
        self._entries.append((window, self._reader._destination(window, destination)))
        return len(self._entries) - 1

    def _plan(self) -> Dict[Tuple[int, int], List[int]]:
        plan: Dict[Tuple[int, int], List[int]] = {}
        for token, (window, _) in enumerate(self._entries):
            for cell in self._reader.chunks_for(window):
                plan.setdefault(cell, []).append(token)
        return plan

    def _serve(self, cell: Tuple[int, int], tokens: List[int]) -> int:
        # every chunk is fetched once per resolution, then copied into each window that needs it
        row, col = cell
        reader = self._reader
        cached = reader.cache.get(cell)
        if cached is None:
            chunk = reader._load(row, col)
            reader.cache.put(cell, chunk)
            loaded = chunk.nbytes
        else:
            chunk, loaded = cached, 0
        for token in tokens:
            window, out = self._entries[token]
            reader._scatter(row, col, chunk, window, out)
        return loaded

    def perform_reads(self, max_workers: int=1) -> ResolutionReport:
        """Resolve every queued window. Reads are planned by chunk: each distinct chunk is
        loaded at most once and scattered to all windows intersecting it.

        Args:
            max_workers (int, optional): threads used to serve chunks. Defaults to 1.

        Raises:
            InvalidState: the batch was already resolved
            PartialFailure: a chunk failed, lists the windows left unserved

        Returns:
            ResolutionReport: windows served, distinct chunks touched, bytes loaded, wall time
        """
        if self._state is not BatchState.OPEN:
            raise InvalidState('batch already resolved')
        start = time.perf_counter()
        self._state = BatchState.RESOLVED
        plan = self._plan()
        failed: Dict[Tuple[int, int], Exception] = {}
        bytes_read = 0
        if max_workers > 1 and len(plan) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as pool:
                futures = {pool.submit(self._serve, cell, tokens): cell for cell, tokens in plan.items()}
                for future in concurrent.futures.as_completed(futures):
                    try:
                        bytes_read += future.result()
                    except WstcError as err:
                        failed[futures[future]] = err
        else:
            for cell, tokens in plan.items():
                try:
                    bytes_read += self._serve(cell, tokens)
                except WstcError as err:
                    failed[cell] = err
        if failed:
            unserved = sorted({t for cell in failed for t in plan[cell]})
            cause = next(iter(failed.values()))
            logger.warning('batch on %s: %d of %d windows unserved', self._reader.path, len(unserved), len(self._entries))
            raise PartialFailure([self._entries[t][0] for t in unserved], cause)
        self._report = ResolutionReport(len(self._entries), len(plan), bytes_read, time.perf_counter() - start)
        logger.debug('batch on %s: %s', self._reader.path, self._report)
        return self._report


def defer_read(batch: DeferredBatch, window: PatchWindow, destination: Optional[np.ndarray]=None) -> int:
    return batch.defer_read(window, destination)


def perform_reads(batch: DeferredBatch, max_workers: int=1) -> ResolutionReport:
    return batch.perform_reads(max_workers)
