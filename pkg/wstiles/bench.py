"""Read benchmark of three layouts for the same image and patch size:

* WHOLE_ARRAY: one blob file loaded whole by a single worker, then sliced sequentially.
* PATCH_PER_FILE: one small file per patch, loaded by a pool of workers.
* CHUNKED_STORE: the chunked container read by a pool of workers, one deferred batch per
  worker region.

Exports of the two baselines are timed separately from the reads. Every method must
produce the same patches; `verify_equivalence` checks that outside the timed sections.
"""
import concurrent.futures
import csv
import dataclasses
import enum
import logging
import os
import pathlib
import time
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import defaults, mappings
from .errors import (ContainerIOError, CorruptBlob, CorruptPatchFile, EquivalenceError, FieldError, InvalidArgument,
    MemoryBudgetExceeded)
from .fields import Block, blob_header_fields, patch_header_fields
from .partition import assign_regions, enumerate_patches, patch_grid
from .reader import ContainerReader, DeferredBatch, PatchWindow

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

_BLOB_HEADER = Block('blob_header', blob_header_fields)
_PATCH_HEADER = Block('patch_header', patch_header_fields)
BLOB_HEADER_SIZE = _BLOB_HEADER.size
PATCH_HEADER_SIZE = _PATCH_HEADER.size
PATCH_SUFFIX = '.wsp'


class Method(enum.Enum):
    WHOLE_ARRAY = 'WHOLE_ARRAY'
    PATCH_PER_FILE = 'PATCH_PER_FILE'
    CHUNKED_STORE = 'CHUNKED_STORE'

    @classmethod
    def parse(cls, text: str) -> List['Method']:
        """`all` or a comma separated list of `whole`, `files`, `chunked` (or the member names).

        Raises:
            InvalidArgument: on an unknown name
        """
        if text.strip().lower() == 'all':
            return list(cls)
        out = []
        for part in text.split(','):
            key = part.strip()
            name = mappings.METHODS.get(key.lower(), key.upper())
            if name not in cls.__members__:
                raise InvalidArgument(f'unknown method `{key}`, expected all or {", ".join(mappings.METHODS)}')
            if cls[name] not in out:
                out.append(cls[name])
        return out


class CacheProtocol(enum.Enum):
    NONE = 'none'
    FADVISE = 'fadvise'
    DECOY = 'decoy'


def _dtype(bytes_per_sample: int) -> np.dtype:
    return np.dtype(mappings.SAMPLE_DTYPES[bytes_per_sample])


def _refuse_existing(path: pathlib.Path, overwrite: bool) -> None:
    if path.exists() and not overwrite:
        raise ContainerIOError(f'{path} exists, pass overwrite to replace it')


def export_whole_blob(container_path: PathLike, out_path: PathLike, overwrite: bool=False,
        cache_chunks: int=defaults.CACHE_CHUNKS) -> pathlib.Path:
    """Write the whole image as one blob: 16 byte `WSTB` header, then row-major samples.
    Written one chunk row at a time.

    Raises:
        ContainerIOError: the output exists (without overwrite) or cannot be written

    Returns:
        pathlib.Path: the blob
    """
    out_path = pathlib.Path(out_path)
    _refuse_existing(out_path, overwrite)
    with ContainerReader(container_path, cache_chunks) as reader:
        meta = reader.meta
        try:
            with open(out_path, 'wb') as f:
                f.write(_BLOB_HEADER.pack({'width': meta.width_px, 'height': meta.height_px,
                    'channels': meta.channels, 'bytes_per_sample': meta.bytes_per_sample}))
                for r in range(reader.grid.rows):
                    _, y, _, h = reader.grid.chunk_rect(meta, r, 0)
                    f.write(reader.read_patch(PatchWindow(0, y, meta.width_px, h)).tobytes())
        except OSError as err:
            raise ContainerIOError(f'writing {out_path}: {err}') from err
    logger.info('exported blob %s (%d bytes)', out_path, BLOB_HEADER_SIZE + meta.nbytes)
    return out_path


def load_blob(path: PathLike, memory_budget: Optional[int]=defaults.MEMORY_BUDGET) -> np.ndarray:
    """Read a blob fully into memory.

    Args:
        path (PathLike): blob file
        memory_budget (Optional[int], optional): refuse blobs larger than this many bytes,
            None for no limit. Defaults to 4 GiB.

    Raises:
        CorruptBlob: bad header or a length that disagrees with it
        MemoryBudgetExceeded: the blob is over budget

    Returns:
        np.ndarray: (height, width, channels)
    """
    path = pathlib.Path(path)
    try:
        size = path.stat().st_size
        with open(path, 'rb') as f:
            header = f.read(BLOB_HEADER_SIZE)
            try:
                values, _ = _BLOB_HEADER.unpack(header)
                dtype = _dtype(values['bytes_per_sample'])
            except (FieldError, KeyError) as err:
                raise CorruptBlob(f'{path}: bad header: {err}') from err
            shape = (values['height'], values['width'], values['channels'])
            expected = BLOB_HEADER_SIZE + shape[0] * shape[1] * shape[2] * dtype.itemsize
            if size != expected:
                raise CorruptBlob(f'{path}: {size} bytes, header describes {expected}')
            if memory_budget is not None and size > memory_budget:
                raise MemoryBudgetExceeded(f'{path}: {size} bytes over the {memory_budget} byte budget')
            data = np.fromfile(f, dtype=dtype)
    except OSError as err:
        raise ContainerIOError(f'reading {path}: {err}') from err
    if data.size * dtype.itemsize != expected - BLOB_HEADER_SIZE:
        raise CorruptBlob(f'{path}: short read')
    return data.reshape(shape)


def patch_file_name(row: int, col: int) -> str:
    return f'patch_{row}_{col}{PATCH_SUFFIX}'


def export_patch_files(container_path: PathLike, out_dir: PathLike, patch_w: int=defaults.PATCH_EDGE,
        patch_h: Optional[int]=None, overwrite: bool=False, cache_chunks: int=defaults.CACHE_CHUNKS) -> List[pathlib.Path]:
    """One `WSTP` file per enumerated patch, unpadded, named `patch_{row}_{col}.wsp`.

    Raises:
        ContainerIOError: the directory already holds patch files (without overwrite) or a write fails

    Returns:
        List[pathlib.Path]: files in row-major patch order
    """
    patch_h = patch_w if patch_h is None else patch_h
    out_dir = pathlib.Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise ContainerIOError(f'{out_dir} is not empty, pass overwrite to replace its contents')
    paths = []
    with ContainerReader(container_path, cache_chunks) as reader:
        meta = reader.meta
        _, cols = patch_grid(meta, patch_w, patch_h)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            for i, window in enumerate(enumerate_patches(meta, patch_w, patch_h)):
                path = out_dir / patch_file_name(*divmod(i, cols))
                with open(path, 'wb') as f:
                    f.write(_PATCH_HEADER.pack({'h': window.h, 'w': window.w, 'c': meta.channels,
                        'bytes_per_sample': meta.bytes_per_sample}))
                    f.write(reader.read_patch(window).tobytes())
                paths.append(path)
        except OSError as err:
            raise ContainerIOError(f'exporting patches to {out_dir}: {err}') from err
    logger.info('exported %d patch files to %s', len(paths), out_dir)
    return paths


def load_patch_file(path: PathLike) -> np.ndarray:
    """Read one patch file.

    Raises:
        CorruptPatchFile: missing, bad header or wrong length, naming the file
    """
    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except OSError as err:
        raise CorruptPatchFile(path, f'unreadable: {err}') from err
    try:
        values, _ = _PATCH_HEADER.unpack(raw)
        dtype = _dtype(values['bytes_per_sample'])
    except (FieldError, KeyError) as err:
        raise CorruptPatchFile(path, f'bad header: {err}') from err
    shape = (values['h'], values['w'], values['c'])
    expected = PATCH_HEADER_SIZE + shape[0] * shape[1] * shape[2] * dtype.itemsize
    if len(raw) != expected:
        raise CorruptPatchFile(path, f'{len(raw)} bytes, header describes {expected}')
    return np.frombuffer(raw, dtype=dtype, offset=PATCH_HEADER_SIZE).reshape(shape)


def list_patch_files(directory: PathLike) -> List[pathlib.Path]:
    """Patch files of an export, sorted by name."""
    return sorted(pathlib.Path(directory).glob('patch_*' + PATCH_SUFFIX))


RECORD_FIELDS = ('method', 'run_id', 'wsi_id', 'n_workers', 'wall_seconds', 'bytes_read')


@dataclasses.dataclass(frozen=True)
class BenchRecord:
    method: Method
    wsi_id: str
    run_id: int
    n_workers: int
    patches_read: int
    wall_seconds: float
    bytes_read: int
    chunks_touched: Optional[int] = None
    cache_chunks: Optional[int] = None

    def to_csv_row(self) -> dict:
        return {
            'method': self.method.value,
            'run_id': self.run_id,
            'wsi_id': self.wsi_id,
            'n_workers': self.n_workers,
            'wall_seconds': repr(self.wall_seconds),
            'bytes_read': self.bytes_read,
        }


def _elapsed(start: float) -> float:
    # a record must report positive time even on coarse clocks
    return max(time.perf_counter() - start, 1e-9)


def bench_whole_array(blob_path: PathLike, patch_w: int=defaults.PATCH_EDGE, patch_h: Optional[int]=None,
        memory_budget: Optional[int]=defaults.MEMORY_BUDGET, wsi_id: Optional[str]=None, run_id: int=0) -> BenchRecord:
    """Time a full blob load followed by sequential slicing of every patch, one worker.

    Raises:
        CorruptBlob, MemoryBudgetExceeded
    """
    patch_h = patch_w if patch_h is None else patch_h
    blob_path = pathlib.Path(blob_path)
    start = time.perf_counter()
    image = load_blob(blob_path, memory_budget)
    height, width, channels = image.shape
    count = 0
    for y in range(0, height, patch_h):
        for x in range(0, width, patch_w):
            np.array(image[y:y + patch_h, x:x + patch_w])
            count += 1
    wall = _elapsed(start)
    return BenchRecord(Method.WHOLE_ARRAY, wsi_id or blob_path.stem, run_id, 1, count, wall, blob_path.stat().st_size)


def _load_files(paths: Sequence[pathlib.Path]) -> int:
    total = 0
    for path in paths:
        load_patch_file(path)
        total += path.stat().st_size
    return total


def bench_patch_files(directory: PathLike, n_workers: int=defaults.BENCH_WORKERS, wsi_id: Optional[str]=None,
        run_id: int=0) -> BenchRecord:
    """Time n_workers threads loading disjoint slices of the sorted patch file list
    (regions per `assign_regions`). The clock wraps the whole parallel section.

    Raises:
        InvalidArgument: no patch files in the directory
        CorruptPatchFile: naming the first bad file
    """
    directory = pathlib.Path(directory)
    files = list_patch_files(directory)
    if not files:
        raise InvalidArgument(f'{directory} holds no patch files')
    regions = assign_regions(len(files), n_workers)
    start = time.perf_counter()
    with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(_load_files, files[r.start:r.end]) for r in regions]
        bytes_read = sum(f.result() for f in futures)
    wall = _elapsed(start)
    return BenchRecord(Method.PATCH_PER_FILE, wsi_id or directory.name, run_id, n_workers, len(files), wall, bytes_read)


def _read_region(reader: ContainerReader, windows: Sequence[PatchWindow]):
    batch = DeferredBatch(reader)
    for window in windows:
        batch.defer_read(window)
    return batch.perform_reads()


def bench_chunked(container_path: PathLike, patch_w: int=defaults.PATCH_EDGE, patch_h: Optional[int]=None,
        n_workers: int=defaults.BENCH_WORKERS, cache_chunks: int=defaults.CACHE_CHUNKS, run_id: int=0) -> BenchRecord:
    """Time n_workers threads sharing one reader, each resolving its region of patches as a
    single deferred batch. Opening the container is inside the timed section.
    `chunks_touched` counts distinct grid cells, `bytes_read` every chunk load.
    """
    patch_h = patch_w if patch_h is None else patch_h
    start = time.perf_counter()
    with ContainerReader(container_path, cache_chunks) as reader:
        windows = enumerate_patches(reader.meta, patch_w, patch_h)
        regions = assign_regions(len(windows), n_workers)
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_read_region, reader, windows[r.start:r.end]) for r in regions]
            reports = [f.result() for f in futures]
        wall = _elapsed(start)
        wsi_id = reader.meta.image_id
        # regions can share edge chunks, count each cell once
        touched = len({cell for w in windows for cell in reader.chunks_for(w)})
    return BenchRecord(Method.CHUNKED_STORE, wsi_id, run_id, n_workers, len(windows), wall,
        sum(r.bytes_read for r in reports), touched, cache_chunks)


@dataclasses.dataclass(frozen=True)
class MethodStats:
    runs: int
    total_seconds: float
    mean_seconds_per_run: float
    stddev_seconds: float


@dataclasses.dataclass(frozen=True)
class BenchSummary:
    methods: Dict[Method, MethodStats]

    def __getitem__(self, method: Method) -> MethodStats:
        return self.methods[method]


def summarize(records: Iterable[BenchRecord], runs: int) -> BenchSummary:
    """Per-method totals, per-run means and sample standard deviations. A run's time is
    the sum of its records (every image of the run).

    Args:
        records (Iterable[BenchRecord]): records of every method
        runs (int): runs each method must have

    Raises:
        InvalidArgument: no records, or a method whose run count differs from runs

    Returns:
        BenchSummary: stats keyed by method, in Method order
    """
    records = list(records)
    if not records:
        raise InvalidArgument('no benchmark records to summarize')
    if runs < 1:
        raise InvalidArgument(f'runs must be positive, got {runs}')
    per_run: Dict[Method, Dict[int, float]] = {}
    for r in records:
        per_run.setdefault(r.method, {}).setdefault(r.run_id, 0.0)
        per_run[r.method][r.run_id] += r.wall_seconds
    stats = {}
    for method in Method:
        if method not in per_run:
            continue
        times = np.array([per_run[method][k] for k in sorted(per_run[method])], dtype=np.float64)
        if len(times) != runs:
            raise InvalidArgument(f'{method.value} has {len(times)} runs, expected {runs}')
        total = float(times.sum())
        stddev = float(times.std(ddof=1)) if runs > 1 else 0.0
        stats[method] = MethodStats(runs, total, total / runs, stddev)
    return BenchSummary(stats)


def speedup_ratios(summary: BenchSummary) -> Dict[str, float]:
    """Baseline total / chunked total for every baseline present."""
    ratios = {}
    if Method.CHUNKED_STORE not in summary.methods:
        return ratios
    chunked = summary[Method.CHUNKED_STORE].total_seconds
    for method in (Method.WHOLE_ARRAY, Method.PATCH_PER_FILE):
        if method in summary.methods and chunked > 0:
            ratios[method.value] = summary[method].total_seconds / chunked
    return ratios


def gate_passes(summary: BenchSummary, threshold: float=0.75) -> Optional[bool]:
    """True when chunked total <= threshold * every baseline total, None if nothing to compare."""
    ratios = speedup_ratios(summary)
    if not ratios:
        return None
    return all(1.0 / r <= threshold for r in ratios.values())


def format_table(summary: BenchSummary) -> str:
    lines = [f'{"methods":<16}{"Total time(s)":>16}{"Mean time(s)/run":>20}{"Standard deviation(s)":>24}']
    for method, s in summary.methods.items():
        lines.append(f'{method.value:<16}{s.total_seconds:>16.3f}{s.mean_seconds_per_run:>20.3f}{s.stddev_seconds:>24.3f}')
    return '\n'.join(lines)


def emit_report(summary: BenchSummary, records: Iterable[BenchRecord], out_dir: PathLike,
        protocol: Optional[Dict[str, object]]=None) -> str:
    """Write `bench.csv` (one row per record) and `bench_table.txt` (the summary table,
    speedup lines and the run protocol). Returns the text written to the table file.
    """
    out_dir = pathlib.Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / 'bench.csv', 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=RECORD_FIELDS)
            writer.writeheader()
            for r in records:
                writer.writerow(r.to_csv_row())
        lines = [format_table(summary), '']
        for name, ratio in speedup_ratios(summary).items():
            lines.append(f'speedup {name} / {Method.CHUNKED_STORE.value}: {ratio:.2f}x')
        gate = gate_passes(summary)
        if gate is not None:
            lines.append(f'gate chunked <= 0.75 x baselines: {"PASS" if gate else "FAIL"}')
        for key, value in (protocol or {}).items():
            lines.append(f'{key}: {value}')
        text = '\n'.join(lines) + '\n'
        with open(out_dir / 'bench_table.txt', 'w') as f:
            f.write(text)
    except OSError as err:
        raise ContainerIOError(f'writing report to {out_dir}: {err}') from err
    return text


def read_records_csv(path: PathLike) -> List[BenchRecord]:
    """Parse a `bench.csv` back into records. Columns not in the csv come back as 0 / None."""
    with open(path, 'r', newline='') as f:
        return [
            BenchRecord(Method(row['method']), row['wsi_id'], int(row['run_id']), int(row['n_workers']), 0,
                float(row['wall_seconds']), int(row['bytes_read']))
            for row in csv.DictReader(f)
        ]


def _fadvise_dontneed(paths: Iterable[pathlib.Path]) -> None:
    for path in paths:
        fd = os.open(path, os.O_RDONLY)
        try:
            os.fsync(fd)
            os.posix_fadvise(fd, 0, 0, os.POSIX_FADV_DONTNEED)
        finally:
            os.close(fd)


def _thrash(decoy: pathlib.Path, nbytes: int, block: int=1 << 24) -> None:
    if not decoy.exists() or decoy.stat().st_size < nbytes:
        with open(decoy, 'wb') as f:
            buf = np.random.default_rng(0).integers(0, 256, block, dtype=np.uint8).tobytes()
            for _ in range(-(-nbytes // block)):
                f.write(buf)
    with open(decoy, 'rb') as f:
        while f.read(block):
            pass


def default_cache_protocol() -> CacheProtocol:
    return CacheProtocol.FADVISE if hasattr(os, 'posix_fadvise') else CacheProtocol.DECOY


def prepare_cold_cache(paths: Iterable[PathLike], protocol: CacheProtocol, decoy: Optional[PathLike]=None,
        memory_budget: int=defaults.MEMORY_BUDGET) -> CacheProtocol:
    """Push the measured files out of the page cache before a timed run.

    FADVISE drops each file's cached pages; DECOY reads a decoy file of at least twice the
    memory budget. Falls back from FADVISE to DECOY where posix_fadvise is missing.

    Returns:
        CacheProtocol: the protocol that actually ran
    """
    paths = [pathlib.Path(p) for p in paths]
    if protocol is CacheProtocol.FADVISE and not hasattr(os, 'posix_fadvise'):
        protocol = CacheProtocol.DECOY
    if protocol is CacheProtocol.FADVISE:
        files = []
        for p in paths:
            files.extend(sorted(p.iterdir()) if p.is_dir() else [p])
        _fadvise_dontneed(files)
    elif protocol is CacheProtocol.DECOY:
        if decoy is None:
            raise InvalidArgument('the decoy protocol needs a decoy path')
        _thrash(pathlib.Path(decoy), 2 * memory_budget)
    return protocol


def verify_equivalence(container_path: PathLike, blob_path: Optional[PathLike], patch_dir: Optional[PathLike],
        patch_w: int=defaults.PATCH_EDGE, patch_h: Optional[int]=None,
        memory_budget: Optional[int]=defaults.MEMORY_BUDGET) -> int:
    """Check, untimed, that the blob and patch files hold exactly the container's patches.

    Raises:
        EquivalenceError: naming the first mismatching patch file or window

    Returns:
        int: patches compared
    """
    patch_h = patch_w if patch_h is None else patch_h
    with ContainerReader(container_path) as reader:
        meta = reader.meta
        _, cols = patch_grid(meta, patch_w, patch_h)
        windows = enumerate_patches(meta, patch_w, patch_h)
        image = None
        if blob_path is not None:
            try:
                image = load_blob(blob_path, memory_budget)
            except (CorruptBlob, MemoryBudgetExceeded) as err:
                raise EquivalenceError(f'{blob_path}: {err}') from err
            if image.shape != meta.shape or image.dtype != meta.dtype:
                raise EquivalenceError(f'{blob_path}: shape {image.shape} does not match the container {meta.shape}')
        if patch_dir is not None:
            files = list_patch_files(patch_dir)
            if len(files) != len(windows):
                raise EquivalenceError(f'{patch_dir}: {len(files)} patch files, expected {len(windows)}')
        for i, window in enumerate(windows):
            expected = reader.read_patch(window)
            if image is not None:
                got = image[window.y:window.bottom, window.x:window.right]
                if not np.array_equal(got, expected):
                    raise EquivalenceError(f'{blob_path}: window {window} differs from the container')
            if patch_dir is not None:
                path = pathlib.Path(patch_dir) / patch_file_name(*divmod(i, cols))
                try:
                    got = load_patch_file(path)
                except CorruptPatchFile as err:
                    raise EquivalenceError(str(err)) from err
                if got.shape != expected.shape or not np.array_equal(got, expected):
                    raise EquivalenceError(f'{path}: content differs from container window {window}')
    return len(windows)


@dataclasses.dataclass
class SuiteResult:
    records: List[BenchRecord]
    export_seconds: Dict[str, float]
    protocol: Dict[str, object]


def materialize_exports(container_path: PathLike, work_dir: PathLike, patch_w: int, patch_h: int,
        methods: Sequence[Method]) -> Tuple[Optional[pathlib.Path], Optional[pathlib.Path], float]:
    """Create the blob and patch-file layouts next to each other unless they already exist.

    Returns:
        Tuple[Optional[pathlib.Path], Optional[pathlib.Path], float]: blob path, patch dir, export seconds
    """
    work_dir = pathlib.Path(work_dir)
    stem = pathlib.Path(container_path).stem
    blob = work_dir / f'{stem}.wstb' if Method.WHOLE_ARRAY in methods else None
    patches = work_dir / f'{stem}_patches_{patch_w}x{patch_h}' if Method.PATCH_PER_FILE in methods else None
    work_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if blob is not None and not blob.exists():
        export_whole_blob(container_path, blob)
    if patches is not None and not list_patch_files(patches):
        export_patch_files(container_path, patches, patch_w, patch_h, overwrite=True)
    return blob, patches, time.perf_counter() - start


def run_suite(containers: Sequence[PathLike],
        work_dir: PathLike,
        methods: Sequence[Method]=tuple(Method),
        runs: int=defaults.RUNS,
        n_workers: int=defaults.BENCH_WORKERS,
        patch_w: int=defaults.PATCH_EDGE,
        patch_h: Optional[int]=None,
        cache_chunks: int=defaults.CACHE_CHUNKS,
        cold_cache: CacheProtocol=CacheProtocol.NONE,
        memory_budget: Optional[int]=defaults.MEMORY_BUDGET,
        verify: bool=True) -> SuiteResult:
    """Run `runs` runs, each reading every container with every selected method.

    Exports are materialized once up front and their time is reported separately. With
    verify, cross-method equivalence is checked before anything is timed.

    Raises:
        EquivalenceError: the layouts disagree
    """
    patch_h = patch_w if patch_h is None else patch_h
    work_dir = pathlib.Path(work_dir)
    layouts = {}
    export_seconds = {}
    for container in containers:
        blob, patches, seconds = materialize_exports(container, work_dir, patch_w, patch_h, methods)
        layouts[container] = (blob, patches)
        export_seconds[str(container)] = seconds
        logger.info('exports for %s ready in %.3fs', container, seconds)
        if verify:
            n = verify_equivalence(container, blob, patches, patch_w, patch_h, memory_budget)
            logger.info('%s: %d patches identical across layouts', container, n)
    ran = CacheProtocol.NONE
    records = []
    for run_id in range(runs):
        for container in containers:
            blob, patches = layouts[container]
            wsi_id = pathlib.Path(container).stem
            for method in methods:
                measured = {Method.WHOLE_ARRAY: blob, Method.PATCH_PER_FILE: patches,
                    Method.CHUNKED_STORE: pathlib.Path(container)}[method]
                if cold_cache is not CacheProtocol.NONE:
                    ran = prepare_cold_cache([measured], cold_cache, work_dir / 'decoy.bin',
                        memory_budget or defaults.MEMORY_BUDGET)
                if method is Method.WHOLE_ARRAY:
                    record = bench_whole_array(blob, patch_w, patch_h, memory_budget, wsi_id, run_id)
                elif method is Method.PATCH_PER_FILE:
                    record = bench_patch_files(patches, n_workers, wsi_id, run_id)
                else:
                    record = bench_chunked(container, patch_w, patch_h, n_workers, cache_chunks, run_id)
                    record = dataclasses.replace(record, wsi_id=wsi_id)
                logger.info('run %d %s %s: %.3fs', run_id, wsi_id, method.value, record.wall_seconds)
                records.append(record)
    protocol = {
        'cache_protocol': ran.value,
        'n_workers': n_workers,
        'cache_chunks': cache_chunks,
        'patch': f'{patch_w}x{patch_h}',
        'runs': runs,
        'images_per_run': len(containers),
    }
    for container, seconds in export_seconds.items():
        protocol[f'export_seconds[{pathlib.Path(container).name}]'] = f'{seconds:.3f}'
    return SuiteResult(records, export_seconds, protocol)
