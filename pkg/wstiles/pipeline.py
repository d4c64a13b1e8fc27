"""Multi-worker patch processing: each worker reads its region of patches with one deferred
batch, pads them, runs a processor and writes the cropped result into a shared output
container whose chunk grid is the patch grid.
"""
import abc
import concurrent.futures
import csv
import dataclasses
import logging
import os
import threading
import time
from typing import Dict, List, Optional, Union

import numpy as np

from . import defaults
from .container import ImageMeta
from .errors import InvalidArgument, ProcessorError
from .partition import RegionAssignment, apply_padding, assign_regions, crop_padding, enumerate_patches, pad_spec_for, patch_grid
from .reader import ContainerReader, DeferredBatch
from .writer import ContainerWriter

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


class PatchProcessor(abc.ABC):
    """Turns a padded patch into a one-channel 8-bit result of the same height and width."""
    name = 'processor'
    deterministic = True

    @abc.abstractmethod
    def apply(self, patch: np.ndarray, meta: ImageMeta) -> np.ndarray:
        ...


def threshold_mask(patch: np.ndarray, t: int) -> np.ndarray:
    """Binary mask: 255 where the mean over channels is at least t, else 0.

    Args:
        patch (np.ndarray): (h, w, channels) samples, padded or not
        t (int): threshold in sample units

    Returns:
        np.ndarray: (h, w, 1) uint8
    """
    mean = patch.mean(axis=2, keepdims=True, dtype=np.float64)
    return np.where(mean >= t, np.uint8(255), np.uint8(0))


class IdentityProcessor(PatchProcessor):
    """Gray conversion: integer mean over channels, 16-bit samples keep their high byte."""
    name = 'identity'

    def apply(self, patch: np.ndarray, meta: ImageMeta) -> np.ndarray:
        gray = patch.sum(axis=2, keepdims=True, dtype=np.uint64) // np.uint64(patch.shape[2])
        if meta.bytes_per_sample == 2:
            gray = gray >> np.uint64(8)
        return gray.astype(np.uint8)


class ThresholdProcessor(PatchProcessor):

    def __init__(self, t: int) -> None:
        self.t = t
        self.name = f'threshold:{t}'

    def apply(self, patch: np.ndarray, meta: ImageMeta) -> np.ndarray:
        return threshold_mask(patch, self.t)


def processor_from_name(text: str) -> PatchProcessor:
    """`identity` or `threshold:<t>`.

    Raises:
        InvalidArgument: unknown processor or bad threshold
    """
    name, _, arg = text.strip().partition(':')
    if name == 'identity' and not arg:
        return IdentityProcessor()
    if name == 'threshold':
        try:
            t = int(arg)
        except ValueError as err:
            raise InvalidArgument(f'bad threshold in `{text}`') from err
        if t < 0:
            raise InvalidArgument('threshold cannot be negative')
        return ThresholdProcessor(t)
    raise InvalidArgument(f'unknown processor `{text}`, expected identity or threshold:<t>')


REPORT_FIELDS = ('wsi_id', 'n_workers', 'patches_processed', 'wall_seconds', 'per_worker_seconds')


@dataclasses.dataclass
class PipelineReport:
    wsi_id: str
    n_workers: int
    patches_processed: int
    wall_seconds: float
    per_worker_seconds: List[float]
    assignments: List[RegionAssignment] = dataclasses.field(default_factory=list)
    processed: Dict[int, List[int]] = dataclasses.field(default_factory=dict)

    def to_csv_row(self) -> dict:
        return {
            'wsi_id': self.wsi_id,
            'n_workers': self.n_workers,
            'patches_processed': self.patches_processed,
            'wall_seconds': f'{self.wall_seconds:.6f}',
            'per_worker_seconds': ';'.join(f'{s:.6f}' for s in self.per_worker_seconds),
        }

    def write_csv(self, path: PathLike) -> None:
        with open(path, 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=REPORT_FIELDS)
            writer.writeheader()
            writer.writerow(self.to_csv_row())


def _run_region(reader: ContainerReader, writer: ContainerWriter, region: RegionAssignment, windows, cols: int,
        patch_w: int, patch_h: int, processor: PatchProcessor, fill: int, log: List[int]) -> float:
    start = time.perf_counter()
    batch = DeferredBatch(reader)
    tokens = [batch.defer_read(windows[i]) for i in region.indices()]
    batch.perform_reads()
    meta = reader.meta
    for i, token in zip(region.indices(), tokens):
        spec = pad_spec_for(windows[i], meta, patch_w, patch_h, fill)
        padded = apply_padding(batch.destination(token), spec)
        try:
            result = processor.apply(padded, meta)
        except Exception as err:
            raise ProcessorError(processor.name, i, str(err)) from err
        if not isinstance(result, np.ndarray) or result.shape != (patch_h, patch_w, 1) or result.dtype != np.uint8:
            shape = getattr(result, 'shape', None)
            raise ProcessorError(processor.name, i, f'returned {shape}, expected ({patch_h}, {patch_w}, 1) uint8')
        row, col = divmod(i, cols)
        writer.put_chunk(row, col, crop_padding(result, spec))
        log.append(i)
    return time.perf_counter() - start


def run_pipeline(input_path: PathLike,
        output_path: PathLike,
        patch_w: int=defaults.PIPELINE_PATCH_EDGE,
        patch_h: Optional[int]=None,
        n_workers: int=defaults.PIPELINE_WORKERS,
        processor: Optional[PatchProcessor]=None,
        fill: int=defaults.FILL,
        overwrite: bool=False,
        cache_chunks: int=defaults.CACHE_CHUNKS) -> PipelineReport:
    """Process every patch of a container and store the results as a new container.

    Patches are split into contiguous regions, one per worker (remainder to the last one).
    Each worker resolves its region with a single deferred batch, then pads, processes and
    crops patch by patch. Output chunk (r, c) is the result for patch (r, c); the output
    file is identical for any worker count.

    Args:
        input_path (PathLike): source container
        output_path (PathLike): result container, 1 channel, 1 byte per sample
        patch_w (int, optional): patch width. Defaults to 4096.
        patch_h (Optional[int], optional): patch height. Defaults to patch_w.
        n_workers (int, optional): worker threads. Defaults to 3.
        processor (Optional[PatchProcessor], optional): Defaults to IdentityProcessor().
        fill (int, optional): pad value. Defaults to 0.
        overwrite (bool, optional): replace an existing output. Defaults to False.
        cache_chunks (int, optional): reader cache capacity. Defaults to 64.

    Raises:
        InvalidArgument: bad worker count, patch size or fill
        ProcessorError: the processor failed or returned a wrongly shaped block
        WstcError: propagated reader and writer errors

    Returns:
        PipelineReport: timings and the per-worker processing log
    """
    patch_h = patch_w if patch_h is None else patch_h
    processor = IdentityProcessor() if processor is None else processor
    if n_workers < 1:
        raise InvalidArgument(f'need at least one worker, got {n_workers}')
    start = time.perf_counter()
    with ContainerReader(input_path, cache_chunks) as reader:
        meta = reader.meta
        _, cols = patch_grid(meta, patch_w, patch_h)
        windows = enumerate_patches(meta, patch_w, patch_h)
        regions = assign_regions(len(windows), n_workers)
        if not 0 <= fill <= meta.max_sample:
            raise InvalidArgument(f'fill {fill} outside the sample range 0..{meta.max_sample}')
        out_meta = meta.replace(channels=1, bytes_per_sample=1)
        logs: Dict[int, List[int]] = {r.worker_id: [] for r in regions}
        seconds: Dict[int, float] = {}
        logger.info('pipeline %s: %d patches of %dx%d over %d workers (%s)', meta.image_id, len(windows),
            patch_w, patch_h, n_workers, ', '.join(str(r.size) for r in regions))
        with ContainerWriter(output_path, out_meta, patch_w, patch_h, overwrite) as writer:
            with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as pool:
                futures = {
                    pool.submit(_run_region, reader, writer, region, windows, cols, patch_w, patch_h,
                        processor, fill, logs[region.worker_id]): region.worker_id
                    for region in regions
                }
                for future in concurrent.futures.as_completed(futures):
                    seconds[futures[future]] = future.result()
            writer.finalize()
    report = PipelineReport(
        wsi_id=meta.image_id,
        n_workers=n_workers,
        patches_processed=sum(len(v) for v in logs.values()),
        wall_seconds=time.perf_counter() - start,
        per_worker_seconds=[seconds[r.worker_id] for r in regions],
        assignments=regions,
        processed=logs)
    logger.info('pipeline %s: %d patches in %.3fs', meta.image_id, report.patches_processed, report.wall_seconds)
    return report
