"""Patch enumeration, worker assignment and edge padding.

Patches tile the image from the origin with stride equal to the patch size, so only
patches on the right and bottom edges come out short and only those get padded.
"""
import csv
import dataclasses
import os
from typing import Iterable, List, Tuple, Union

import numpy as np

from . import defaults
from .container import ImageMeta
from .errors import InvalidArgument, ShapeMismatch
from .reader import PatchWindow


def patch_grid(meta: ImageMeta, patch_w: int, patch_h: int) -> Tuple[int, int]:
    """Rows and columns of the patch grid.

    Raises:
        InvalidArgument: non-positive patch dimensions.

    Returns:
        Tuple[int, int]: rows, cols
    """
    if patch_w < 1 or patch_h < 1:
        raise InvalidArgument(f'patch dimensions must be positive, got {patch_w}x{patch_h}')
    return -(-meta.height_px // patch_h), -(-meta.width_px // patch_w)


def enumerate_patches(meta: ImageMeta, patch_w: int, patch_h: int) -> List[PatchWindow]:
    """Every patch window in row-major order. Edge windows are clipped to the image.

    Args:
        meta (ImageMeta): The image.
        patch_w (int): patch width in px
        patch_h (int): patch height in px

    Raises:
        InvalidArgument: non-positive patch dimensions.

    Returns:
        List[PatchWindow]: ceil(width/patch_w) * ceil(height/patch_h) windows
    """
    rows, cols = patch_grid(meta, patch_w, patch_h)
    windows = []
    for r in range(rows):
        y = r * patch_h
        h = min(patch_h, meta.height_px - y)
        for c in range(cols):
            x = c * patch_w
            windows.append(PatchWindow(x, y, min(patch_w, meta.width_px - x), h))
    return windows


ASSIGNMENT_FIELDS = ('worker_id', 'start', 'end')


@dataclasses.dataclass(frozen=True)
class RegionAssignment:
    """A worker's half-open slice [start, end) of the row-major patch sequence."""
    worker_id: int
    start: int
    end: int

    @property
    def size(self) -> int:
        return self.end - self.start

    def indices(self) -> range:
        return range(self.start, self.end)

    def to_csv_row(self) -> dict:
        return dataclasses.asdict(self)


def assign_regions(n_patches: int, n_workers: int) -> List[RegionAssignment]:
    """Split patches into contiguous regions. Every worker gets floor(n_patches / n_workers)
    patches and the last one also takes whatever is left over.

    Args:
        n_patches (int): patches to distribute
        n_workers (int): number of workers

    Raises:
        InvalidArgument: n_workers < 1 or n_patches < 0

    Returns:
        List[RegionAssignment]: one region per worker, ordered by worker id
    """
    if n_workers < 1:
        raise InvalidArgument(f'need at least one worker, got {n_workers}')
    if n_patches < 0:
        raise InvalidArgument(f'patch count cannot be negative, got {n_patches}')
    share = n_patches // n_workers
    regions = [RegionAssignment(w, w * share, (w + 1) * share) for w in range(n_workers - 1)]
    regions.append(RegionAssignment(n_workers - 1, (n_workers - 1) * share, n_patches))
    return regions


def write_assignments_csv(assignments: Iterable[RegionAssignment], path: Union[str, os.PathLike]) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=ASSIGNMENT_FIELDS)
        writer.writeheader()
        for a in assignments:
            writer.writerow(a.to_csv_row())


@dataclasses.dataclass(frozen=True)
class PadSpec:
    pad_top: int
    pad_left: int
    pad_bottom: int
    pad_right: int
    fill_value: int = defaults.FILL
    patch_w: int = 0
    patch_h: int = 0

    @property
    def is_identity(self) -> bool:
        return not (self.pad_top or self.pad_left or self.pad_bottom or self.pad_right)

    @property
    def window_shape(self) -> Tuple[int, int]:
        """(h, w) of the unpadded window."""
        return (self.patch_h - self.pad_top - self.pad_bottom, self.patch_w - self.pad_left - self.pad_right)


def pad_spec_for(window: PatchWindow, meta: ImageMeta, patch_w: int, patch_h: int, fill: int=defaults.FILL) -> PadSpec:
    """Padding that brings an enumerated window up to full patch size. Pads only go right
    and bottom, since windows are anchored at the grid origin.

    Args:
        window (PatchWindow): a window from `enumerate_patches` with the same patch size
        meta (ImageMeta): The image.
        patch_w (int): patch width
        patch_h (int): patch height
        fill (int, optional): pad sample value. Defaults to 0.

    Raises:
        InvalidArgument: window larger than the patch, outside the image, or fill out of range

    Returns:
        PadSpec: the padding
    """
    if window.w > patch_w or window.h > patch_h:
        raise InvalidArgument(f'window {window.w}x{window.h} larger than patch {patch_w}x{patch_h}')
    if window.right > meta.width_px or window.bottom > meta.height_px:
        raise InvalidArgument(f'window {window} leaves the {meta.width_px}x{meta.height_px} image')
    if not 0 <= fill <= meta.max_sample:
        raise InvalidArgument(f'fill {fill} outside the sample range 0..{meta.max_sample}')
    return PadSpec(0, 0, patch_h - window.h, patch_w - window.w, fill, patch_w, patch_h)


def apply_padding(pixels: np.ndarray, spec: PadSpec) -> np.ndarray:
    """Extend a window to full patch shape, original content top-left, pad uniformly fill.

    Args:
        pixels (np.ndarray): (h, w, channels) of the unpadded window
        spec (PadSpec): from `pad_spec_for`

    Raises:
        ShapeMismatch: pixels do not have the spec's window shape.

    Returns:
        np.ndarray: (patch_h, patch_w, channels)
    """
    if pixels.ndim != 3 or pixels.shape[:2] != spec.window_shape:
        raise ShapeMismatch(f'pixels {pixels.shape} do not match the unpadded window {spec.window_shape}')
    if spec.is_identity:
        return pixels
    return np.pad(pixels, ((spec.pad_top, spec.pad_bottom), (spec.pad_left, spec.pad_right), (0, 0)),
        mode='constant', constant_values=spec.fill_value)


def crop_padding(padded: np.ndarray, spec: PadSpec) -> np.ndarray:
    """Inverse of `apply_padding`: the unpadded window region of a full patch.

    Raises:
        ShapeMismatch: the block is not patch-sized.
    """
    if padded.shape[:2] != (spec.patch_h, spec.patch_w):
        raise ShapeMismatch(f'block {padded.shape} is not a {spec.patch_h}x{spec.patch_w} patch')
    h, w = spec.window_shape
    return padded[spec.pad_top:spec.pad_top + h, spec.pad_left:spec.pad_left + w]
