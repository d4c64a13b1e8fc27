"""Creating containers: raster sources (raw files, arrays, synthetic patterns) and the
single-writer lifecycle create -> put_chunk -> finalize.
"""
import abc
import dataclasses
import enum
import logging
import os
import pathlib
import threading
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import defaults
from .container import (ContainerIndex, ImageMeta, Stain, TileVariable, align, compute_chunk_grid,
    crc32, encode_header, encode_index_section, encode_trailer, plan_layout, tile_name)
from .errors import (ContainerIOError, DuplicateVariable, IncompleteContainer, InvalidArgument,
    InvalidState, ShapeMismatch, WindowOutOfBounds)

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

# samples rendered per band when generating synthetic windows
_BAND_SAMPLES = 1 << 22


class RasterSource(abc.ABC):
    """Anything that can hand out row-major windows of an image as (h, w, channels) arrays."""

    @property
    @abc.abstractmethod
    def meta(self) -> ImageMeta:
        ...

    @abc.abstractmethod
    def _read(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        ...

    def read_window(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        """Read a strict in-bounds window.

        Args:
            x (int): left edge in px
            y (int): top edge in px
            w (int): width in px
            h (int): height in px

        Raises:
            WindowOutOfBounds: If the window is empty or leaves the image.

        Returns:
            np.ndarray: (h, w, channels) samples of the image dtype
        """
        check_window(self.meta, x, y, w, h)
        return self._read(x, y, w, h)


def check_window(meta: ImageMeta, x: int, y: int, w: int, h: int) -> None:
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > meta.width_px or y + h > meta.height_px:
        raise WindowOutOfBounds(
            f'window (x={x}, y={y}, w={w}, h={h}) outside {meta.width_px}x{meta.height_px} image')


class ArraySource(RasterSource):

    def __init__(self, array: np.ndarray, meta: ImageMeta) -> None:
        """Serve windows from an in-memory image.

        Args:
            array (np.ndarray): (height, width, channels) array, or (height, width) for one channel.
            meta (ImageMeta): metadata matching the array.

        Raises:
            ShapeMismatch: If the array does not match meta.
        """
        if array.ndim == 2:
            array = array[:, :, None]
        if array.shape != meta.shape:
            raise ShapeMismatch(f'array shape {array.shape} != {meta.shape}')
        if array.dtype.kind != 'u' or array.dtype.itemsize != meta.bytes_per_sample:
            raise ShapeMismatch(f'array dtype {array.dtype} does not hold {meta.bytes_per_sample}-byte samples')
        self._array = array
        self._meta = meta

    @property
    def meta(self) -> ImageMeta:
        return self._meta

    def _read(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        return np.array(self._array[y:y + h, x:x + w], dtype=self._meta.dtype)


def sidecar_path(path: PathLike) -> pathlib.Path:
    return pathlib.Path(str(path) + '.meta')


def read_sidecar(path: PathLike, image_id: Optional[str]=None) -> ImageMeta:
    """Parse a `key=value` sidecar describing a raw raster. Blank lines and `#` comments are skipped.

    Args:
        path (PathLike): the sidecar file
        image_id (Optional[str], optional): used when the sidecar has no `image_id` key.

    Raises:
        InvalidArgument: If a key is missing or a value does not parse.

    Returns:
        ImageMeta: the metadata
    """
    entries = {}
    with open(path, 'r') as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            key, sep, value = line.partition('=')
            if not sep:
                raise InvalidArgument(f'{path}: expected key=value, got `{line}`')
            entries[key.strip()] = value.strip()
    try:
        return ImageMeta(
            image_id=entries.get('image_id', image_id or pathlib.Path(path).name.split('.')[0]),
            width_px=int(entries['width']),
            height_px=int(entries['height']),
            channels=int(entries['channels']),
            bytes_per_sample=int(entries['bytes_per_sample']),
            microns_per_pixel=float(entries['microns_per_pixel']),
            magnification=float(entries['magnification']),
            stain=Stain[entries['stain'].upper()])
    except KeyError as err:
        raise InvalidArgument(f'{path}: missing or unknown value for {err}') from err
    except ValueError as err:
        raise InvalidArgument(f'{path}: {err}') from err


def write_sidecar(meta: ImageMeta, path: PathLike) -> None:
    lines = [
        f'image_id={meta.image_id}',
        f'width={meta.width_px}',
        f'height={meta.height_px}',
        f'channels={meta.channels}',
        f'bytes_per_sample={meta.bytes_per_sample}',
        f'microns_per_pixel={meta.microns_per_pixel!r}',
        f'magnification={meta.magnification!r}',
        f'stain={meta.stain.name}',
    ]
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')


class RawRasterSource(RasterSource):

    def __init__(self, path: PathLike, sidecar: Optional[PathLike]=None) -> None:
        """A raw interleaved raster on disk, described by a sidecar text file.
        The raw file is memory mapped, windows are copied out on read.

        Args:
            path (PathLike): raw samples, row-major, channel-interleaved, little-endian
            sidecar (Optional[PathLike], optional): metadata file. Defaults to `<path>.meta`.

        Raises:
            ContainerIOError: If either file cannot be read.
            ShapeMismatch: If the raw file size disagrees with the sidecar.
        """
        self._path = pathlib.Path(path)
        sidecar = sidecar_path(path) if sidecar is None else sidecar
        try:
            self._meta = read_sidecar(sidecar, image_id=self._path.stem)
            size = self._path.stat().st_size
        except OSError as err:
            raise ContainerIOError(f'cannot read raster {path}: {err}') from err
        if size != self._meta.nbytes:
            raise ShapeMismatch(f'{path} holds {size} bytes, sidecar describes {self._meta.nbytes}')
        self._samples = np.memmap(self._path, dtype=self._meta.dtype, mode='r', shape=self._meta.shape)

    @property
    def meta(self) -> ImageMeta:
        return self._meta

    def _read(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        return np.array(self._samples[y:y + h, x:x + w])


def write_raw_raster(source: RasterSource, path: PathLike, band_rows: int=1024) -> pathlib.Path:
    """Materialize a source as a raw file plus `<path>.meta` sidecar.

    Returns:
        pathlib.Path: the raw file path
    """
    path = pathlib.Path(path)
    meta = source.meta
    with open(path, 'wb') as f:
        for y in range(0, meta.height_px, band_rows):
            h = min(band_rows, meta.height_px - y)
            f.write(source.read_window(0, y, meta.width_px, h).tobytes())
    write_sidecar(meta, sidecar_path(path))
    return path


class PatternKind(enum.Enum):
    GRADIENT = 'gradient'
    CHECKER = 'checker'
    PRNG = 'prng'


@dataclasses.dataclass(frozen=True)
class SyntheticPattern:
    kind: PatternKind = PatternKind.GRADIENT
    seed: int = 0
    checker_cell: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= 0xFFFFFFFFFFFFFFFF:
            raise InvalidArgument('seed must be an unsigned 64-bit integer')
        if self.checker_cell < 1:
            raise InvalidArgument('checker_cell must be at least 1')

    @property
    def label(self) -> str:
        """`gradient`, `checker-<cell>` or `prng-<seed>`."""
        if self.kind is PatternKind.CHECKER:
            return f'checker-{self.checker_cell}'
        if self.kind is PatternKind.PRNG:
            return f'prng-{self.seed}'
        return self.kind.value

    @classmethod
    def parse(cls, text: str, seed: int=0) -> 'SyntheticPattern':
        """Parse `gradient`, `checker:<cell>` or `prng`.

        Raises:
            InvalidArgument: on anything else.
        """
        name, _, arg = text.strip().lower().partition(':')
        if name == 'gradient' and not arg:
            return cls(PatternKind.GRADIENT, seed=seed)
        if name == 'prng' and not arg:
            return cls(PatternKind.PRNG, seed=seed)
        if name == 'checker':
            try:
                return cls(PatternKind.CHECKER, seed=seed, checker_cell=int(arg) if arg else 1)
            except ValueError as err:
                raise InvalidArgument(f'bad checker cell in `{text}`') from err
        raise InvalidArgument(f'unknown pattern `{text}`, expected gradient, checker:<cell> or prng')


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S2, _S27, _S30, _S31, _S34 = (np.uint64(s) for s in (2, 27, 30, 31, 34))


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


class SyntheticSource(RasterSource):

    def __init__(self, meta: ImageMeta, pattern: SyntheticPattern) -> None:
        """A closed-form image. Every sample is a pure function of (x, y, ch) so windows
        can be read in any order and always agree.

        Args:
            meta (ImageMeta): image geometry and sample width
            pattern (SyntheticPattern): which closed form to render
        """
        self._meta = meta
        self._pattern = pattern

    @property
    def meta(self) -> ImageMeta:
        return self._meta

    @property
    def pattern(self) -> SyntheticPattern:
        return self._pattern

    def _samples(self, xs: np.ndarray, ys: np.ndarray, cs: np.ndarray) -> np.ndarray:
        top = np.uint64(self._meta.max_sample)
        kind = self._pattern.kind
        if kind is PatternKind.GRADIENT:
            return (xs + ys + cs) & top
        if kind is PatternKind.CHECKER:
            cell = np.uint64(self._pattern.checker_cell)
            even = ((xs // cell + ys // cell) & np.uint64(1)) == 0
            return np.where(even, top, np.uint64(0))
        key = (ys << _S34) | (xs << _S2) | cs
        return _mix64(_mix64(key) ^ np.uint64(self._pattern.seed)) & top

    def _read(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        c = self._meta.channels
        out = np.empty((h, w, c), dtype=self._meta.dtype)
        band = max(1, _BAND_SAMPLES // (w * c))
        xs = np.arange(x, x + w, dtype=np.uint64)[None, :, None]
        cs = np.arange(c, dtype=np.uint64)[None, None, :]
        with np.errstate(over='ignore'):
            for y0 in range(y, y + h, band):
                rows = min(band, y + h - y0)
                ys = np.arange(y0, y0 + rows, dtype=np.uint64)[:, None, None]
                out[y0 - y:y0 - y + rows] = self._samples(xs, ys, cs)
        return out


def generate_synthetic(meta: ImageMeta, pattern: SyntheticPattern) -> SyntheticSource:
    return SyntheticSource(meta, pattern)


class ContainerWriter(object):

    def __init__(self,
        path: PathLike,
        meta: ImageMeta,
        chunk_w: int=defaults.CHUNK_EDGE,
        chunk_h: Optional[int]=None,
        overwrite: bool=False) -> None:
        """Write handle for one container. The header goes out immediately; every chunk lands at
        its planned offset, so chunks may arrive in any order. `put_chunk` is serialized
        internally and may be called from several threads.

        Args:
            path (PathLike): destination file
            meta (ImageMeta): the image being stored
            chunk_w (int, optional): chunk width in px. Defaults to 4096.
            chunk_h (Optional[int], optional): chunk height in px. Defaults to chunk_w.
            overwrite (bool, optional): replace an existing file. Defaults to False.

        Raises:
            InvalidArgument: bad meta or chunk dimensions.
            ContainerIOError: the file exists (without overwrite) or cannot be created.
        """
        if not isinstance(meta, ImageMeta):
            raise InvalidArgument('meta must be an ImageMeta')
        self._path = pathlib.Path(path)
        self._meta = meta
        self._grid = compute_chunk_grid(meta, chunk_w, chunk_h)
        self._plan = {(r, c): (h, w, off, n) for r, c, h, w, off, n in plan_layout(meta, self._grid)}
        self._written: Dict[Tuple[int, int], TileVariable] = {}
        self._lock = threading.Lock()
        try:
            self._file = open(self._path, 'wb' if overwrite else 'xb')
            self._file.write(encode_header())
        except FileExistsError as err:
            raise ContainerIOError(f'{self._path} exists, pass overwrite to replace it') from err
        except OSError as err:
            raise ContainerIOError(f'cannot create {self._path}: {err}') from err
        self._finalized = False
        self._closed = False
        logger.info('creating %s: %dx%d px, %dx%d grid of %dx%d chunks', self._path,
            meta.width_px, meta.height_px, self._grid.rows, self._grid.cols, self._grid.chunk_w, self._grid.chunk_h)

    @property
    def path(self) -> pathlib.Path:
        return self._path

    @property
    def meta(self) -> ImageMeta:
        return self._meta

    @property
    def grid(self):
        return self._grid

    @property
    def pending(self) -> List[Tuple[int, int]]:
        """Grid cells not written yet, row-major."""
        with self._lock:
            return [cell for cell in self._grid.cells() if cell not in self._written]

    def _coerce(self, row: int, col: int, pixels: Union[np.ndarray, bytes, bytearray, memoryview]) -> bytes:
        h, w, _, length = self._plan[(row, col)]
        if isinstance(pixels, np.ndarray):
            shape = pixels.shape if pixels.ndim == 3 else pixels.shape + (1,)
            if shape != (h, w, self._meta.channels):
                raise ShapeMismatch(f'{tile_name(row, col)}: got {pixels.shape}, expected {(h, w, self._meta.channels)}')
            if pixels.dtype.kind != 'u' or pixels.dtype.itemsize != self._meta.bytes_per_sample:
                raise ShapeMismatch(f'{tile_name(row, col)}: dtype {pixels.dtype} does not hold '
                                    f'{self._meta.bytes_per_sample}-byte samples')
            return np.ascontiguousarray(pixels, dtype=self._meta.dtype).tobytes()
        payload = bytes(pixels)
        if len(payload) != length:
            raise ShapeMismatch(f'{tile_name(row, col)}: {len(payload)} bytes, expected {length}')
        return payload

    def put_chunk(self, row: int, col: int, pixels: Union[np.ndarray, bytes, bytearray, memoryview]) -> TileVariable:
        """Persist one chunk.

        Args:
            row (int): grid row
            col (int): grid column
            pixels (Union[np.ndarray, bytes]): the chunk's logical shape as an array, or its raw bytes

        Raises:
            InvalidState: the writer was finalized or closed
            InvalidArgument: (row, col) outside the grid
            DuplicateVariable: the chunk was already written
            ShapeMismatch: wrong size, shape or sample width

        Returns:
            TileVariable: the recorded variable
        """
        if (row, col) not in self._plan:
            raise InvalidArgument(f'chunk ({row}, {col}) outside {self._grid.rows}x{self._grid.cols} grid')
        self._check_open()
        payload = self._coerce(row, col, pixels)
        h, w, offset, length = self._plan[(row, col)]
        variable = TileVariable(tile_name(row, col), row, col, h, w, self._meta.channels, offset, length, crc32(payload))
        gap = align(offset + length) - (offset + length)
        with self._lock:
            self._check_open()
            if (row, col) in self._written:
                raise DuplicateVariable(f'{variable.name} already written')
            try:
                self._file.seek(offset)
                self._file.write(payload)
                self._file.write(b'\x00' * gap)
            except OSError as err:
                raise ContainerIOError(f'writing {variable.name} to {self._path}: {err}') from err
            self._written[(row, col)] = variable
        logger.debug('%s: %d bytes at %d', variable.name, length, offset)
        return variable

    def _check_open(self) -> None:
        if self._finalized:
            raise InvalidState(f'{self._path} already finalized')
        if self._closed:
            raise InvalidState(f'writer for {self._path} is closed')

    def finalize(self) -> ContainerIndex:
        """Write the index and trailer. The handle is unusable afterwards.

        Raises:
            InvalidState: already finalized or closed
            IncompleteContainer: listing every chunk never written

        Returns:
            ContainerIndex: the index that was written
        """
        with self._lock:
            self._check_open()
            missing = [cell for cell in self._grid.cells() if cell not in self._written]
            if missing:
                raise IncompleteContainer(missing)
            index = ContainerIndex(self._meta, self._grid, tuple(self._written[cell] for cell in self._grid.cells()))
            section = encode_index_section(index)
            try:
                self._file.seek(index.data_end)
                self._file.write(section)
                self._file.write(encode_trailer(index.data_end, len(section), crc32(section)))
                self._file.close()
            except OSError as err:
                raise ContainerIOError(f'finalizing {self._path}: {err}') from err
            self._finalized = True
            self._closed = True
        logger.info('finalized %s: %d variables, %d payload bytes', self._path, len(index.variables), index.payload_bytes)
        return index

    def abort(self) -> None:
        """Close without finalizing and remove the partial file."""
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._file.close()
        logger.warning('aborted %s with %d of %d chunks written', self._path, len(self._written), self._grid.count)
        try:
            self._path.unlink()
        except OSError:
            pass

    def __enter__(self) -> 'ContainerWriter':
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None:
            self.abort()
        elif not self._finalized:
            self.abort()


def create_container(path: PathLike, meta: ImageMeta, chunk_w: int=defaults.CHUNK_EDGE,
        chunk_h: Optional[int]=None, overwrite: bool=False) -> ContainerWriter:
    """Open a writer handle, see `ContainerWriter`."""
    return ContainerWriter(path, meta, chunk_w, chunk_h, overwrite)


def ingest_raster(source: RasterSource, path: PathLike, chunk_w: int=defaults.CHUNK_EDGE,
        chunk_h: Optional[int]=None, overwrite: bool=False) -> ContainerIndex:
    """Copy every chunk of a source into a new container.

    Args:
        source (RasterSource): the image
        path (PathLike): destination container
        chunk_w (int, optional): chunk width. Defaults to 4096.
        chunk_h (Optional[int], optional): chunk height. Defaults to chunk_w.
        overwrite (bool, optional): replace an existing file. Defaults to False.

    Returns:
        ContainerIndex: the finalized index
    """
    with create_container(path, source.meta, chunk_w, chunk_h, overwrite) as writer:
        for r, c in writer.grid.cells():
            x, y, w, h = writer.grid.chunk_rect(source.meta, r, c)
            writer.put_chunk(r, c, source.read_window(x, y, w, h))
        return writer.finalize()
