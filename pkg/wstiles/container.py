"""The container format: image metadata, the chunk grid, tile variables and the footer index.

Layout on disk, all integers little-endian:

    header (16) | chunk payloads, 8-byte aligned | index section | trailer (24)

The index section is a meta block followed by one record per tile variable in
row-major order. The trailer points at the index and carries its crc32. See
``extras/format.md`` for the field tables.
"""
import dataclasses
import enum
import logging
import zlib
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from . import defaults, mappings
from .errors import (CorruptIndex, FieldError, InvalidArgument, InvalidIndex, NotAContainer,
    UnsupportedVersion)
from .fields import Block, header_fields, meta_fields, trailer_fields, variable_fields

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
HEADER_SIZE = 16
TRAILER_SIZE = 24
ALIGNMENT = 8

_HEADER = Block('header', header_fields)
_TRAILER = Block('trailer', trailer_fields)
_VARIABLE = Block('variable', variable_fields)

Buffer = Union[bytes, bytearray, memoryview]


class Stain(enum.Enum):
    HE = 'HE'
    PAS = 'PAS'
    SIL = 'SIL'
    TOL = 'TOL'
    TRI = 'TRI'
    OTHER = 'OTHER'

    @property
    def description(self) -> str:
        return mappings.STAINS[self.name]


def tile_name(row: int, col: int) -> str:
    return f'tile/{row}/{col}'


def align(offset: int, alignment: int=ALIGNMENT) -> int:
    return -(-offset // alignment) * alignment


def crc32(data: Buffer) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


@dataclasses.dataclass(frozen=True)
class ImageMeta:
    """Dimensions and acquisition metadata of one image."""
    image_id: str
    width_px: int
    height_px: int
    channels: int = 3
    bytes_per_sample: int = 1
    microns_per_pixel: float = 0.25
    magnification: float = 40.0
    stain: Stain = Stain.OTHER

    def __post_init__(self) -> None:
        if not isinstance(self.image_id, str):
            raise InvalidArgument('image_id must be a string')
        if len(self.image_id.encode('utf-8')) > 0xFFFF:
            raise InvalidArgument('image_id longer than 65535 utf-8 bytes')
        if self.width_px < 1 or self.height_px < 1:
            raise InvalidArgument(f'image must be at least 1x1, got {self.width_px}x{self.height_px}')
        if self.channels not in (1, 3, 4):
            raise InvalidArgument(f'channels must be 1, 3 or 4, got {self.channels}')
        if self.bytes_per_sample not in mappings.SAMPLE_DTYPES:
            raise InvalidArgument(f'bytes_per_sample must be 1 or 2, got {self.bytes_per_sample}')
        if not self.microns_per_pixel > 0:
            raise InvalidArgument('microns_per_pixel must be positive')
        if not self.magnification > 0:
            raise InvalidArgument('magnification must be positive')
        if not isinstance(self.stain, Stain):
            raise InvalidArgument(f'stain must be a Stain, got {self.stain!r}')

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(mappings.SAMPLE_DTYPES[self.bytes_per_sample])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.height_px, self.width_px, self.channels)

    @property
    def pixel_bytes(self) -> int:
        return self.channels * self.bytes_per_sample

    @property
    def nbytes(self) -> int:
        return self.width_px * self.height_px * self.pixel_bytes

    @property
    def max_sample(self) -> int:
        return (1 << (8 * self.bytes_per_sample)) - 1

    def window_nbytes(self, w: int, h: int) -> int:
        return w * h * self.pixel_bytes

    def replace(self, **changes) -> 'ImageMeta':
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class ChunkGrid:
    chunk_w: int
    chunk_h: int
    cols: int
    rows: int

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def cells(self) -> Iterator[Tuple[int, int]]:
        """Yields (row, col) in row-major order."""
        for r in range(self.rows):
            for c in range(self.cols):
                yield r, c

    def chunk_rect(self, meta: ImageMeta, row: int, col: int) -> Tuple[int, int, int, int]:
        """The pixel rectangle of one chunk, truncated at the image edge.

        Returns:
            Tuple[int, int, int, int]: x, y, w, h
        """
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise InvalidArgument(f'chunk ({row}, {col}) outside {self.rows}x{self.cols} grid')
        x, y = col * self.chunk_w, row * self.chunk_h
        return x, y, min(self.chunk_w, meta.width_px - x), min(self.chunk_h, meta.height_px - y)

    def intersecting(self, x: int, y: int, w: int, h: int) -> Iterator[Tuple[int, int]]:
        """Yields (row, col) of every chunk touched by the rectangle, row-major."""
        for r in range(y // self.chunk_h, (y + h - 1) // self.chunk_h + 1):
            for c in range(x // self.chunk_w, (x + w - 1) // self.chunk_w + 1):
                yield r, c


@dataclasses.dataclass(frozen=True)
class TileVariable:
    name: str
    row: int
    col: int
    logical_h: int
    logical_w: int
    channels: int
    byte_offset: int
    byte_length: int
    crc32: int

    @property
    def byte_end(self) -> int:
        return self.byte_offset + self.byte_length


@dataclasses.dataclass(frozen=True)
class ContainerIndex:
    meta: ImageMeta
    grid: ChunkGrid
    variables: Tuple[TileVariable, ...]
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        object.__setattr__(self, 'variables', tuple(self.variables))

    def variable(self, row: int, col: int) -> TileVariable:
        if not (0 <= row < self.grid.rows and 0 <= col < self.grid.cols):
            raise InvalidArgument(f'chunk ({row}, {col}) outside {self.grid.rows}x{self.grid.cols} grid')
        return self.variables[row * self.grid.cols + col]

    @property
    def data_end(self) -> int:
        """First byte past the data section, aligned."""
        end = max((v.byte_end for v in self.variables), default=HEADER_SIZE)
        return align(end)

    @property
    def payload_bytes(self) -> int:
        return sum(v.byte_length for v in self.variables)


def compute_chunk_grid(meta: ImageMeta, chunk_w: int=defaults.CHUNK_EDGE, chunk_h: Optional[int]=None) -> ChunkGrid:
    """Lay a fixed chunk grid over the image. Edge chunks are truncated, never padded.

    Args:
        meta (ImageMeta): The image.
        chunk_w (int, optional): chunk width in px. Defaults to 4096.
        chunk_h (Optional[int], optional): chunk height in px. Defaults to chunk_w.

    Raises:
        InvalidArgument: If a chunk dimension is not positive.

    Returns:
        ChunkGrid: the grid
    """
    chunk_h = chunk_w if chunk_h is None else chunk_h
    if chunk_w < 1 or chunk_h < 1:
        raise InvalidArgument(f'chunk dimensions must be positive, got {chunk_w}x{chunk_h}')
    return ChunkGrid(chunk_w, chunk_h, -(-meta.width_px // chunk_w), -(-meta.height_px // chunk_h))


def plan_layout(meta: ImageMeta, grid: ChunkGrid) -> List[Tuple[int, int, int, int, int, int]]:
    """Byte extents for every chunk of the grid, row-major, each starting 8-byte aligned
    right after the previous one. The layout depends only on meta and grid so the file
    comes out identical whatever order chunks are written in.

    Returns:
        List[Tuple[int, int, int, int, int, int]]: (row, col, logical_h, logical_w, byte_offset, byte_length)
    """
    plan = []
    cursor = HEADER_SIZE
    for r, c in grid.cells():
        _, _, w, h = grid.chunk_rect(meta, r, c)
        length = meta.window_nbytes(w, h)
        plan.append((r, c, h, w, cursor, length))
        cursor = align(cursor + length)
    return plan


def validate_index(index: ContainerIndex) -> None:
    """Check every ContainerIndex invariant.

    Raises:
        InvalidIndex: naming the first violation found.
    """
    meta, grid = index.meta, index.grid
    if index.format_version != FORMAT_VERSION:
        raise InvalidIndex(f'format_version {index.format_version} != {FORMAT_VERSION}')
    try:
        expected = compute_chunk_grid(meta, grid.chunk_w, grid.chunk_h)
    except InvalidArgument as err:
        raise InvalidIndex(str(err)) from err
    if expected != grid:
        raise InvalidIndex(f'grid {grid} does not match the image, expected {expected}')
    if len(index.variables) != grid.count:
        raise InvalidIndex(f'incomplete container: {len(index.variables)} variables for a '
                           f'{grid.rows}x{grid.cols} grid')
    extents = []
    for k, v in enumerate(index.variables):
        row, col = divmod(k, grid.cols)
        if (v.row, v.col) != (row, col):
            raise InvalidIndex(f'variable {k} is ({v.row}, {v.col}), expected row-major ({row}, {col})')
        if v.name != tile_name(row, col):
            raise InvalidIndex(f'variable {k} is named `{v.name}`, expected `{tile_name(row, col)}`')
        _, _, w, h = grid.chunk_rect(meta, row, col)
        if (v.logical_h, v.logical_w) != (h, w):
            raise InvalidIndex(f'{v.name}: logical shape {v.logical_h}x{v.logical_w}, expected {h}x{w}')
        if v.channels != meta.channels:
            raise InvalidIndex(f'{v.name}: {v.channels} channels, image has {meta.channels}')
        if v.byte_length != meta.window_nbytes(w, h):
            raise InvalidIndex(f'{v.name}: byte_length {v.byte_length} != {meta.window_nbytes(w, h)}')
        if v.byte_offset < HEADER_SIZE or v.byte_offset % ALIGNMENT:
            raise InvalidIndex(f'{v.name}: byte_offset {v.byte_offset} not an aligned data offset')
        if not 0 <= v.crc32 <= 0xFFFFFFFF:
            raise InvalidIndex(f'{v.name}: crc32 out of range')
        extents.append((v.byte_offset, v.byte_end, v.name))
    extents.sort()
    for (_, end, a), (start, _, b) in zip(extents, extents[1:]):
        if start < end:
            raise InvalidIndex(f'extents of {a} and {b} overlap')


def _meta_values(index: ContainerIndex) -> dict:
    values = dataclasses.asdict(index.meta)
    values['stain'] = index.meta.stain
    values.update(dataclasses.asdict(index.grid))
    values['variable_count'] = len(index.variables)
    return values


def encode_header(version: int=FORMAT_VERSION) -> bytes:
    return _HEADER.pack({'format_version': version})


def encode_trailer(index_offset: int, index_length: int, index_crc32: int) -> bytes:
    return _TRAILER.pack({
        'index_offset': index_offset,
        'index_length': index_length,
        'index_crc32': index_crc32,
    })


def encode_index_section(index: ContainerIndex) -> bytes:
    """The index payload: meta block followed by the variable records, row-major.

    Raises:
        InvalidIndex: If the index breaks an invariant.

    Returns:
        bytes: deterministic encoding
    """
    validate_index(index)
    meta = Block('meta', meta_fields)
    try:
        parts = [meta.pack(_meta_values(index))]
        parts.extend(_VARIABLE.pack(dataclasses.asdict(v)) for v in index.variables)
    except FieldError as err:
        raise InvalidIndex(str(err)) from err
    return b''.join(parts)


def encode_index(index: ContainerIndex) -> bytes:
    """Encode the index as a minimal self-describing image: header, index section and a
    trailer pointing at it. `decode_index` inverts this.

    Args:
        index (ContainerIndex): A complete index.

    Raises:
        InvalidIndex: If the index breaks an invariant.

    Returns:
        bytes: header + index section + trailer
    """
    section = encode_index_section(index)
    return encode_header(index.format_version) + section + encode_trailer(HEADER_SIZE, len(section), crc32(section))


def decode_header(header: Buffer) -> int:
    """Validate the 16 header bytes and return the format version.

    Raises:
        NotAContainer: bad magic, flags or reserved bytes.
        UnsupportedVersion: a version other than 1.
    """
    try:
        values, _ = _HEADER.unpack(header)
    except FieldError as err:
        raise NotAContainer(f'bad header: {err}') from err
    if values['format_version'] != FORMAT_VERSION:
        raise UnsupportedVersion(f'format version {values["format_version"]} (supported: {FORMAT_VERSION})')
    return values['format_version']


def decode_trailer(trailer: Buffer) -> Tuple[int, int, int]:
    """Decode the 24 trailer bytes.

    Raises:
        NotAContainer: If the trailer is short or the end magic is wrong.

    Returns:
        Tuple[int, int, int]: index_offset, index_length, index_crc32
    """
    if len(trailer) != TRAILER_SIZE:
        raise NotAContainer(f'trailer is {len(trailer)} bytes, expected {TRAILER_SIZE}')
    try:
        values, _ = _TRAILER.unpack(trailer)
    except FieldError as err:
        raise NotAContainer(f'bad trailer: {err}') from err
    return values['index_offset'], values['index_length'], values['index_crc32']


def decode_index_parts(header: Buffer, section: Buffer, trailer: Buffer, file_size: int) -> ContainerIndex:
    """Decode an index from its three pieces without touching the data section.

    Args:
        header (Buffer): the first 16 bytes of the file
        section (Buffer): the index section located by the trailer
        trailer (Buffer): the last 24 bytes of the file
        file_size (int): total size, used to check the trailer's extents

    Raises:
        NotAContainer, UnsupportedVersion, CorruptIndex, InvalidIndex

    Returns:
        ContainerIndex: the decoded index
    """
    if file_size < HEADER_SIZE + TRAILER_SIZE or len(header) < HEADER_SIZE:
        raise NotAContainer(f'{file_size} bytes is too small for a container')
    version = decode_header(header[:HEADER_SIZE])
    index_offset, index_length, index_crc = decode_trailer(trailer)
    if index_offset < HEADER_SIZE or index_offset + index_length + TRAILER_SIZE != file_size:
        raise CorruptIndex(f'trailer points at [{index_offset}, +{index_length}) in a {file_size} byte file')
    if len(section) != index_length:
        raise CorruptIndex(f'index section is {len(section)} bytes, trailer says {index_length}')
    if crc32(section) != index_crc:
        raise CorruptIndex('index crc32 mismatch')
    try:
        index = _decode_section(section, version)
    except FieldError as err:
        raise CorruptIndex(f'undecodable index: {err}') from err
    validate_index(index)
    return index


def _decode_section(section: Buffer, version: int) -> ContainerIndex:
    values, offset = Block('meta', meta_fields).unpack(section)
    try:
        meta = ImageMeta(
            image_id=values['image_id'],
            width_px=values['width_px'],
            height_px=values['height_px'],
            channels=values['channels'],
            bytes_per_sample=values['bytes_per_sample'],
            microns_per_pixel=values['microns_per_pixel'],
            magnification=values['magnification'],
            stain=values['stain'])
    except InvalidArgument as err:
        raise InvalidIndex(f'bad image metadata: {err}') from err
    grid = ChunkGrid(values['chunk_w'], values['chunk_h'], values['cols'], values['rows'])
    variables = []
    for _ in range(values['variable_count']):
        record, offset = _VARIABLE.unpack(section, offset)
        variables.append(TileVariable(**record))
    if offset != len(section):
        raise FieldError(f'{len(section) - offset} trailing bytes after the last variable record')
    return ContainerIndex(meta, grid, tuple(variables), version)


def decode_index(data: Buffer) -> ContainerIndex:
    """Decode the index of a complete container image: a whole file or the output of
    `encode_index`.

    Args:
        data (Buffer): container bytes

    Raises:
        NotAContainer: bad magic or truncated trailer
        UnsupportedVersion: version other than 1
        CorruptIndex: crc mismatch or inconsistent trailer
        InvalidIndex: the decoded index breaks an invariant

    Returns:
        ContainerIndex: the index
    """
    view = memoryview(data)
    size = len(view)
    if size < HEADER_SIZE + TRAILER_SIZE:
        raise NotAContainer(f'{size} bytes is too small for a container')
    decode_header(view[:HEADER_SIZE])
    index_offset, index_length, _ = decode_trailer(view[size - TRAILER_SIZE:])
    section = view[index_offset:index_offset + index_length]
    return decode_index_parts(view[:HEADER_SIZE], section, view[size - TRAILER_SIZE:], size)
