from ._version import VERSION
__version__ = VERSION

from .errors import *
from .container import ImageMeta, ChunkGrid, TileVariable, ContainerIndex, Stain, \
    compute_chunk_grid, encode_index, decode_index
from .writer import RasterSource, ArraySource, RawRasterSource, SyntheticPattern, PatternKind, \
    ContainerWriter, create_container, ingest_raster, generate_synthetic
from .reader import PatchWindow, ContainerReader, DeferredBatch, open_container, defer_read, perform_reads
from .partition import RegionAssignment, PadSpec, enumerate_patches, assign_regions, pad_spec_for, \
    apply_padding, crop_padding
from .pipeline import PatchProcessor, PipelineReport, run_pipeline, threshold_mask

__all__ = (
    'ImageMeta',
    'ChunkGrid',
    'TileVariable',
    'ContainerIndex',
    'Stain',
    'compute_chunk_grid',
    'encode_index',
    'decode_index',
    'RasterSource',
    'ArraySource',
    'RawRasterSource',
    'SyntheticPattern',
    'PatternKind',
    'ContainerWriter',
    'create_container',
    'ingest_raster',
    'generate_synthetic',
    'PatchWindow',
    'ContainerReader',
    'DeferredBatch',
    'open_container',
    'defer_read',
    'perform_reads',
    'RegionAssignment',
    'PadSpec',
    'enumerate_patches',
    'assign_regions',
    'pad_spec_for',
    'apply_padding',
    'crop_padding',
    'PatchProcessor',
    'PipelineReport',
    'run_pipeline',
    'threshold_mask',
)
