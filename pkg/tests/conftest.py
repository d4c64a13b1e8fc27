import pytest

from wstiles.container import ImageMeta, Stain
from wstiles.writer import PatternKind, SyntheticPattern, generate_synthetic, ingest_raster

MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64(z):
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sample_at(meta, pattern, x, y, ch):
    """Plain integer evaluation of a synthetic pattern at one coordinate."""
    top = (1 << (8 * meta.bytes_per_sample)) - 1
    if pattern.kind is PatternKind.GRADIENT:
        return (x + y + ch) & top
    if pattern.kind is PatternKind.CHECKER:
        cell = pattern.checker_cell
        return top if (x // cell + y // cell) % 2 == 0 else 0
    key = (y << 34) | (x << 2) | ch
    return _mix64(_mix64(key) ^ pattern.seed) & top


@pytest.fixture
def oracle():
    return sample_at


@pytest.fixture
def small_meta():
    return ImageMeta('small', 1024, 1024, channels=1, stain=Stain.HE)


@pytest.fixture(scope='session')
def seam_container(tmp_path_factory):
    """3000x2000 three channel prng image stored in 1024 chunks: 2 rows x 3 cols with truncated edges."""
    meta = ImageMeta('seam', 3000, 2000, channels=3, bytes_per_sample=1, microns_per_pixel=0.5,
        magnification=20.0, stain=Stain.PAS)
    source = generate_synthetic(meta, SyntheticPattern(PatternKind.PRNG, seed=11))
    path = tmp_path_factory.mktemp('seam') / 'seam.wstc'
    ingest_raster(source, path, 1024)
    return path, source


@pytest.fixture(scope='session')
def large_container(tmp_path_factory):
    """10000x8000 single channel prng image in the default 4096 chunks: 2 rows x 3 cols."""
    meta = ImageMeta('large', 10000, 8000, channels=1)
    source = generate_synthetic(meta, SyntheticPattern(PatternKind.PRNG, seed=3))
    path = tmp_path_factory.mktemp('large') / 'large.wstc'
    ingest_raster(source, path, 4096)
    return path, source


@pytest.fixture(scope='session')
def gradient_container(tmp_path_factory):
    meta = ImageMeta('gradient', 1024, 1024, channels=3)
    source = generate_synthetic(meta, SyntheticPattern(PatternKind.GRADIENT))
    path = tmp_path_factory.mktemp('gradient') / 'gradient.wstc'
    ingest_raster(source, path, 512)
    return path, source
