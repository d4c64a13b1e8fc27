import csv
import pytest
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from wstiles.container import ImageMeta
from wstiles.errors import InvalidArgument, ShapeMismatch
from wstiles.partition import (ASSIGNMENT_FIELDS, PadSpec, RegionAssignment, apply_padding, assign_regions,
    crop_padding, enumerate_patches, pad_spec_for, patch_grid, write_assignments_csv)
from wstiles.reader import PatchWindow

tc = unittest.TestCase()


def test_enumerate_patches():
    meta = ImageMeta('x', 10000, 8000)
    windows = enumerate_patches(meta, 4096, 4096)
    assert len(windows) == 6
    assert windows[2] == PatchWindow(8192, 0, 1808, 4096)
    assert windows[5] == PatchWindow(8192, 4096, 1808, 3904)
    assert patch_grid(meta, 4096, 4096) == (2, 3)

    assert enumerate_patches(ImageMeta('x', 512, 512), 512, 512) == [PatchWindow(0, 0, 512, 512)]

    exact = enumerate_patches(ImageMeta('x', 1024, 1024), 512, 512)
    assert len(exact) == 4
    assert all((w.w, w.h) == (512, 512) for w in exact)

    with pytest.raises(InvalidArgument):
        enumerate_patches(meta, 0, 512)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 700), st.integers(1, 700), st.integers(1, 300), st.integers(1, 300))
def test_enumerate_patches_cover_image(width, height, patch_w, patch_h):
    meta = ImageMeta('x', width, height, channels=1)
    windows = enumerate_patches(meta, patch_w, patch_h)
    assert len(windows) == -(-width // patch_w) * -(-height // patch_h)
    assert sum(w.w * w.h for w in windows) == width * height
    hits = np.zeros((height, width), dtype=np.uint8)
    for w in windows:
        hits[w.y:w.bottom, w.x:w.right] += 1
    assert (hits == 1).all()


@pytest.mark.parametrize('n_patches,n_workers,sizes', [
    (10, 3, [3, 3, 4]),
    (6, 3, [2, 2, 2]),
    (2, 8, [0, 0, 0, 0, 0, 0, 0, 2]),
    (6, 4, [1, 1, 1, 3]),
    (0, 2, [0, 0]),
    (5, 1, [5]),
])
def test_assign_regions(n_patches, n_workers, sizes):
    regions = assign_regions(n_patches, n_workers)
    assert [r.size for r in regions] == sizes
    assert [r.worker_id for r in regions] == list(range(n_workers))
    assert regions[0].start == 0
    assert regions[-1].end == n_patches
    for a, b in zip(regions, regions[1:]):
        assert a.end == b.start


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10000), st.integers(1, 64))
def test_assign_regions_conservation(n_patches, n_workers):
    regions = assign_regions(n_patches, n_workers)
    sizes = [r.size for r in regions]
    assert sum(sizes) == n_patches
    assert len(set(sizes[:-1])) <= 1
    assert 0 <= sizes[-1] - sizes[0] < n_workers


def test_assign_regions_errors():
    with pytest.raises(InvalidArgument):
        assign_regions(10, 0)
    with pytest.raises(InvalidArgument):
        assign_regions(-1, 2)


def test_assignments_csv(tmp_path):
    path = tmp_path / 'assignments.csv'
    write_assignments_csv(assign_regions(10, 3), path)
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        assert tuple(reader.fieldnames) == ASSIGNMENT_FIELDS
        rows = list(reader)
    tc.assertDictEqual({'worker_id': '2', 'start': '6', 'end': '10'}, rows[-1])
    assert list(RegionAssignment(0, 3, 5).indices()) == [3, 4]


def test_pad_spec_for():
    meta = ImageMeta('x', 10000, 8000)
    spec = pad_spec_for(PatchWindow(8192, 0, 1808, 4096), meta, 4096, 4096)
    assert (spec.pad_top, spec.pad_left, spec.pad_bottom, spec.pad_right) == (0, 0, 0, 2288)

    corner = pad_spec_for(PatchWindow(8192, 4096, 1808, 3904), meta, 4096, 4096)
    assert (corner.pad_top, corner.pad_left, corner.pad_bottom, corner.pad_right) == (0, 0, 192, 2288)

    interior = pad_spec_for(PatchWindow(0, 0, 4096, 4096), meta, 4096, 4096)
    assert interior.is_identity

    with pytest.raises(InvalidArgument):
        pad_spec_for(PatchWindow(0, 0, 600, 512), meta, 512, 512)
    with pytest.raises(InvalidArgument):
        pad_spec_for(PatchWindow(9990, 0, 20, 512), meta, 512, 512)
    with pytest.raises(InvalidArgument):
        pad_spec_for(PatchWindow(0, 0, 512, 512), meta, 512, 512, fill=256)


def test_apply_padding():
    block = np.array([[[7]]], dtype=np.uint8)
    spec = PadSpec(0, 0, 0, 1, 0, patch_w=2, patch_h=1)
    assert apply_padding(block, spec)[:, :, 0].tolist() == [[7, 0]]

    identity = PadSpec(0, 0, 0, 0, 0, patch_w=1, patch_h=1)
    assert apply_padding(block, identity) is block

    with pytest.raises(ShapeMismatch):
        apply_padding(np.zeros((2, 2, 1), dtype=np.uint8), spec)


def test_apply_padding_pointwise():
    rng = np.random.default_rng(3)
    meta = ImageMeta('x', 1000, 700, channels=3, bytes_per_sample=2)
    window = PatchWindow(768, 512, 232, 188)
    block = rng.integers(0, 65536, size=window.shape(3), dtype=np.uint16)
    spec = pad_spec_for(window, meta, 256, 256, fill=4242)
    padded = apply_padding(block, spec)
    assert padded.shape == (256, 256, 3)
    assert padded.dtype == np.uint16
    assert np.array_equal(padded[:188, :232], block)
    assert (padded[188:] == 4242).all()
    assert (padded[:, 232:] == 4242).all()
    assert np.array_equal(crop_padding(padded, spec), block)

    with pytest.raises(ShapeMismatch):
        crop_padding(block, spec)
