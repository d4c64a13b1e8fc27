import csv
import pytest

import numpy as np

from wstiles.container import ImageMeta
from wstiles.errors import InvalidArgument, ProcessorError
from wstiles.pipeline import (REPORT_FIELDS, IdentityProcessor, PatchProcessor, ThresholdProcessor, processor_from_name,
    run_pipeline, threshold_mask)
from wstiles.reader import PatchWindow, open_container
from wstiles.writer import PatternKind, SyntheticPattern, generate_synthetic, ingest_raster


@pytest.fixture
def six_patch_container(tmp_path):
    meta = ImageMeta('six', 700, 500, channels=3)
    path = tmp_path / 'six.wstc'
    ingest_raster(generate_synthetic(meta, SyntheticPattern(PatternKind.PRNG, seed=1)), path, 256)
    return path


def test_threshold_mask():
    zeros = np.zeros((4, 4, 3), dtype=np.uint8)
    assert (threshold_mask(zeros, 1) == 0).all()
    full = np.full((4, 4, 3), 255, dtype=np.uint8)
    mask = threshold_mask(full, 1)
    assert mask.shape == (4, 4, 1)
    assert mask.dtype == np.uint8
    assert (mask == 255).all()


def test_threshold_mask_gradient():
    meta = ImageMeta('g', 300, 300, channels=3)
    patch = generate_synthetic(meta, SyntheticPattern()).read_window(0, 0, 300, 300)
    mask = threshold_mask(patch, 128)
    ys, xs = np.mgrid[0:300, 0:300]
    mean = sum(((xs + ys + ch) % 256) for ch in range(3)) / 3.0
    assert np.array_equal(mask[:, :, 0], np.where(mean >= 128, 255, 0).astype(np.uint8))


def test_identity_processor():
    meta = ImageMeta('x', 2, 1, channels=3, bytes_per_sample=2)
    patch = np.array([[[0x0100, 0x0200, 0x0300], [0xFFFF, 0xFFFF, 0xFFFE]]], dtype=np.uint16)
    gray = IdentityProcessor().apply(patch, meta)
    assert gray.dtype == np.uint8
    assert gray[:, :, 0].tolist() == [[2, 255]]


def test_processor_from_name():
    assert isinstance(processor_from_name('identity'), IdentityProcessor)
    threshold = processor_from_name('threshold:17')
    assert isinstance(threshold, ThresholdProcessor)
    assert threshold.t == 17
    assert threshold.name == 'threshold:17'
    for bad in ('blur', 'threshold', 'threshold:-1', 'identity:3'):
        with pytest.raises(InvalidArgument):
            processor_from_name(bad)


def test_single_patch_identity(tmp_path):
    meta = ImageMeta('one', 300, 200, channels=3)
    source = generate_synthetic(meta, SyntheticPattern(PatternKind.PRNG, seed=4))
    ingest_raster(source, tmp_path / 'in.wstc', 512)
    report = run_pipeline(tmp_path / 'in.wstc', tmp_path / 'out.wstc', 512, n_workers=1)
    assert report.patches_processed == 1
    with open_container(tmp_path / 'out.wstc') as reader:
        assert (reader.meta.channels, reader.meta.bytes_per_sample) == (1, 1)
        assert (reader.meta.width_px, reader.meta.height_px) == (300, 200)
        out = reader.read_patch(PatchWindow(0, 0, 300, 200))
    expected = IdentityProcessor().apply(source.read_window(0, 0, 300, 200), meta)
    assert np.array_equal(out, expected)


def test_pipeline_report(six_patch_container, tmp_path):
    report = run_pipeline(six_patch_container, tmp_path / 'out.wstc', 256, n_workers=3,
        processor=ThresholdProcessor(100))
    assert [a.size for a in report.assignments] == [2, 2, 2]
    assert len(report.per_worker_seconds) == 3
    assert report.patches_processed == 6
    assert sorted(i for log in report.processed.values() for i in log) == list(range(6))
    assert report.processed == {0: [0, 1], 1: [2, 3], 2: [4, 5]}

    uneven = run_pipeline(six_patch_container, tmp_path / 'uneven.wstc', 256, n_workers=4)
    assert [a.size for a in uneven.assignments] == [1, 1, 1, 3]

    report.write_csv(tmp_path / 'report.csv')
    with open(tmp_path / 'report.csv', newline='') as f:
        rows = list(csv.DictReader(f))
    assert tuple(rows[0]) == REPORT_FIELDS
    assert rows[0]['patches_processed'] == '6'
    assert len(rows[0]['per_worker_seconds'].split(';')) == 3


def test_pipeline_output_shapes(six_patch_container, tmp_path):
    run_pipeline(six_patch_container, tmp_path / 'out.wstc', 256, n_workers=2, processor=ThresholdProcessor(1))
    with open_container(six_patch_container) as src, open_container(tmp_path / 'out.wstc') as out:
        assert (out.grid.rows, out.grid.cols) == (2, 3)
        for a, b in zip(src.list_variables(), out.list_variables()):
            assert (a.name, a.logical_h, a.logical_w) == (b.name, b.logical_h, b.logical_w)
            assert b.channels == 1


def test_pipeline_fill_reaches_processor(six_patch_container, tmp_path):
    seen = []

    class Recorder(PatchProcessor):
        name = 'recorder'

        def apply(self, patch, meta):
            seen.append(patch.copy())
            return np.zeros(patch.shape[:2] + (1,), dtype=np.uint8)

    run_pipeline(six_patch_container, tmp_path / 'out.wstc', 256, n_workers=1, processor=Recorder(), fill=9)
    assert len(seen) == 6
    assert all(p.shape == (256, 256, 3) for p in seen)
    # last patch is 188 px wide and 244 px tall
    assert (seen[5][:, 188:] == 9).all()
    assert (seen[5][244:] == 9).all()


def test_pipeline_processor_errors(six_patch_container, tmp_path, mocker):
    mocker.patch.object(IdentityProcessor, 'apply', side_effect=RuntimeError('no gpu'))
    with pytest.raises(ProcessorError) as err:
        run_pipeline(six_patch_container, tmp_path / 'a.wstc', 256, n_workers=2)
    assert 'no gpu' in str(err.value)
    assert not (tmp_path / 'a.wstc').exists()

    mocker.patch.object(IdentityProcessor, 'apply', return_value=np.zeros((256, 256, 3), dtype=np.uint8))
    with pytest.raises(ProcessorError) as err:
        run_pipeline(six_patch_container, tmp_path / 'b.wstc', 256, n_workers=1)
    assert err.value.patch == 0

    with pytest.raises(InvalidArgument):
        run_pipeline(six_patch_container, tmp_path / 'c.wstc', 256, n_workers=0)

    with pytest.raises(InvalidArgument):
        run_pipeline(six_patch_container, tmp_path / 'd.wstc', 256, n_workers=1, fill=256)
    assert not (tmp_path / 'd.wstc').exists()


def test_pipeline_worker_invariance(large_container, tmp_path):
    path, _ = large_container
    outputs = {}
    for n_workers in (1, 2, 3, 8):
        out = tmp_path / f'mask_{n_workers}.wstc'
        report = run_pipeline(path, out, 4096, n_workers=n_workers, processor=ThresholdProcessor(128))
        assert report.patches_processed == 6
        assert len(report.per_worker_seconds) == n_workers
        outputs[n_workers] = out.read_bytes()
    assert outputs[1] == outputs[2] == outputs[3] == outputs[8]
