import json
import logging
import pytest

from wstiles import cli
from wstiles.container import decode_index


@pytest.fixture(autouse=True)
def quiet_logging(mocker):
    return mocker.patch('wstiles.cli.logging.basicConfig')


@pytest.fixture
def six_patch_container(tmp_path):
    path = tmp_path / 'six.wstc'
    assert cli.main(['gen', '--width', '768', '--height', '512', '--channels', '1', '--pattern', 'prng',
        '--seed', '5', '--chunk', '256', '--out', str(path)]) == 0
    return path


def test_gen(tmp_path, capsys):
    out = tmp_path / 'big.wstc'
    code = cli.main(['gen', '--width', '10000', '--height', '8000', '--channels', '1', '--out', str(out)])
    assert code == 0
    assert '6 variables' in capsys.readouterr().out
    index = decode_index(out.read_bytes())
    assert index.grid.count == 6
    assert index.meta.image_id == 'synthetic-gradient'

    assert cli.main(['gen', '--width', '10', '--height', '10', '--out', str(out)]) == 1
    assert 'io-error' in capsys.readouterr().err
    assert cli.main(['--overwrite', 'gen', '--width', '10', '--height', '10', '--out', str(out)]) == 0


def test_gen_deterministic(tmp_path):
    def gen(seed, name):
        argv = ['gen', '--width', '600', '--height', '400', '--pattern', 'prng', '--seed', str(seed), '--chunk', '256',
            '--stain', 'HE', '--out', str(tmp_path / name)]
        assert cli.main(argv) == 0
        return (tmp_path / name).read_bytes()

    first = gen(42, 'a.wstc')
    assert gen(42, 'elsewhere.wstc') == first
    assert decode_index(first).meta.image_id == 'synthetic-prng-42'
    assert gen(43, 'c.wstc') != first


@pytest.mark.parametrize('argv', [
    ['gen', '--width', '10', '--height', '10'],
    ['gen', '--width', '0', '--height', '10', '--out', 'x.wstc'],
    ['gen', '--width', '10', '--height', '10', '--pattern', 'plaid', '--out', 'x.wstc'],
    ['gen', '--width', '10', '--height', '10', '--mpp', '-1', '--out', 'x.wstc'],
    ['gen', '--width', '10', '--height', '10', '--chunk', '0', '--out', 'x.wstc'],
    ['-v', '-q', 'inspect', 'x.wstc'],
    ['bench', 'x.wstc', '--methods', 'mmap'],
    ['pipeline', 'x.wstc', '--out', 'y.wstc', '--processor', 'blur'],
    ['export', 'x.wstc'],
    [],
])
def test_usage_errors(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 2
    assert not (tmp_path / 'x.wstc').exists()
    assert 'usage' in capsys.readouterr().err


def test_version(capsys):
    assert cli.main(['--version']) == 0
    assert 'wstiles' in capsys.readouterr().out


def test_inspect(six_patch_container, capsys):
    capsys.readouterr()
    assert cli.main(['inspect', str(six_patch_container)]) == 0
    out = capsys.readouterr().out
    assert '2 rows x 3 cols' in out
    assert 'Other or unknown stain' in out

    assert cli.main(['inspect', '--json', str(six_patch_container)]) == 0
    info = json.loads(capsys.readouterr().out)
    index = decode_index(six_patch_container.read_bytes())
    assert info['variable_count'] == 6
    assert info['meta']['width_px'] == index.meta.width_px
    assert info['meta']['stain'] == index.meta.stain.name
    assert info['grid'] == {'chunk_w': 256, 'chunk_h': 256, 'cols': 3, 'rows': 2}
    assert [v['name'] for v in info['variables']] == [v.name for v in index.variables]
    assert info['variables'][5]['crc32'] == index.variables[5].crc32
    assert info['total_bytes'] == six_patch_container.stat().st_size


def test_inspect_corrupt(six_patch_container, tmp_path, capsys):
    data = bytearray(six_patch_container.read_bytes())
    data[-30] ^= 0xFF
    bad = tmp_path / 'bad.wstc'
    bad.write_bytes(bytes(data))
    assert cli.main(['inspect', str(bad)]) == 1
    assert 'corrupt-index' in capsys.readouterr().err

    assert cli.main(['inspect', str(tmp_path / 'missing.wstc')]) == 1


def test_convert(tmp_path, capsys):
    from wstiles.container import ImageMeta
    from wstiles.writer import PatternKind, SyntheticPattern, generate_synthetic, write_raw_raster

    meta = ImageMeta('raw', 300, 200, channels=3, bytes_per_sample=2)
    raw = write_raw_raster(generate_synthetic(meta, SyntheticPattern(PatternKind.PRNG, seed=1)), tmp_path / 'raw.bin')
    assert cli.main(['convert', str(raw), '--chunk', '128', '--out', str(tmp_path / 'raw.wstc')]) == 0
    index = decode_index((tmp_path / 'raw.wstc').read_bytes())
    assert index.meta == meta
    assert index.grid.count == 6


def test_export(six_patch_container, tmp_path, capsys):
    blob = tmp_path / 'six.wstb'
    patches = tmp_path / 'patches'
    assert cli.main(['export', str(six_patch_container), '--blob', str(blob), '--patches', str(patches),
        '--patch', '256']) == 0
    assert blob.stat().st_size == 16 + 768 * 512
    assert len(list(patches.iterdir())) == 6
    assert cli.main(['export', str(six_patch_container), '--patches', str(patches)]) == 1


def test_bench(six_patch_container, tmp_path, capsys):
    report = tmp_path / 'report'
    argv = ['bench', str(six_patch_container), '--runs', '2', '--workers', '2', '--patch', '256', '--report', str(report)]
    capsys.readouterr()
    assert cli.main(argv) == 0
    out = capsys.readouterr().out
    rows = [line for line in out.splitlines() if line.split() and line.split()[0] in
        ('WHOLE_ARRAY', 'PATCH_PER_FILE', 'CHUNKED_STORE')]
    assert len(rows) == 3
    assert 'speedup WHOLE_ARRAY / CHUNKED_STORE' in out
    assert 'speedup PATCH_PER_FILE / CHUNKED_STORE' in out
    assert (report / 'bench.csv').exists()
    assert len((report / 'bench.csv').read_text().splitlines()) == 1 + 3 * 2

    assert cli.main(argv[:2] + ['--methods', 'chunked', '--runs', '1', '--patch', '256',
        '--report', str(tmp_path / 'r2')]) == 0
    out = capsys.readouterr().out
    assert sum(1 for line in out.splitlines() if line.startswith('CHUNKED_STORE')) == 1
    assert 'WHOLE_ARRAY' not in out

    patch_file = report / 'exports' / 'six_patches_256x256' / 'patch_1_2.wsp'
    raw = bytearray(patch_file.read_bytes())
    raw[-1] ^= 0xFF
    patch_file.write_bytes(bytes(raw))
    assert cli.main(argv) == 3
    assert 'patch_1_2.wsp' in capsys.readouterr().err


def test_pipeline(six_patch_container, tmp_path, capsys):
    out = tmp_path / 'mask.wstc'
    capsys.readouterr()
    assert cli.main(['pipeline', str(six_patch_container), '--out', str(out), '--patch', '256',
        '--processor', 'threshold:128']) == 0
    printed = capsys.readouterr().out
    assert 'assignments [2, 2, 2]' in printed
    assert (tmp_path / 'mask.wstc.report.csv').exists()

    again = tmp_path / 'mask4.wstc'
    assert cli.main(['pipeline', str(six_patch_container), '--out', str(again), '--patch', '256',
        '--processor', 'threshold:128', '--workers', '4', '--report', str(tmp_path / 'r.csv')]) == 0
    assert 'assignments [1, 1, 1, 3]' in capsys.readouterr().out
    assert (tmp_path / 'r.csv').exists()

    single = tmp_path / 'mask1.wstc'
    assert cli.main(['--patch', '256', 'pipeline', str(six_patch_container), '--out', str(single),
        '--processor', 'threshold:128', '--workers', '1']) == 0
    assert out.read_bytes() == again.read_bytes() == single.read_bytes()

    assert cli.main(['pipeline', str(six_patch_container), '--out', str(out), '--patch', '256']) == 1


def test_pipeline_fill_out_of_range(six_patch_container, tmp_path, capsys):
    out = tmp_path / 'filled.wstc'
    capsys.readouterr()
    assert cli.main(['pipeline', str(six_patch_container), '--out', str(out), '--patch', '256', '--fill', '256']) == 2
    assert '--fill 256' in capsys.readouterr().err
    assert not out.exists()
    assert cli.main(['pipeline', str(six_patch_container), '--out', str(out), '--patch', '256', '--fill', '255']) == 0


def test_logging_levels(quiet_logging, six_patch_container):
    cli.main(['-v', 'inspect', str(six_patch_container)])
    assert quiet_logging.call_args[1]['level'] == logging.DEBUG
    cli.main(['inspect', '-q', str(six_patch_container)])
    assert quiet_logging.call_args[1]['level'] == logging.WARNING
    cli.main(['inspect', str(six_patch_container)])
    assert quiet_logging.call_args[1]['level'] == logging.INFO


def test_threads_from_env(monkeypatch):
    from wstiles import defaults
    monkeypatch.setenv('WSTC_THREADS', '3')
    assert defaults.threads_from_env() == 3
    monkeypatch.setenv('WSTC_THREADS', 'lots')
    assert defaults.threads_from_env(5) == 5
    monkeypatch.delenv('WSTC_THREADS')
    assert defaults.threads_from_env() == 8
