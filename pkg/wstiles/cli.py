"""Command line entry point.

Exit codes: 0 success, 1 io or runtime error, 2 usage error, 3 equivalence or
correctness failure.
"""
import argparse
import dataclasses
import json
import logging
import pathlib
import sys
from typing import Optional, Sequence

from . import defaults
from ._version import VERSION
from .bench import (CacheProtocol, Method, default_cache_protocol, emit_report, export_patch_files, export_whole_blob,
    run_suite, summarize)
from .container import ImageMeta, Stain
from .errors import CorruptBlob, CorruptPatchFile, EquivalenceError, InvalidArgument, WstcError
from .pipeline import processor_from_name, run_pipeline
from .reader import open_container
from .writer import RawRasterSource, SyntheticPattern, generate_synthetic, ingest_raster

logger = logging.getLogger('wstiles')

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_EQUIVALENCE = 3


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected an integer, got `{text}`')
    if value < 1:
        raise argparse.ArgumentTypeError(f'expected a positive integer, got {value}')
    return value


def _non_negative(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected an integer, got `{text}`')
    if value < 0:
        raise argparse.ArgumentTypeError(f'expected a non-negative integer, got {value}')
    return value


def _common_flags() -> argparse.ArgumentParser:
    # accepted before or after the subcommand; SUPPRESS keeps a later parser from resetting earlier values
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--threads', type=_positive, default=argparse.SUPPRESS, help='worker threads (default 8, or WSTC_THREADS)')
    common.add_argument('--chunk', type=_positive, default=argparse.SUPPRESS, help='chunk edge in px (default 4096)')
    common.add_argument('--patch', type=_positive, default=argparse.SUPPRESS, help='patch edge in px')
    common.add_argument('--seed', type=_non_negative, default=argparse.SUPPRESS, help='seed for the prng pattern (default 0)')
    common.add_argument('--overwrite', action='store_true', default=argparse.SUPPRESS, help='replace existing outputs')
    common.add_argument('--cache-chunks', type=_non_negative, default=argparse.SUPPRESS, help='reader chunk cache (default 64)')
    common.add_argument('--fill', type=_non_negative, default=argparse.SUPPRESS, help='padding sample value (default 0)')
    common.add_argument('-v', '--verbose', action='store_true', default=argparse.SUPPRESS, help='debug logging')
    common.add_argument('-q', '--quiet', action='store_true', default=argparse.SUPPRESS, help='warnings only')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog='wstiles', parents=[common],
        description='Chunked tile store for gigapixel images, with read benchmarks and a patch pipeline.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {VERSION}')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    gen = sub.add_parser('gen', parents=[common], help='generate a synthetic container')
    gen.add_argument('--width', type=_positive, required=True)
    gen.add_argument('--height', type=_positive, required=True)
    gen.add_argument('--channels', type=int, choices=(1, 3, 4), default=3)
    gen.add_argument('--bytes-per-sample', type=int, choices=(1, 2), default=1)
    gen.add_argument('--pattern', default='gradient', help='gradient | checker:<cell> | prng')
    gen.add_argument('--image-id', default=None, help='defaults to synthetic-<pattern>, e.g. synthetic-prng-42')
    gen.add_argument('--mpp', type=float, default=0.25, help='microns per pixel')
    gen.add_argument('--magnification', type=float, default=40.0)
    gen.add_argument('--stain', choices=[s.name for s in Stain], default=Stain.OTHER.name)
    gen.add_argument('--out', required=True)
    gen.set_defaults(handler=cmd_gen)

    convert = sub.add_parser('convert', parents=[common], help='raw raster + sidecar -> container')
    convert.add_argument('raw')
    convert.add_argument('--sidecar', default=None, help='defaults to <raw>.meta')
    convert.add_argument('--out', required=True)
    convert.set_defaults(handler=cmd_convert)

    inspect = sub.add_parser('inspect', parents=[common], help='print container metadata')
    inspect.add_argument('container')
    inspect.add_argument('--json', action='store_true', help='machine readable output')
    inspect.set_defaults(handler=cmd_inspect)

    export = sub.add_parser('export', parents=[common], help='write the baseline layouts')
    export.add_argument('container')
    export.add_argument('--blob', default=None, help='whole-image blob path')
    export.add_argument('--patches', default=None, help='directory for patch files')
    export.set_defaults(handler=cmd_export)

    bench = sub.add_parser('bench', parents=[common], help='time the three read strategies')
    bench.add_argument('containers', nargs='+')
    bench.add_argument('--methods', default='all', help='all, or a comma list of whole, files, chunked')
    bench.add_argument('--runs', type=_positive, default=defaults.RUNS)
    bench.add_argument('--workers', type=_positive, default=None, help='defaults to --threads')
    bench.add_argument('--cold-cache', action='store_true', help='drop or defeat the page cache before each timed read')
    bench.add_argument('--memory-budget', type=_positive, default=defaults.MEMORY_BUDGET, help='whole-array limit in bytes')
    bench.add_argument('--report', default='bench_report', help='output directory')
    bench.set_defaults(handler=cmd_bench)

    pipeline = sub.add_parser('pipeline', parents=[common], help='process every patch into a result container')
    pipeline.add_argument('container')
    pipeline.add_argument('--out', required=True)
    pipeline.add_argument('--workers', type=_positive, default=defaults.PIPELINE_WORKERS)
    pipeline.add_argument('--processor', default='identity', help='identity | threshold:<t>')
    pipeline.add_argument('--report', default=None, help='report csv, defaults to <out>.report.csv')
    pipeline.set_defaults(handler=cmd_pipeline)
    return parser


def _setting(args: argparse.Namespace, name: str, default):
    return getattr(args, name, default)


def cmd_gen(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    try:
        pattern = SyntheticPattern.parse(args.pattern, seed=_setting(args, 'seed', 0))
    except InvalidArgument as err:
        parser.error(str(err))
    out = pathlib.Path(args.out)
    try:
        # default id is path independent: equal flags give equal bytes
        image_id = args.image_id or f'synthetic-{pattern.label}'
        meta = ImageMeta(image_id, args.width, args.height, args.channels, args.bytes_per_sample,
            args.mpp, args.magnification, Stain[args.stain])
    except InvalidArgument as err:
        parser.error(str(err))
    index = ingest_raster(generate_synthetic(meta, pattern), out, _setting(args, 'chunk', defaults.CHUNK_EDGE),
        overwrite=_setting(args, 'overwrite', False))
    grid = index.grid
    print(f'{out}: {meta.width_px}x{meta.height_px}x{meta.channels}, {args.pattern}, '
          f'{grid.rows}x{grid.cols} grid of {grid.chunk_w}x{grid.chunk_h} chunks, {grid.count} variables')
    return EXIT_OK


def cmd_convert(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    source = RawRasterSource(args.raw, args.sidecar)
    index = ingest_raster(source, args.out, _setting(args, 'chunk', defaults.CHUNK_EDGE),
        overwrite=_setting(args, 'overwrite', False))
    print(f'{args.out}: {index.grid.count} variables')
    return EXIT_OK


def inspect_dict(reader) -> dict:
    meta = dataclasses.asdict(reader.meta)
    meta['stain'] = reader.meta.stain.name
    return {
        'path': str(reader.path),
        'format_version': reader.index.format_version,
        'meta': meta,
        'grid': dataclasses.asdict(reader.grid),
        'variable_count': len(reader.index.variables),
        'total_bytes': reader.path.stat().st_size,
        'payload_bytes': reader.index.payload_bytes,
        'variables': [dataclasses.asdict(v) for v in reader.list_variables()],
    }


def cmd_inspect(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    with open_container(args.container) as reader:
        info = inspect_dict(reader)
    if args.json:
        print(json.dumps(info, indent=2))
        return EXIT_OK
    meta, grid = info['meta'], info['grid']
    rows = [
        ('image_id', meta['image_id']),
        ('size', f'{meta["width_px"]} x {meta["height_px"]} px'),
        ('channels', meta['channels']),
        ('bytes_per_sample', meta['bytes_per_sample']),
        ('microns_per_pixel', meta['microns_per_pixel']),
        ('magnification', meta['magnification']),
        ('stain', f'{meta["stain"]} ({Stain[meta["stain"]].description})'),
        ('chunk', f'{grid["chunk_w"]} x {grid["chunk_h"]} px'),
        ('grid', f'{grid["rows"]} rows x {grid["cols"]} cols'),
        ('variables', info['variable_count']),
        ('payload_bytes', info['payload_bytes']),
        ('total_bytes', info['total_bytes']),
    ]
    width = max(len(k) for k, _ in rows)
    for key, value in rows:
        print(f'{key:<{width}}  {value}')
    return EXIT_OK


def cmd_export(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.blob is None and args.patches is None:
        parser.error('export needs --blob and/or --patches')
    overwrite = _setting(args, 'overwrite', False)
    if args.blob is not None:
        export_whole_blob(args.container, args.blob, overwrite)
        print(f'blob: {args.blob}')
    if args.patches is not None:
        patch = _setting(args, 'patch', defaults.PATCH_EDGE)
        paths = export_patch_files(args.container, args.patches, patch, patch, overwrite)
        print(f'patches: {len(paths)} files in {args.patches}')
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    try:
        methods = Method.parse(args.methods)
    except InvalidArgument as err:
        parser.error(str(err))
    workers = args.workers or _setting(args, 'threads', defaults.threads_from_env())
    patch = _setting(args, 'patch', defaults.PATCH_EDGE)
    cold = bench_protocol(args.cold_cache)
    try:
        result = run_suite(args.containers, pathlib.Path(args.report) / 'exports', methods, args.runs, workers,
            patch, patch, _setting(args, 'cache_chunks', defaults.CACHE_CHUNKS), cold, args.memory_budget)
    except (CorruptPatchFile, CorruptBlob) as err:
        raise EquivalenceError(str(err)) from err
    summary = summarize(result.records, args.runs)
    print(emit_report(summary, result.records, args.report, result.protocol), end='')
    return EXIT_OK


def bench_protocol(cold_cache: bool) -> CacheProtocol:
    return default_cache_protocol() if cold_cache else CacheProtocol.NONE


def cmd_pipeline(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    try:
        processor = processor_from_name(args.processor)
    except InvalidArgument as err:
        parser.error(str(err))
    patch = _setting(args, 'patch', defaults.PIPELINE_PATCH_EDGE)
    fill = _setting(args, 'fill', defaults.FILL)
    with open_container(args.container, cache_chunks=0) as reader:
        top = reader.meta.max_sample
    if fill > top:
        parser.error(f'--fill {fill} outside the sample range 0..{top} of {args.container}')
    report = run_pipeline(args.container, args.out, patch, patch, args.workers, processor, fill,
        _setting(args, 'overwrite', False), _setting(args, 'cache_chunks', defaults.CACHE_CHUNKS))
    report_path = args.report or f'{args.out}.report.csv'
    report.write_csv(report_path)
    print(f'{report.wsi_id}: {report.patches_processed} patches, {report.n_workers} workers, '
          f'assignments {[a.size for a in report.assignments]}, {report.wall_seconds:.3f}s')
    for worker, seconds in enumerate(report.per_worker_seconds):
        print(f'  worker {worker}: {len(report.processed[worker])} patches, {seconds:.3f}s')
    return EXIT_OK


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if _setting(args, 'verbose', False):
        level = logging.DEBUG
    elif _setting(args, 'quiet', False):
        level = logging.WARNING
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s', stream=sys.stderr)


def main(argv: Optional[Sequence[str]]=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit:
        return exit.code if isinstance(exit.code, int) else EXIT_USAGE
    if _setting(args, 'verbose', False) and _setting(args, 'quiet', False):
        parser.print_usage(sys.stderr)
        print('wstiles: error: --verbose and --quiet are exclusive', file=sys.stderr)
        return EXIT_USAGE
    _configure_logging(args)
    try:
        return args.handler(args, parser)
    except SystemExit as exit:
        return exit.code if isinstance(exit.code, int) else EXIT_USAGE
    except EquivalenceError as err:
        print(f'wstiles: {err.code}: {err}', file=sys.stderr)
        return EXIT_EQUIVALENCE
    except WstcError as err:
        print(f'wstiles: {err.code}: {err}', file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as err:
        print(f'wstiles: io-error: {err}', file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
