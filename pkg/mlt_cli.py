#!/usr/bin/env python3
"""
MLT command line
render, compare, diagnose, reference, study and report subcommands
"""

import argparse
import math
import os
import sys
from dataclasses import fields
from typing import List, Optional

import pandas as pd

from diagnostics import SeriesTooShortError, autocorrelation_time, read_metrics_csv, rrmse
from experiment_report import create_html_report, read_partition_dump
from image_io import read_pfm, write_error_map_pfm, write_error_map_png, write_pfm, write_png_tonemapped
from mlt_renderer import render_reference, run_render
from render_config import DEFAULT_RRMSE_EPSILON, PERTURBATIONS, STRATEGIES, RenderConfig, __version__
from run_database import RunDatabase
from scene import load_scene
from variant_study import ordering_holds, run_grid_sweep, run_variant_study

# Optional RenderConfig fields and the type their flag parses to
OPTIONAL_FIELD_TYPES = {
    'time_budget_s': float,
    'log_interval': 'count',
    'trace_path': str,
    'partition_dump_path': str,
    'chain_trace_path': str,
}
INDEX_COLUMNS = ('mutation', 'mutation_index', 'mutations')


def count(text: str) -> int:
    """Integer flag that also accepts scientific notation such as 1e6"""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value) or not value.is_integer():
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


def _flag_type(name, default):
    kind = OPTIONAL_FIELD_TYPES.get(name)
    if kind is None:
        kind = 'count' if isinstance(default, int) else type(default)
    return count if kind == 'count' else kind


def add_config_flags(parser: argparse.ArgumentParser):
    """One --flag per RenderConfig field; unset flags keep the config default"""
    group = parser.add_argument_group('render configuration')
    for f in fields(RenderConfig):
        flag = '--' + f.name.replace('_', '-')
        kwargs = dict(dest=f.name, default=None, type=_flag_type(f.name, f.default),
                      help=f"default: {f.default}")
        if f.name == 'strategy':
            kwargs['choices'] = STRATEGIES
        elif f.name == 'perturbation':
            kwargs['choices'] = PERTURBATIONS
        group.add_argument(flag, **kwargs)


def config_from_args(args, **extra) -> RenderConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RenderConfig)
                 if getattr(args, f.name, None) is not None}
    overrides.update({k: v for k, v in extra.items() if k not in overrides})
    return RenderConfig.from_overrides(overrides)


def _stem(path: str) -> str:
    return os.path.splitext(path)[0]


def _write_lines(path: str, lines: List[str]):
    with open(path, 'w', encoding='utf-8') as f:
        for line in lines:
            f.write(line + '\n')


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_render(args) -> int:
    stem = _stem(args.output)
    config = config_from_args(args, trace_path=stem + '.trace.csv', partition_dump_path=stem + '.partition.txt')
    scene = load_scene(args.scene, epsilon_ray=config.epsilon_ray)
    reference = read_pfm(args.reference) if args.reference else None

    print("=" * 70)
    print(f"[RENDER] {args.scene}: {config.strategy} / {config.perturbation}, "
          f"{config.width}x{config.height}, seed {config.seed}")
    print("=" * 70)

    result = run_render(scene, config, reference=reference, progress=print)
    write_pfm(args.output, result.image)
    print(f"[OK] Image written: {args.output}")

    final_error = rrmse(result.image, reference).rrmse if reference is not None else float('nan')
    run_log = result.run_log
    if not run_log.rows or run_log.rows[-1]['mutations'] < result.mutations:
        run_log.record(result.seconds, result.mutations, final_error, result.mean_acceptance)
    metrics_path = args.metrics or stem + '.metrics.csv'
    run_log.write_csv(metrics_path)
    print(f"[OK] Metrics written: {metrics_path}")

    _write_lines(stem + '.manifest', config.to_manifest())
    if args.png:
        write_png_tonemapped(args.png, result.image, args.exposure)
        print(f"[OK] Preview written: {args.png}")
    if args.db:
        run_id = RunDatabase(args.db).record_run(os.path.basename(args.scene), result,
                                                 None if reference is None else final_error)
        print(f"[OK] Stored as run {run_id} in {args.db}")

    print(f"\nMean perturbation acceptance: {result.mean_acceptance:.4f}")
    print(f"Regions: {result.controller.region_count}")
    if reference is not None:
        print(f"rRMSE: {final_error:.4f}")
    return 0


def cmd_compare(args) -> int:
    image = read_pfm(args.image)
    reference = read_pfm(args.reference)
    report = rrmse(image, reference, args.epsilon, use_luminance=not args.rgb)
    if args.error_map:
        write_error_map_png(args.error_map, report.error_map, args.vmax)
        raw = os.path.splitext(args.error_map)[0] + '.pfm'
        write_error_map_pfm(raw, report.error_map)
        print(f"[OK] Error map written: {args.error_map} and {raw}")
    print(f"{report.rrmse:.4f}")
    return 0


def cmd_diagnose(args) -> int:
    frame = pd.read_csv(args.trace)
    if frame.empty:
        raise ValueError(f"{args.trace}: no rows")
    columns = args.columns or [c for c in frame.columns
                               if c not in INDEX_COLUMNS and pd.api.types.is_numeric_dtype(frame[c])]
    reported = 0
    for column in columns:
        if column not in frame.columns:
            raise ValueError(f"{args.trace}: no column {column!r}")
        try:
            diag = autocorrelation_time(frame[column].to_numpy(dtype=float), args.min_length)
        except SeriesTooShortError as e:
            print(f"[SKIP] {column}: {e}")
            continue
        print(f"{column} tau={diag.tau:.4f} neff={diag.n_eff:.1f}")
        reported += 1
    if reported == 0:
        raise ValueError("no series could be analysed")
    return 0


def cmd_reference(args) -> int:
    config = config_from_args(args)
    scene = load_scene(args.scene, epsilon_ray=config.epsilon_ray)
    print(f"[RENDER] Path-traced reference: {args.samples:,} samples at {config.width}x{config.height}")
    film = render_reference(scene, config, args.samples, progress=print)
    write_pfm(args.output, film.finalize(1.0))
    _write_lines(_stem(args.output) + '.manifest', config.to_manifest() + [f"samples={args.samples}"])
    print(f"[OK] Reference written: {args.output}")
    return 0


def cmd_study(args) -> int:
    base = config_from_args(args)
    scene = load_scene(args.scene, epsilon_ray=base.epsilon_ray)
    reference = read_pfm(args.reference)
    if args.grid_sizes:
        frame = run_grid_sweep(scene, reference, args.grid_sizes, range(args.seeds), base)
    else:
        database = RunDatabase(args.db) if args.db else None
        frame = run_variant_study(scene, reference, args.strategies, range(args.seeds), base,
                                  database=database, scene_name=os.path.basename(args.scene))
    if args.csv:
        frame.to_csv(args.csv, index=False)
        print(f"[OK] Study written: {args.csv}")
    return 0 if len(frame) else 1


def cmd_report(args) -> int:
    metrics = {}
    for item in args.metrics or []:
        label, sep, path = item.partition('=')
        if not sep:
            label, path = _stem(os.path.basename(item)), item
        metrics[label] = read_metrics_csv(path, label)
    if args.db:
        database = RunDatabase(args.db)
        if args.runs:
            for run_id in args.runs:
                log = database.get_run_log(run_id)
                if log.empty:
                    raise ValueError(f"{args.db}: no logged rows for run {run_id}")
                metrics[f"run {run_id}"] = log
        else:
            logs = database.get_logs_with_strategy(args.scene)
            for (strategy, seed), frame in logs.groupby(['strategy', 'seed']):
                metrics.setdefault(f"{strategy} seed {seed}", frame)
    elif args.runs:
        raise ValueError("--runs needs --db")
    study = pd.read_csv(args.study) if args.study else None
    partition = read_partition_dump(args.partition) if args.partition else None
    ordering = ordering_holds(study) if study is not None and not study.empty else None
    path = create_html_report(args.output, metrics, study, partition, ordering)
    print(f"[OK] HTML report created: {path}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mlt_cli', description="Adaptive regional Metropolis light transport")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', required=True)

    render = sub.add_parser('render', help="render a scene")
    render.add_argument('--scene', required=True)
    render.add_argument('-o', '--output', required=True, help="PFM image path")
    render.add_argument('--reference', help="reference PFM; enables the rRMSE run log")
    render.add_argument('--metrics', help="metrics CSV path (default <output>.metrics.csv)")
    render.add_argument('--png', help="also write a tonemapped PNG")
    render.add_argument('--exposure', type=float, default=0.0)
    render.add_argument('--db', help="sqlite run database to record into")
    add_config_flags(render)
    render.set_defaults(handler=cmd_render)

    compare = sub.add_parser('compare', help="rRMSE of an image against a reference")
    compare.add_argument('image')
    compare.add_argument('reference')
    compare.add_argument('--error-map', help="write a false-colour error map PNG and the raw map as a .pfm beside it")
    compare.add_argument('--epsilon', type=float, default=DEFAULT_RRMSE_EPSILON)
    compare.add_argument('--vmax', type=float, default=1.0)
    compare.add_argument('--rgb', action='store_true', help="per-channel error instead of luminance")
    compare.set_defaults(handler=cmd_compare)

    diagnose = sub.add_parser('diagnose', help="autocorrelation time of logged scalar series")
    diagnose.add_argument('trace')
    diagnose.add_argument('--columns', nargs='+')
    diagnose.add_argument('--min-length', type=count, default=1000)
    diagnose.set_defaults(handler=cmd_diagnose)

    reference = sub.add_parser('reference', help="path-traced reference image")
    reference.add_argument('--scene', required=True)
    reference.add_argument('-o', '--output', required=True)
    reference.add_argument('--samples', type=count, default=1_000_000)
    add_config_flags(reference)
    reference.set_defaults(handler=cmd_reference)

    study = sub.add_parser('study', help="equal-budget comparison of the strategy variants")
    study.add_argument('--scene', required=True)
    study.add_argument('--reference', required=True)
    study.add_argument('--strategies', nargs='+', choices=STRATEGIES, default=list(STRATEGIES))
    study.add_argument('--seeds', type=count, default=5)
    study.add_argument('--grid-sizes', nargs='+', type=count, metavar='N',
                       help="sweep RA-Grid over N_top = N_bottom = N instead of comparing strategies")
    study.add_argument('--csv')
    study.add_argument('--db')
    add_config_flags(study)
    study.set_defaults(handler=cmd_study)

    report = sub.add_parser('report', help="HTML report from metrics CSVs, a study and a partition dump")
    report.add_argument('-o', '--output', required=True)
    report.add_argument('--metrics', nargs='+', help="label=path or path")
    report.add_argument('--study')
    report.add_argument('--partition')
    report.add_argument('--db', help="run database whose run logs to plot")
    report.add_argument('--scene', help="only runs of this scene name")
    report.add_argument('--runs', nargs='+', type=int, metavar='ID', help="plot only these run ids")
    report.set_defaults(handler=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except Exception as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
