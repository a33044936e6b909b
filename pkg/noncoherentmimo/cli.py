#!/usr/bin/env python3
"""Command-line entry points: train, eval, sweep and export.

Exit codes: 0 success, 1 a sweep in which every run failed, 2 usage, configuration
or missing-artifact errors, 3 training that diverged or collapsed.
"""

import sys
import csv
import json
import argparse
from pathlib import Path

from .tensor import RngStream
from .config import ConfigError, load_run_config, load_grid
from .profiles import PROFILES, get_profile
from .training import train, sweep, sweep_configs, write_training_log
from .modem import DegenerateCodebookError, NumericError, ExactMLDecoder, CoherentMLDecoder
from .evaluate import sweep_snr_paired, write_curve_csv, baseline_path, information_estimate
from .artifact import (ArtifactError, ModelArtifact, save, load, write_constellation_csv, write_posterior_csv)
from .cache import DiskCache

EXIT_OK = 0
EXIT_ALL_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

BASELINES = {'exactml': ExactMLDecoder, 'coherent': CoherentMLDecoder}
SUMMARY_COLUMNS = ['rank', 'index', 'status', 'val_bler', 'final_objective', 'decoder', 'k', 'L', 'm', 'n',
                   'snr_db', 'lamb', 'depth', 'hidden', 'seed', 'error']


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError('must be a positive integer, got %s' % text)
    return value


def seed_type(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError('seed must be an unsigned 64-bit integer, got %s' % text)
    return value


def snr_range(text):
    """Parse A:B:STEP into (start, stop, step)."""
    try:
        start, stop, step = (float(x) for x in text.split(':'))
    except ValueError:
        raise argparse.ArgumentTypeError('expected A:B:STEP, got %r' % text) from None
    if not step > 0 or stop < start:
        raise argparse.ArgumentTypeError('need step > 0 and B >= A, got %r' % text)
    return start, stop, step


def make_parser():
    parser = argparse.ArgumentParser(prog='noncoherentmimo',
                                     description='Learn constellations and decoders for the non-coherent MIMO channel.')
    parser.add_argument('-q', '--quiet', action='store_true', help='suppress progress messages on stderr')
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('train', help='train one codebook/decoder pair')
    p.add_argument('--config', required=True, type=Path, help='JSON run configuration')
    p.add_argument('--seed', type=seed_type, help='master seed (overrides the configuration)')
    p.add_argument('--out', required=True, type=Path, help='model artifact to write')
    p.add_argument('--log', type=Path, help='training log CSV (default: <out>.log.csv)')
    p.add_argument('--profile', choices=list(PROFILES), default='desk')
    p.add_argument('--progress', action='store_true', help='show a progress bar')
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser('eval', help='Monte-Carlo BLER curve of a trained model')
    p.add_argument('--model', required=True, type=Path)
    p.add_argument('--snr', required=True, type=snr_range, metavar='A:B:STEP', help='inclusive SNR grid in dB')
    p.add_argument('--trials', type=positive_int, help='trials per point (default: from the profile)')
    p.add_argument('--profile', choices=list(PROFILES), default='desk')
    p.add_argument('--out', required=True, type=Path, help='BLER CSV to write')
    p.add_argument('--baseline', choices=list(BASELINES) + ['none'], default='none',
                   help='paired baseline, written next to --out on the same channel draws')
    p.add_argument('--seed', type=seed_type, default=0)
    p.add_argument('--shards', type=positive_int, default=1)
    p.add_argument('--parallel', type=positive_int, default=1)
    p.add_argument('--min-errors', type=positive_int, help='keep simulating until this many errors...')
    p.add_argument('--max-trials', type=positive_int, help='...or this many trials per point')
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser('sweep', help='train every configuration of a grid and rank them')
    p.add_argument('--grid', required=True, type=Path, help='JSON grid file')
    p.add_argument('--out', required=True, type=Path, help='output directory')
    p.add_argument('--parallel', type=positive_int, default=1, help='worker processes')
    p.add_argument('--seed', type=seed_type, help='master seed from which per-run seeds are derived')
    p.add_argument('--profile', choices=list(PROFILES), default='desk')
    p.add_argument('--dry-run', action='store_true', help='list the configurations without training')
    p.add_argument('--no-cache', action='store_true', help='retrain runs finished by an earlier sweep')
    p.set_defaults(handler=cmd_sweep)

    p = commands.add_parser('export', help='export a learned constellation or posterior samples')
    p.add_argument('--model', required=True, type=Path)
    p.add_argument('--what', required=True, choices=['constellation', 'posterior-demo'])
    p.add_argument('--out', required=True, type=Path)
    p.add_argument('--count', type=positive_int, default=100, help='received signals in the posterior demo')
    p.add_argument('--snr', type=float, help='SNR of the posterior demo (default: training SNR)')
    p.add_argument('--seed', type=seed_type, default=0)
    p.set_defaults(handler=cmd_export)

    return parser


def _load_model(path, updates):
    try:
        return load(path)
    except FileNotFoundError:
        if updates: updates.write('error: model artifact %s does not exist\n' % path)
    except ArtifactError as e:
        if updates: updates.write('error: %s\n' % e)
    return None


def cmd_train(args, updates):
    try:
        cfg = load_run_config(args.config, args.profile, seed=args.seed)
    except ConfigError as e:
        sys.stderr.write('error: %s\n' % e)
        return EXIT_USAGE

    try:
        run = train(cfg, print_updates=updates, show_progress=args.progress)
    except (DegenerateCodebookError, NumericError) as e:
        sys.stderr.write('error: %s\n' % e)
        return EXIT_DIVERGED

    log = args.log or args.out.with_suffix('.log.csv')
    write_training_log(run, log)
    if run.stop_reason == 'diverged':
        sys.stderr.write('training diverged at iteration %d\n' % run.iterations)
        return EXIT_DIVERGED

    save(ModelArtifact.from_run(run), args.out)
    if updates:
        updates.write('%s after %d iterations: best val_bler=%.6g at iteration %d\n'
                      % (run.stop_reason, run.iterations, run.best.val_bler, run.best.iteration))
    return EXIT_OK


def cmd_eval(args, updates):
    artifact = _load_model(args.model, sys.stderr)
    if artifact is None: return EXIT_USAGE

    trials = args.trials or get_profile(args.profile).eval_trials
    decoders = [artifact.decoder]
    if args.baseline != 'none': decoders += [BASELINES[args.baseline]()]

    start, stop, step = args.snr
    rng = RngStream(args.seed)
    curves = sweep_snr_paired(artifact.codebook, decoders, start, stop, step, trials, rng.derive(0),
                              artifact.operating_point.n, shards=args.shards, parallel=args.parallel,
                              min_errors=args.min_errors, max_trials=args.max_trials,
                              print_updates=updates, show_progress=updates is not None)

    write_curve_csv(curves[0], args.out)
    if args.baseline != 'none':
        write_curve_csv(curves[1], baseline_path(args.out, args.baseline))

    if updates:
        snr_db = artifact.training.get('snr_db')
        if snr_db is not None:
            bits = information_estimate(artifact.codebook, artifact.decoder, snr_db, min(trials, 10**5),
                                        rng.derive(1), artifact.operating_point.n)
            updates.write('information estimate at %.4g dB: %.4f bits per block\n' % (snr_db, bits))
    return EXIT_OK


def write_summary(results, path):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)
        for rank, result in enumerate(results, 1):
            cfg, run = result.config, result.run
            failed = run is None or run.best is None
            writer.writerow([rank, result.index, result.status,
                             '' if failed else repr(run.best.val_bler),
                             '' if run is None else repr(run.final_objective),
                             cfg.decoder, cfg.k, cfg.L, cfg.m, cfg.n, repr(float(cfg.snr_db)),
                             '' if cfg.lamb is None else repr(float(cfg.lamb)),
                             cfg.depth, cfg.hidden, cfg.seed, result.error or ''])


def cmd_sweep(args, updates):
    try:
        grid = load_grid(args.grid, args.profile)
    except ConfigError as e:
        sys.stderr.write('error: %s\n' % e)
        return EXIT_USAGE

    if args.dry_run:
        for index, cfg in enumerate(sweep_configs(grid, args.seed)):
            sys.stdout.write('%d %s\n' % (index, json.dumps(cfg.as_dict())))
        return EXIT_OK

    args.out.mkdir(parents=True, exist_ok=True)
    cache = None if args.no_cache else DiskCache(args.out / '.cache' / 'runs.pkl')
    results = sweep(grid, seed=args.seed, parallel=args.parallel, cache=cache,
                    print_updates=updates, show_progress=updates is not None)

    for result in results:
        folder = args.out / ('run-%03d' % result.index)
        folder.mkdir(exist_ok=True)
        if result.run is None: continue
        write_training_log(result.run, folder / 'train.log.csv')
        if result.run.best is not None:
            save(ModelArtifact.from_run(result.run), folder / 'model.json')

    write_summary(results, args.out / 'summary.csv')
    if all(result.failed for result in results):
        sys.stderr.write('error: every run of the sweep failed\n')
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_export(args, updates):
    artifact = _load_model(args.model, sys.stderr)
    if artifact is None: return EXIT_USAGE

    if args.what == 'constellation':
        write_constellation_csv(artifact.codebook, args.out)
    else:
        snr_db = args.snr if args.snr is not None else artifact.training.get('snr_db')
        if snr_db is None:
            sys.stderr.write('error: the artifact records no training SNR, pass --snr\n')
            return EXIT_USAGE
        write_posterior_csv(artifact, args.out, args.count, snr_db, RngStream(args.seed))
    return EXIT_OK


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    updates = None if args.quiet else sys.stderr
    return args.handler(args, updates)


if __name__ == '__main__':
    sys.exit(main())
