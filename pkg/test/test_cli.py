#!/usr/bin/env python3

import os
import csv
import json

import pytest

from noncoherentmimo import cli, training
from noncoherentmimo.cli import main, EXIT_OK, EXIT_ALL_FAILED, EXIT_USAGE, EXIT_DIVERGED, SUMMARY_COLUMNS
from noncoherentmimo.artifact import load
from noncoherentmimo.evaluate import CURVE_COLUMNS
from noncoherentmimo.modem import DegenerateCodebookError, NonFiniteCodebookError
from noncoherentmimo.training import TrainingRun

GOLDEN = os.path.join(os.path.dirname(__file__), 'data', 'golden_model.json')
TINY = dict(k=2, L=2, m=2, n=2, decoder='pml', lamb=1., snr_db=15, batch_size=40, max_iterations=6,
            eval_interval=3, validation_size=100)


def write_json(path, value):
    with open(path, 'w') as f:
        json.dump(value, f)
    return path


def read_rows(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


def test_usage_errors(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(['fly']) == EXIT_USAGE
    assert main(['eval', '--model', GOLDEN, '--snr', '0:10:5', '--trials', '0', '--out',
                 str(tmp_path / 'bler.csv')]) == EXIT_USAGE
    assert main(['eval', '--model', GOLDEN, '--snr', '10:0:5', '--out', str(tmp_path / 'bler.csv')]) == EXIT_USAGE
    assert main(['train', '--config', 'run.json', '--out', 'model.json', '--seed', '-1']) == EXIT_USAGE


def test_train_missing_lamb(tmp_path):
    config = write_json(tmp_path / 'run.json', {key: value for key, value in TINY.items() if key != 'lamb'})
    out = tmp_path / 'model.json'
    assert main(['-q', 'train', '--config', str(config), '--out', str(out)]) == EXIT_USAGE
    assert not out.exists()


def test_train_writes_artifact_and_log(tmp_path):
    config = write_json(tmp_path / 'run.json', TINY)
    out = tmp_path / 'model.json'
    assert main(['-q', 'train', '--config', str(config), '--out', str(out), '--seed', '3']) == EXIT_OK

    artifact = load(out)
    assert artifact.training['seed'] == 3
    assert artifact.decoder.variant == 'pml'
    rows = read_rows(tmp_path / 'model.log.csv')
    assert rows[0][:2] == ['kind', 'iteration']
    assert sum(row[0] == 'step' for row in rows[1:]) == 6
    assert sum(row[0] == 'eval' for row in rows[1:]) == 2


def test_train_is_reproducible(tmp_path):
    config = write_json(tmp_path / 'run.json', dict(TINY, decoder='mlp', lamb=None, hidden=8))
    for name in ('a', 'b'):
        assert main(['-q', 'train', '--config', str(config), '--out', str(tmp_path / (name + '.json')),
                     '--log', str(tmp_path / (name + '.csv'))]) == EXIT_OK
    assert (tmp_path / 'a.json').read_bytes() == (tmp_path / 'b.json').read_bytes()
    assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()


def test_train_divergence_exit_code(tmp_path, monkeypatch):
    config = write_json(tmp_path / 'run.json', TINY)
    out = tmp_path / 'model.json'

    monkeypatch.setattr(cli, 'train', lambda cfg, **kwargs: TrainingRun(cfg, stop_reason='diverged', iterations=2))
    assert main(['-q', 'train', '--config', str(config), '--out', str(out)]) == EXIT_DIVERGED
    assert not out.exists()

    def degenerate(cfg, **kwargs):
        raise DegenerateCodebookError('codebook collapsed to zero power')
    monkeypatch.setattr(cli, 'train', degenerate)
    assert main(['-q', 'train', '--config', str(config), '--out', str(out)]) == EXIT_DIVERGED

    def overflow(cfg, **kwargs):
        raise NonFiniteCodebookError('codebook power is not finite')
    monkeypatch.setattr(cli, 'train', overflow)
    assert main(['-q', 'train', '--config', str(config), '--out', str(out)]) == EXIT_DIVERGED


def test_eval_with_baseline(tmp_path):
    out = tmp_path / 'bler.csv'
    args = ['-q', 'eval', '--model', GOLDEN, '--snr', '0:20:10', '--trials', '300', '--out', str(out),
            '--baseline', 'exactml']
    assert main(args) == EXIT_OK

    rows = read_rows(out)
    assert rows[0] == CURVE_COLUMNS and len(rows) == 4
    baseline = read_rows(tmp_path / 'bler.exactml.csv')
    assert baseline[0] == CURVE_COLUMNS and len(baseline) == 4
    assert all(int(row[1]) == 300 for row in rows[1:] + baseline[1:])

    first = out.read_bytes()
    assert main(args) == EXIT_OK
    assert out.read_bytes() == first


def test_eval_missing_or_bad_model(tmp_path):
    out = tmp_path / 'bler.csv'
    assert main(['-q', 'eval', '--model', str(tmp_path / 'missing.json'), '--snr', '0:10:5',
                 '--out', str(out)]) == EXIT_USAGE
    bad = tmp_path / 'bad.json'
    bad.write_text('{}')
    assert main(['-q', 'eval', '--model', str(bad), '--snr', '0:10:5', '--out', str(out)]) == EXIT_USAGE
    assert not out.exists()


def test_sweep_dry_run(tmp_path, capsys):
    grid = write_json(tmp_path / 'grid.json', dict(base=TINY, grid=dict(lamb=[1., 3.], snr_db=[10, 20])))
    assert main(['-q', 'sweep', '--grid', str(grid), '--out', str(tmp_path / 'out'), '--dry-run']) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4
    assert lines[0].startswith('0 ') and json.loads(lines[3].split(' ', 1)[1])['lamb'] == 3.
    assert not (tmp_path / 'out').exists()


def test_sweep_writes_summary(tmp_path):
    grid = write_json(tmp_path / 'grid.json', dict(base=TINY, grid=dict(lamb=[1., 3.])))
    out = tmp_path / 'out'
    assert main(['-q', 'sweep', '--grid', str(grid), '--out', str(out), '--seed', '7']) == EXIT_OK

    rows = read_rows(out / 'summary.csv')
    assert rows[0] == SUMMARY_COLUMNS and len(rows) == 3
    assert [row[0] for row in rows[1:]] == ['1', '2']
    assert sorted(row[1] for row in rows[1:]) == ['0', '1']
    assert all(row[2] == 'max_iterations' or row[2] == 'early_stopped' for row in rows[1:])
    for index in (0, 1):
        assert (out / ('run-%03d' % index) / 'model.json').exists()
        assert (out / ('run-%03d' % index) / 'train.log.csv').exists()
    assert (out / '.cache' / 'runs.pkl').exists()


def test_sweep_all_failed(tmp_path, monkeypatch):
    def broken(cfg, **kwargs):
        raise RuntimeError('out of memory')
    monkeypatch.setattr(training, 'train', broken)

    grid = write_json(tmp_path / 'grid.json', dict(base=TINY, grid=dict(lamb=[1., 3.])))
    out = tmp_path / 'out'
    assert main(['-q', 'sweep', '--grid', str(grid), '--out', str(out), '--no-cache']) == EXIT_ALL_FAILED
    rows = read_rows(out / 'summary.csv')
    assert all(row[2] == 'failed' and 'out of memory' in row[-1] for row in rows[1:])


def test_sweep_bad_grid(tmp_path):
    grid = write_json(tmp_path / 'grid.json', dict(base=dict(TINY, lamb=None)))
    assert main(['-q', 'sweep', '--grid', str(grid), '--out', str(tmp_path / 'out')]) == EXIT_USAGE


def test_export(tmp_path):
    constellation = tmp_path / 'constellation.csv'
    assert main(['-q', 'export', '--model', GOLDEN, '--what', 'constellation', '--out', str(constellation)]) == EXIT_OK
    assert len(read_rows(constellation)) == 1 + 4*1*2

    posterior = tmp_path / 'posterior.csv'
    assert main(['-q', 'export', '--model', GOLDEN, '--what', 'posterior-demo', '--out', str(posterior),
                 '--count', '20']) == EXIT_OK
    assert len(read_rows(posterior)) == 21

    assert main(['-q', 'export', '--model', GOLDEN, '--what', 'histogram', '--out', str(posterior)]) == EXIT_USAGE


def test_sweep_dry_run_shows_run_seeds(tmp_path, capsys):
    grid = write_json(tmp_path / 'grid.json', dict(base=TINY, grid=dict(lamb=[1., 3., 10.])))
    assert main(['-q', 'sweep', '--grid', str(grid), '--out', str(tmp_path / 'out'), '--dry-run']) == EXIT_OK
    seeds = [json.loads(line.split(' ', 1)[1])['seed'] for line in capsys.readouterr().out.splitlines()]
    assert len(set(seeds)) == 3


def test_parallel_runs_are_byte_identical(tmp_path):
    grid = write_json(tmp_path / 'grid.json', dict(base=TINY, grid=dict(lamb=[1., 3.], snr_db=[10, 20])))
    for parallel in ('1', '4'):
        out = tmp_path / ('sweep-' + parallel)
        assert main(['-q', 'sweep', '--grid', str(grid), '--out', str(out), '--seed', '5',
                     '--parallel', parallel]) == EXIT_OK
        assert main(['-q', 'eval', '--model', str(out / 'run-000' / 'model.json'), '--snr', '0:20:10',
                     '--trials', '400', '--shards', '4', '--parallel', parallel, '--baseline', 'exactml',
                     '--out', str(out / 'bler.csv')]) == EXIT_OK

    serial, parallel = tmp_path / 'sweep-1', tmp_path / 'sweep-4'
    names = ['summary.csv', 'bler.csv', 'bler.exactml.csv']
    for index in range(4):
        names += ['run-%03d/model.json' % index, 'run-%03d/train.log.csv' % index]
    for name in names:
        assert (serial / name).read_bytes() == (parallel / name).read_bytes()
