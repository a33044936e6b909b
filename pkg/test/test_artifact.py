#!/usr/bin/env python3

import os
import csv
import json

import pytest
import numpy as np

from noncoherentmimo.artifact import (ModelArtifact, ArtifactError, FORMAT_VERSION, save, load,
                                      write_constellation_csv, read_constellation_csv, write_posterior_csv,
                                      CONSTELLATION_COLUMNS)
from noncoherentmimo.training import TrainConfig, TrainingRun, train
from noncoherentmimo.modem import encode, message_from_bits, PseudoMLDecoder
from noncoherentmimo.channel import OperatingPoint, transmit
from noncoherentmimo.tensor import ComplexMatrix, RngStream

GOLDEN = os.path.join(os.path.dirname(__file__), 'data', 'golden_model.json')


def small_run(decoder='pml', **kwargs):
    values = dict(k=2, L=2, m=2, n=2, decoder=decoder, snr_db=15., batch_size=50, max_iterations=4,
                  eval_interval=2, validation_size=100, hidden=8)
    if decoder == 'pml': values['lamb'] = 1.
    values.update(kwargs)
    return train(TrainConfig(**values))


def test_golden_artifact():
    artifact = load(GOLDEN)
    assert artifact.operating_point == OperatingPoint(2, 2, 1, 1)
    assert artifact.decoder.variant == 'pml' and artifact.decoder.theta == 2.5
    assert np.array_equal(artifact.codebook.codewords.re[2], [[0., -1.]])
    assert np.array_equal(artifact.codebook.codewords.im[2], [[1., 0.]])
    assert np.isclose(artifact.codebook.average_power, 1.)
    assert artifact.training['val_bler'] == 0.0123 and artifact.training['seed'] == 0

    # Noiseless reception through any unit-modulus channel decodes every message.
    cb = artifact.codebook
    for message in range(4):
        for phase in (0., 0.7, 2.):
            h = ComplexMatrix([[np.cos(phase)]], [[np.sin(phase)]])
            Y, _ = transmit(encode(cb, message), OperatingPoint(2, 2, 1, 1).channel(np.inf), RngStream(0), H=h)
            assert artifact.decoder.decide(Y, cb) == message


def test_golden_artifact_saves_identically(tmp_path):
    path = tmp_path / 'model.json'
    save(load(GOLDEN), path)
    with open(GOLDEN, 'rb') as a, open(path, 'rb') as b:
        assert a.read() == b.read()


@pytest.mark.parametrize('decoder', ['pml', 'mlp', 'resmlp'])
def test_round_trip_decisions_are_exact(tmp_path, decoder):
    run = small_run(decoder)
    artifact = ModelArtifact.from_run(run)
    path = tmp_path / 'model.json'
    save(artifact, path)
    loaded = load(path)

    assert loaded.codebook.codewords == artifact.codebook.codewords
    assert loaded.decoder.variant == decoder
    assert loaded.training == artifact.training
    assert loaded.training['best_iteration'] == run.best.iteration

    cfg = artifact.operating_point.channel(10)
    rng = RngStream(1)
    Y, H = transmit(encode(artifact.codebook, rng.integers(4, 200)), cfg, rng)
    assert np.array_equal(loaded.decoder.logits(Y, loaded.codebook, H, cfg.sigma2),
                          artifact.decoder.logits(Y, artifact.codebook, H, cfg.sigma2))

    second = tmp_path / 'again.json'
    save(loaded, second)
    assert path.read_bytes() == second.read_bytes()


def test_future_version_is_rejected(tmp_path):
    data = json.loads(open(GOLDEN).read())
    data['format_version'] = FORMAT_VERSION + 1
    path = tmp_path / 'future.json'
    path.write_text(json.dumps(data))
    with pytest.raises(ArtifactError, match='newer'):
        load(path)


def test_bad_artifacts(tmp_path):
    data = json.loads(open(GOLDEN).read())

    conventions = dict(data, conventions=dict(data['conventions'], bit_order='lsb-first'))
    with pytest.raises(ArtifactError):
        ModelArtifact.from_dict(conventions)

    with pytest.raises(ArtifactError):
        ModelArtifact.from_dict({key: value for key, value in data.items() if key != 'format_version'})
    with pytest.raises(ArtifactError):
        ModelArtifact.from_dict({key: value for key, value in data.items() if key != 'codebook'})
    with pytest.raises(ArtifactError):
        ModelArtifact.from_dict(dict(data, decoder=dict(variant='glrt')))
    with pytest.raises(ArtifactError):
        ModelArtifact.from_dict(dict(data, operating_point=dict(k=2, L=2, m=1, n=1, extra=1)))
    with pytest.raises(ArtifactError):
        ModelArtifact.from_dict(dict(data, codebook=dict(re=data['codebook']['re'][:2], im=data['codebook']['im'])))

    broken = tmp_path / 'broken.json'
    broken.write_text('{"format_version": ')
    with pytest.raises(ArtifactError):
        load(broken)
    with pytest.raises(FileNotFoundError):
        load(tmp_path / 'missing.json')


def test_from_run_needs_a_snapshot():
    cfg = TrainConfig(k=2, L=2, m=2, n=2, decoder='pml', lamb=1., snr_db=15.)
    with pytest.raises(ArtifactError):
        ModelArtifact.from_run(TrainingRun(cfg, stop_reason='diverged'))


def test_operating_point_must_match_codebook():
    golden = load(GOLDEN)
    with pytest.raises(ArtifactError):
        ModelArtifact(OperatingPoint(2, 2, 2, 1), golden.codebook, PseudoMLDecoder(1.))


def test_constellation_csv(tmp_path):
    artifact = ModelArtifact.from_run(small_run())
    cb = artifact.codebook
    path = tmp_path / 'constellation.csv'
    write_constellation_csv(cb, path)

    with open(path, newline='') as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == CONSTELLATION_COLUMNS
    assert len(rows) == cb.messages*cb.m*cb.L
    power = np.mean([float(r['re'])**2 + float(r['im'])**2 for r in rows])
    assert np.isclose(power, 1, rtol=0, atol=1e-9)

    assert read_constellation_csv(path).codewords == cb.codewords


def test_constellation_csv_errors(tmp_path):
    path = tmp_path / 'points.csv'
    path.write_text('message,antenna,slot,re,im\n0,0,0,1.0,0.0\n1,0,1,1.0,0.0\n')
    with pytest.raises(ValueError):
        read_constellation_csv(path)
    path.write_text('message,antenna,slot,re,im\n')
    with pytest.raises(ValueError):
        read_constellation_csv(path)


def test_posterior_csv(tmp_path):
    artifact = load(GOLDEN)
    path = tmp_path / 'posterior.csv'
    write_posterior_csv(artifact, path, 50, 20., RngStream(2))

    with open(path, newline='') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['message', 'decoded', 'bits', 'decoded_bits', 'p_0', 'p_1', 'p_2', 'p_3']
    assert len(rows) == 51
    for row in rows[1:]:
        p = np.array([float(x) for x in row[4:]])
        assert np.isclose(p.sum(), 1) and np.all(p >= 0)
        assert int(row[1]) == int(np.argmax(p))
        assert 0 <= int(row[0]) < 4
        assert row[2] == format(int(row[0]), '02b') and row[3] == format(int(row[1]), '02b')
        assert message_from_bits([int(bit) for bit in row[3]]) == int(row[1])
