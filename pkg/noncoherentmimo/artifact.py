#!/usr/bin/env python3
"""Model artifacts (JSON) and CSV exports of learned constellations.

Artifact layout, format version 1:

    format_version   1
    conventions      reshape, bit order and network-input order the arrays assume
    operating_point  {k, L, m, n}
    codebook         {re, im}: 2^k rows of length mL, antenna-major within a row
    decoder          {variant: pml, theta} or
                     {variant: mlp|resmlp, arch, params: {name: {shape, values}},
                      running: {bn<j>: {mean, var}}}
    training         train SNR, lamb, seed, iterations, best iteration and BLER, ...

Every float is stored as the repr of a 64-bit float, so loading reproduces the
saved numbers exactly.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .tensor import ComplexMatrix
from .channel import OperatingPoint, transmit
from .modem import (Codebook, PseudoMLDecoder, NeuralDecoder, RESHAPE_CONVENTION, BIT_ORDER, NN_INPUT_ORDER,
                    encode, softmax, hard_decision, bits_from_message)
from .networks import NetArch, NetWeights, network_from_weights
from .autodiff import RunningStats

FORMAT_VERSION = 1
CONVENTIONS = dict(reshape=RESHAPE_CONVENTION, bit_order=BIT_ORDER, nn_input=NN_INPUT_ORDER)
TRAINING_FLOATS = ('snr_db', 'lamb', 'learning_rate', 'val_bler', 'ortho_loss')


class ArtifactError(ValueError):
    pass


def _encode_array(a):
    return [repr(float(x)) for x in np.asarray(a, dtype=np.float64).reshape(-1)]


def _decode_array(values, shape):
    a = np.array([float(x) for x in values], dtype=np.float64)
    if a.size != int(np.prod(shape, dtype=np.int64)):
        raise ArtifactError('stored array of %d values does not fit shape %r' % (a.size, tuple(shape)))
    return a.reshape(shape)


def _encode_float(x):
    return None if x is None else repr(float(x))


def _decode_float(x):
    return None if x is None else float(x)


def encode_decoder(decoder):
    if decoder.variant == 'pml':
        return dict(variant='pml', theta=_encode_float(decoder.theta))

    network = decoder.network
    weights = network.weights
    params = {name: dict(shape=list(value.shape), values=_encode_array(value))
              for name, value in weights.params.items()}
    running = {name: dict(mean=_encode_array(stats.mean), var=_encode_array(stats.var))
               for name, stats in weights.running.items()}
    return dict(variant=network.family, arch=network.arch.as_dict(), params=params, running=running)


def decode_decoder(data):
    variant = data.get('variant')
    if variant == 'pml':
        return PseudoMLDecoder(_decode_float(data['theta']))
    if variant not in ('mlp', 'resmlp'):
        raise ArtifactError('unknown decoder variant %r' % variant)

    arch = NetArch(**data['arch'])
    params = {name: _decode_array(entry['values'], entry['shape']) for name, entry in data['params'].items()}
    running = {name: RunningStats(_decode_array(entry['mean'], (arch.hidden,)),
                                  _decode_array(entry['var'], (arch.hidden,)))
               for name, entry in data['running'].items()}
    return NeuralDecoder(network_from_weights(arch, NetWeights(params, running)))


@dataclass
class ModelArtifact:
    operating_point: OperatingPoint
    codebook: Codebook
    decoder: object
    training: dict = field(default_factory=dict)

    def __post_init__(self):
        op, cb = self.operating_point, self.codebook
        if (op.k, op.m, op.L) != (cb.k, cb.m, cb.L):
            raise ArtifactError('codebook (k=%d m=%d L=%d) does not match operating point %s'
                                % (cb.k, cb.m, cb.L, op))

    @classmethod
    def from_run(cls, run):
        """Artifact of the best snapshot of a TrainingRun."""
        if run.best is None:
            raise ArtifactError('training run has no snapshot to save (stop reason: %s)' % run.stop_reason)
        cfg = run.config
        training = dict(decoder=cfg.decoder, snr_db=cfg.snr_db, lamb=cfg.lamb, combination=cfg.combination,
                        seed=cfg.seed, batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
                        iterations=run.iterations, stop_reason=run.stop_reason,
                        best_iteration=run.best.iteration, val_bler=run.best.val_bler,
                        ortho_loss=run.best.ortho_loss)
        return cls(cfg.operating_point, run.best.codebook, run.best.decoder, training)

    def as_dict(self):
        rows = self.codebook.rows
        training = {key: (_encode_float(value) if key in TRAINING_FLOATS else value)
                    for key, value in self.training.items()}
        return dict(format_version=FORMAT_VERSION,
                    conventions=dict(CONVENTIONS),
                    operating_point=self.operating_point.as_dict(),
                    codebook=dict(re=[_encode_array(row) for row in rows.re],
                                  im=[_encode_array(row) for row in rows.im]),
                    decoder=encode_decoder(self.decoder),
                    training=training)

    @classmethod
    def from_dict(cls, data):
        version = data.get('format_version')
        if not isinstance(version, int):
            raise ArtifactError('artifact has no format version')
        if version > FORMAT_VERSION:
            raise ArtifactError('artifact format version %d is newer than the supported version %d'
                                % (version, FORMAT_VERSION))
        if data.get('conventions', CONVENTIONS) != CONVENTIONS:
            raise ArtifactError('artifact uses unsupported conventions %r' % data['conventions'])

        try:
            op = OperatingPoint(**data['operating_point'])
            shape = (op.messages, op.m*op.L)
            rows = ComplexMatrix(_decode_array(sum(data['codebook']['re'], []), shape),
                                 _decode_array(sum(data['codebook']['im'], []), shape))
            codebook = Codebook.from_rows(op.k, op.m, op.L, rows)
            decoder = decode_decoder(data['decoder'])
        except (KeyError, TypeError) as e:
            raise ArtifactError('malformed artifact: missing or bad entry %s' % e) from None

        training = {key: (_decode_float(value) if key in TRAINING_FLOATS else value)
                    for key, value in data.get('training', {}).items()}
        return cls(op, codebook, decoder, training)


def save(artifact, path):
    with open(path, 'w') as f:
        json.dump(artifact.as_dict(), f, indent=1)
        f.write('\n')


def load(path):
    """Read an artifact.

    Raises:
        FileNotFoundError: if the file is missing.
        ArtifactError: if the file is not a readable artifact or has a future format version.
    """
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ArtifactError('%s is not valid JSON: %s' % (path, e)) from None
    return ModelArtifact.from_dict(data)


CONSTELLATION_COLUMNS = ['message', 'antenna', 'slot', 're', 'im']


def write_constellation_csv(cb, path):
    """One row per (message, antenna, slot) complex point of the codebook."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(CONSTELLATION_COLUMNS)
        for message in range(cb.messages):
            for antenna in range(cb.m):
                for slot in range(cb.L):
                    writer.writerow([message, antenna, slot, repr(float(cb.codewords.re[message, antenna, slot])),
                                     repr(float(cb.codewords.im[message, antenna, slot]))])


def read_constellation_csv(path):
    """Rebuild a Codebook from a constellation CSV written by write_constellation_csv."""
    with open(path, newline='') as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError('%s holds no constellation points' % path)

    index = np.array([[int(r['message']), int(r['antenna']), int(r['slot'])] for r in rows])
    K, m, L = index.max(axis=0) + 1
    if len(rows) != K*m*L:
        raise ValueError('%s has %d points, expected %d' % (path, len(rows), K*m*L))
    re, im = np.full((K, m, L), np.nan), np.full((K, m, L), np.nan)
    for (message, antenna, slot), r in zip(index, rows):
        re[message, antenna, slot] = float(r['re'])
        im[message, antenna, slot] = float(r['im'])
    if np.any(np.isnan(re)):
        raise ValueError('%s has duplicate or missing points' % path)
    return Codebook.from_codewords([ComplexMatrix(re[i], im[i]) for i in range(K)])


def write_posterior_csv(artifact, path, count, snr_db, rng):
    """Posteriors of the artifact's decoder for `count` random transmissions.

    Columns: message, decoded, their bit labels (most significant bit first) and
    p_0 .. p_{2^k-1}.
    """
    cb, op = artifact.codebook, artifact.operating_point
    cfg = op.channel(snr_db)
    messages = rng.integers(cb.messages, count)
    Y, H = transmit(encode(cb, messages), cfg, rng)
    logits = artifact.decoder.logits(Y, cb, H, cfg.sigma2)
    posterior = softmax(logits)
    decoded = hard_decision(logits)

    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['message', 'decoded', 'bits', 'decoded_bits'] + ['p_%d' % i for i in range(cb.messages)])
        label = lambda msg: ''.join(str(bit) for bit in bits_from_message(int(msg), cb.k))
        for message, decision, p in zip(messages, decoded, posterior):
            writer.writerow([int(message), int(decision), label(message), label(decision)]
                            + [repr(float(x)) for x in p])
