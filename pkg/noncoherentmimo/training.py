#!/usr/bin/env python3
"""Joint training of a codebook and its decoder.

The codebook normalisation, channel, decoder and loss are all built on one
autodiff tape per iteration, so every optimizer step acts on the raw
codebook C and the decoder parameters together. Channel and noise samples
are constants of the batch.
"""

import sys
import csv
from dataclasses import dataclass, field, replace
from concurrent.futures import ProcessPoolExecutor
import traceback

import numpy as np
from tqdm import tqdm

from .tensor import ComplexMatrix, RngStream
from .channel import OperatingPoint, sample_channel, transmit_graph
from .modem import (RawCodebook, Codebook, PseudoMLDecoder, NeuralDecoder, NonFiniteCodebookError,
                    normalize_codebook, orthonormal_loss, normalized_codewords_graph, orthonormal_loss_graph,
                    pml_logits_graph, nn_input_graph)
from .networks import NetArch, NETWORKS, build_network
from .evaluate import estimate_bler
from . import autodiff as ad

DECODERS = ('pml',) + tuple(NETWORKS)
COMBINATIONS = ('multiplicative', 'additive')
STOP_REASONS = ('max_iterations', 'early_stopped', 'diverged')


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    k: int
    L: int
    m: int
    n: int
    decoder: str
    snr_db: float
    batch_size: int = 1000
    max_iterations: int = 2000
    eval_interval: int = 250
    patience: int = 10
    learning_rate: float = 1e-3
    lamb: float = None
    depth: int = 1
    hidden: int = 256
    seed: int = 0
    validation_size: int = 10000
    combination: str = 'multiplicative'

    def __post_init__(self):
        OperatingPoint(self.k, self.L, self.m, self.n)
        if self.decoder not in DECODERS:
            raise ValueError('decoder must be one of %s, got %r' % (', '.join(DECODERS), self.decoder))
        if self.combination not in COMBINATIONS:
            raise ValueError('combination must be one of %s, got %r' % (', '.join(COMBINATIONS), self.combination))
        for name in ('batch_size', 'max_iterations', 'eval_interval', 'patience', 'validation_size'):
            if getattr(self, name) < 1:
                raise ValueError('%s must be at least 1, got %r' % (name, getattr(self, name)))
        if not self.learning_rate > 0:
            raise ValueError('learning_rate must be positive, got %r' % self.learning_rate)
        if self.seed < 0:
            raise ValueError('seed must be non-negative, got %r' % self.seed)
        if self.decoder == 'pml':
            if self.lamb is None or not self.lamb > 0:
                raise ValueError('lamb must be positive for the pml decoder, got %r' % self.lamb)
        else:
            NetArch(self.decoder, self.depth, self.hidden, 2*self.n*self.L, 2**self.k)

    @property
    def operating_point(self):
        return OperatingPoint(self.k, self.L, self.m, self.n)

    @property
    def channel(self):
        return self.operating_point.channel(self.snr_db)

    @property
    def arch(self):
        if self.decoder == 'pml': return None
        return NetArch(self.decoder, self.depth, self.hidden, 2*self.n*self.L, 2**self.k)

    def as_dict(self):
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class Batch:
    messages: np.ndarray
    H: ComplexMatrix
    Z: ComplexMatrix


def sample_batch(cfg, size, rng):
    """Uniform messages with one fresh channel and noise block per message (drawn in that order)."""
    messages = rng.integers(2**cfg.k, size)
    H, Z = sample_channel(cfg.channel, size, rng)
    return Batch(messages, H, Z)


@dataclass
class Objective:
    loss: ad.Node
    cross_entropy: ad.Node
    ortho_loss: ad.Node
    theta: ad.Node = None

    @property
    def tape(self):
        return self.loss.tape


def _received_graph(tape, batch, raw):
    c_re = tape.parameter(raw.C.re, 'C_re')
    c_im = tape.parameter(raw.C.im, 'C_im')
    x_re, x_im = normalized_codewords_graph(c_re, c_im, raw.m, raw.L)
    sent_re, sent_im = ad.take(x_re, batch.messages), ad.take(x_im, batch.messages)
    y_re, y_im = transmit_graph(sent_re, sent_im, batch.H, batch.Z)
    return x_re, x_im, y_re, y_im


def combine(cross_entropy, ortho_loss, lamb, combination='multiplicative'):
    if combination == 'multiplicative':
        return cross_entropy * (ortho_loss*lamb + 1.)
    elif combination == 'additive':
        return cross_entropy + ortho_loss*lamb
    raise ValueError('unknown combination %r' % combination)


def nn_objective(batch, raw, network, mode='train', tape=None):
    """Cross-entropy of the network posterior on a batch sent through the current codebook.

    The orthonormal loss is computed for diagnostics only and does not enter the loss.
    """
    tape = tape or ad.Tape()
    x_re, x_im, y_re, y_im = _received_graph(tape, batch, raw)
    logits, _ = network.graph(nn_input_graph(y_re, y_im), mode)
    ce = ad.softmax_cross_entropy(logits, batch.messages)
    return Objective(ce, ce, orthonormal_loss_graph(x_re, x_im))


def pml_objective(batch, raw, phi, lamb, combination='multiplicative', tape=None):
    """Pseudo-ML cross-entropy combined with the orthonormal loss of the codebook.

    Args:
        batch: Batch of messages and channel samples
        raw: RawCodebook holding the current parameter values
        phi: log of theta (registered on the tape as 'phi')
        lamb: weight of the orthonormal loss (0 leaves the plain cross-entropy)
        combination: 'multiplicative' for CE (1 + lamb l(C)), 'additive' for CE + lamb l(C)
    """
    tape = tape or ad.Tape()
    x_re, x_im, y_re, y_im = _received_graph(tape, batch, raw)
    theta = ad.exp(tape.parameter(phi, 'phi'))
    logits = pml_logits_graph(y_re, y_im, x_re, x_im, theta)
    ce = ad.softmax_cross_entropy(logits, batch.messages)
    ortho = orthonormal_loss_graph(x_re, x_im)
    return Objective(combine(ce, ortho, lamb, combination), ce, ortho, theta)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, params, learning_rate=1e-3, **kwargs):
        return cls(learning_rate, m={name: np.zeros_like(p) for name, p in params.items()},
                   v={name: np.zeros_like(p) for name, p in params.items()}, **kwargs)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, applied to the parameter arrays in place.

    Returns:
        (params, state) for convenience.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ValueError('gradient of %s has shape %r, parameter has %r' % (name, g.shape, value.shape))
        m = state.m.setdefault(name, np.zeros_like(value))
        v = state.v.setdefault(name, np.zeros_like(value))
        m[...] = b1*m + (1 - b1)*g
        v[...] = b2*v + (1 - b2)*g**2
        m_hat = m / (1 - b1**state.t)
        v_hat = v / (1 - b2**state.t)
        value -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


@dataclass
class StepRecord:
    iteration: int
    objective: float
    cross_entropy: float
    ortho_loss: float
    theta: float = None


@dataclass
class EvalRecord:
    iteration: int
    val_bler: float
    errors: int
    trials: int


@dataclass
class Snapshot:
    codebook: Codebook
    decoder: object
    iteration: int
    val_bler: float
    ortho_loss: float


@dataclass
class TrainingRun:
    config: TrainConfig
    losses: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    best: Snapshot = None
    stop_reason: str = None
    iterations: int = 0

    @property
    def final_objective(self):
        return self.losses[-1].objective if self.losses else np.inf

    @property
    def best_bler(self):
        return self.best.val_bler if self.best is not None else np.inf


def evaluation_chunks(max_iterations, eval_interval):
    """Split the run into chunks that each end on an evaluation.

    Returns:
        Iterations at which to evaluate, the last always being max_iterations.
    """
    stops = list(range(eval_interval, max_iterations, eval_interval)) + [max_iterations]
    assert stops[-1] == max_iterations and all(np.diff(stops) > 0)
    return stops


class Trainer:
    """Mutable state of one training instance: parameter arrays, optimizer and decoder."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.rng = RngStream(cfg.seed)
        init = self.rng.derive(0)

        raw = RawCodebook.random(cfg.k, cfg.m, cfg.L, init.derive(0))
        self.params = {'C_re': np.array(raw.C.re), 'C_im': np.array(raw.C.im)}
        if cfg.decoder == 'pml':
            self.network = None
            self.params['phi'] = np.zeros(())
        else:
            self.network = build_network(cfg.arch, init.derive(1))
            # Shared with the network: adam_step updates its weights in place.
            self.params.update(self.network.weights.params)
        self.optimizer = AdamState.fresh(self.params, cfg.learning_rate)

    @property
    def raw(self):
        cfg = self.cfg
        return RawCodebook(cfg.k, cfg.m, cfg.L, ComplexMatrix(self.params['C_re'], self.params['C_im']))

    @property
    def theta(self):
        return float(np.exp(self.params['phi'])) if self.network is None else None

    @property
    def finite(self):
        return all(np.all(np.isfinite(value)) for value in self.params.values())

    def codebook(self):
        return normalize_codebook(self.raw)

    def decoder(self):
        if self.network is None: return PseudoMLDecoder(self.theta)
        return NeuralDecoder(self.network)

    def objective(self, batch):
        if self.network is None:
            return pml_objective(batch, self.raw, self.params['phi'], self.cfg.lamb, self.cfg.combination)
        return nn_objective(batch, self.raw, self.network, 'train')

    def step(self, iteration):
        """Sample a batch, evaluate the objective and take one optimizer step.

        Returns:
            StepRecord with the objective terms before the update.
        """
        batch = sample_batch(self.cfg, self.cfg.batch_size, self.rng.derive(1, iteration))
        try:
            objective = self.objective(batch)
        except NonFiniteCodebookError:
            return StepRecord(iteration, np.nan, np.nan, np.nan, self.theta)
        record = StepRecord(iteration, float(objective.loss.value), float(objective.cross_entropy.value),
                            float(objective.ortho_loss.value),
                            float(objective.theta.value) if objective.theta is not None else None)
        if not np.isfinite(record.objective):
            return record

        grads = objective.tape.backward(objective.loss)
        adam_step(self.params, grads, self.optimizer)
        return record

    def validate(self, index):
        point = estimate_bler(self.codebook(), self.decoder(), self.cfg.snr_db,
                              self.cfg.validation_size, self.rng.derive(2, index), n=self.cfg.n)
        return point

    def snapshot(self, iteration, val_bler):
        cb = self.codebook()
        return Snapshot(cb, self.decoder().copy(), iteration, val_bler, orthonormal_loss(cb))


def train(cfg, print_updates=None, show_progress=False, callback=None):
    """Train a codebook and decoder with Adam, early stopping and best-BLER snapshots.

    Every eval_interval iterations (and after the last one) the validation BLER is
    measured on fresh messages at the training SNR, and the state is snapshotted when
    it strictly improves. Training stops early once the objective averaged over an
    evaluation interval has failed to improve for `patience` consecutive evaluations.

    Args:
        cfg: TrainConfig
        print_updates: stream for one line per evaluation (or None for silence)
        show_progress: show a tqdm bar over evaluation chunks
        callback: called as callback(trainer, record) after every optimizer step
    Returns:
        TrainingRun. A non-finite objective or parameter stops the run with stop_reason 'diverged'.
    Raises:
        DegenerateCodebookError: if the codebook collapses to a single point.
    """
    trainer = Trainer(cfg)
    run = TrainingRun(cfg)

    best_average = np.inf
    stale = 0
    iteration = 0

    stops = evaluation_chunks(cfg.max_iterations, cfg.eval_interval)
    if show_progress and len(stops) > 1: stops = tqdm(stops, file=sys.stderr)

    for index, stop in enumerate(stops):
        chunk = []
        while iteration < stop:
            iteration += 1
            record = trainer.step(iteration)
            run.losses += [record]
            run.iterations = iteration
            # A finite objective can still hand back non-finite gradients.
            if not np.isfinite(record.objective) or not trainer.finite:
                run.stop_reason = 'diverged'
                if print_updates:
                    print_updates.write('diverged at iteration %d: objective=%r cross_entropy=%r ortho_loss=%r%s\n'
                                        % (iteration, record.objective, record.cross_entropy, record.ortho_loss,
                                           '' if trainer.finite else ' (non-finite parameters)'))
                return run
            chunk += [record.objective]
            if callback is not None: callback(trainer, record)

        point = trainer.validate(index)
        run.evaluations += [EvalRecord(iteration, float(point.bler), int(point.errors), int(point.trials))]
        if point.bler < run.best_bler:
            run.best = trainer.snapshot(iteration, float(point.bler))

        if print_updates:
            theta = '' if trainer.theta is None else ' theta=%.6g' % trainer.theta
            print_updates.write('iteration %d: objective=%.6g val_bler=%.6g%s\n'
                                % (iteration, record.objective, point.bler, theta))

        average = np.mean(chunk)
        if average < best_average:
            best_average, stale = average, 0
        else:
            stale += 1
        if stale >= cfg.patience and iteration < cfg.max_iterations:
            run.stop_reason = 'early_stopped'
            if print_updates:
                print_updates.write('early stopping at iteration %d: objective has not improved for %d evaluations\n'
                                    % (iteration, stale))
            return run

    run.stop_reason = 'max_iterations'
    return run


def run_or_raise(cfg, **kwargs):
    run = train(cfg, **kwargs)
    if run.stop_reason == 'diverged':
        raise DivergenceError('training diverged at iteration %d' % run.iterations)
    return run


@dataclass
class SweepResult:
    index: int
    config: TrainConfig
    run: TrainingRun = None
    error: str = None

    @property
    def failed(self):
        return self.run is None or self.run.best is None

    @property
    def status(self):
        if self.run is None: return 'failed'
        return self.run.stop_reason

    def rank_key(self):
        if self.run is None: return (True, np.inf, np.inf, self.index)
        return (self.failed, self.run.best_bler, self.run.final_objective, self.index)


def _sweep_task(index, cfg):
    try:
        return SweepResult(index, cfg, train(cfg))
    except Exception as e:
        return SweepResult(index, cfg, error='%s: %s' % (type(e).__name__, e))


def sweep_configs(grid, seed=None):
    """Per-run configurations: run i trains with a seed derived from a master seed and i.

    Without a master seed each configuration's own seed acts as the master, so runs that
    differ only in hyperparameters still draw different codebooks and channels.
    """
    return [replace(cfg, seed=RngStream(cfg.seed if seed is None else seed).derive_seed(index))
            for index, cfg in enumerate(grid)]


def sweep(grid, seed=None, parallel=1, cache=None, print_updates=None, show_progress=False):
    """Train every configuration of a grid and rank the runs.

    Args:
        grid: non-empty list of TrainConfig
        seed: master seed; run i trains with RngStream(seed).derive_seed(i), independently
              of scheduling (each configuration's own seed is the master when None)
        parallel: number of worker processes
        cache: optional DiskCache of finished runs keyed by configuration
        print_updates: stream for per-run status lines
    Returns:
        list of SweepResult ranked by best validation BLER (failed runs last), ties
        broken by final objective and then grid index.
    """
    if len(grid) == 0:
        raise ValueError('cannot sweep an empty grid')
    configs = sweep_configs(grid, seed)

    results = {}
    pending = []
    for index, cfg in enumerate(configs):
        if cache is not None and cfg in cache:
            results[index] = SweepResult(index, cfg, cache[cfg])
            if print_updates: print_updates.write('run %d: reusing cached result\n' % index)
        else:
            pending += [(index, cfg)]

    def finish(result):
        results[result.index] = result
        if result.run is not None and cache is not None:
            cache[result.config] = result.run
        if print_updates:
            if result.run is None:
                print_updates.write('run %d: failed (%s)\n' % (result.index, result.error))
            else:
                print_updates.write('run %d: %s, best val_bler=%.6g\n'
                                    % (result.index, result.status, result.run.best_bler))

    progress = tqdm(total=len(pending), file=sys.stderr, disable=not show_progress)
    if parallel > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(_sweep_task, index, cfg) for index, cfg in pending]
            for (index, cfg), future in zip(pending, futures):
                try:
                    finish(future.result())
                except Exception:
                    finish(SweepResult(index, cfg, error=traceback.format_exc(limit=1).strip()))
                progress.update()
    else:
        for index, cfg in pending:
            finish(_sweep_task(index, cfg))
            progress.update()
    progress.close()

    return sorted(results.values(), key=SweepResult.rank_key)


def write_training_log(run, path):
    """Training log CSV: one 'step' row per iteration and one 'eval' row per evaluation."""
    evaluations = {record.iteration: record for record in run.evaluations}
    fmt = lambda x: '' if x is None else repr(x)

    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['kind', 'iteration', 'objective', 'cross_entropy', 'ortho_loss', 'theta', 'val_bler'])
        for record in run.losses:
            writer.writerow(['step', record.iteration, fmt(record.objective), fmt(record.cross_entropy),
                             fmt(record.ortho_loss), fmt(record.theta), ''])
            if record.iteration in evaluations:
                writer.writerow(['eval', record.iteration, '', '', '', '', fmt(evaluations[record.iteration].val_bler)])
