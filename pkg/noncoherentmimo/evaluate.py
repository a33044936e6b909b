#!/usr/bin/env python3
"""Monte-Carlo block error rates with Wilson confidence intervals."""

import sys
import csv
from pathlib import Path
from dataclasses import dataclass
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.stats import norm
from scipy.special import logsumexp
from tqdm import tqdm

from .channel import ChannelConfig, OperatingPoint, sigma2_from_snr_db, transmit
from .modem import encode, hard_decision

DEFAULT_CHUNK = 10000


def wilson_interval(errors, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion.

    Returns:
        (lo, hi) with lo = 0 when errors = 0 and hi = 1 when errors = trials.
    """
    if trials < 1 or not 0 <= errors <= trials:
        raise ValueError('need 0 <= errors <= trials and trials >= 1, got %d/%d' % (errors, trials))
    z = norm.ppf(0.5 + confidence/2)
    p = errors / trials
    denominator = 1 + z**2/trials
    centre = (p + z**2/(2*trials)) / denominator
    half = z*np.sqrt(p*(1 - p)/trials + z**2/(4*trials**2)) / denominator

    lo = 0. if errors == 0 else min(max(centre - half, 0.), p)
    hi = 1. if errors == trials else max(min(centre + half, 1.), p)
    return float(lo), float(hi)


@dataclass(frozen=True)
class BlerPoint:
    snr_db: float
    trials: int
    errors: int
    bler: float
    ci_lo: float
    ci_hi: float

    def __post_init__(self):
        assert 0 <= self.ci_lo <= self.bler <= self.ci_hi <= 1

    @classmethod
    def from_counts(cls, snr_db, errors, trials):
        lo, hi = wilson_interval(errors, trials)
        return cls(float(snr_db), int(trials), int(errors), errors/trials, lo, hi)

    @property
    def std_error(self):
        return float(np.sqrt(self.bler*(1 - self.bler)/self.trials))


@dataclass(frozen=True)
class BlerCurve:
    operating_point: OperatingPoint
    decoder: str
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, 'points', tuple(self.points))
        snr = [p.snr_db for p in self.points]
        if any(b <= a for a, b in zip(snr[:-1], snr[1:])):
            raise ValueError('SNR grid must be strictly increasing: %r' % snr)

    @property
    def snr_db(self):
        return np.array([p.snr_db for p in self.points])

    @property
    def bler(self):
        return np.array([p.bler for p in self.points])


def _count_errors(cb, decoders, cfg, trials, rng, chunk_size):
    """Error counts of each decoder over `trials` transmissions drawn from one stream.

    Every chunk draws messages first, then the channel and then the noise, and all
    decoders see the same received signals.
    """
    errors = np.zeros(len(decoders), dtype=np.int64)
    done = 0
    while done < trials:
        size = min(chunk_size, trials - done)
        messages = rng.integers(cb.messages, size)
        Y, H = transmit(encode(cb, messages), cfg, rng)
        for i, decoder in enumerate(decoders):
            decisions = hard_decision(decoder.logits(Y, cb, H, cfg.sigma2))
            errors[i] += np.count_nonzero(decisions != messages)
        done += size
    return errors


def _count_shard(args):
    return _count_errors(*args)


def shard_sizes(trials, shards):
    """Split trials as evenly as possible, earlier shards taking the remainder."""
    base, extra = divmod(trials, shards)
    return [base + (s < extra) for s in range(shards)]


def estimate_bler_paired(cb, decoders, snr_db, trials, rng, n, shards=1, parallel=1,
                         chunk_size=DEFAULT_CHUNK, min_errors=None, max_trials=None, print_updates=None):
    """Score several decoders on the same (message, H, Z) draws.

    Args:
        cb: Codebook
        decoders: list of Decoder
        snr_db: channel SNR
        trials: number of transmissions
        rng: RngStream; shard s draws from rng.derive(s)
        n: receive antennas
        shards: number of independent sub-streams the trials are split over
        parallel: worker processes for the shards
        chunk_size: transmissions decoded at once
        min_errors: if given, keep drawing further chunks (from streams rng.derive(shards + j))
                    until the first decoder has made this many errors...
        max_trials: ...or the total reaches this cap
    Returns:
        list of BlerPoint, one per decoder.
    """
    if trials < 1:
        raise ValueError('need at least one trial, got %d' % trials)
    if shards < 1:
        raise ValueError('need at least one shard, got %d' % shards)
    cfg = ChannelConfig(cb.m, n, cb.L, sigma2_from_snr_db(snr_db))

    tasks = [(cb, decoders, cfg, size, rng.derive(s), chunk_size)
             for s, size in enumerate(shard_sizes(trials, shards)) if size > 0]
    if parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            counts = list(pool.map(_count_shard, tasks))
    else:
        counts = [_count_shard(task) for task in tasks]
    errors = np.sum(counts, axis=0)

    if min_errors is not None:
        cap = max_trials if max_trials is not None else 100*trials
        extra = shards
        while errors[0] < min_errors and trials < cap:
            size = min(chunk_size, cap - trials)
            errors += _count_errors(cb, decoders, cfg, size, rng.derive(extra), chunk_size)
            trials += size
            extra += 1
        if print_updates:
            print_updates.write('%.4g dB: %d errors in %d trials\n' % (snr_db, errors[0], trials))

    return [BlerPoint.from_counts(snr_db, int(e), trials) for e in errors]


def estimate_bler(cb, decoder, snr_db, trials, rng, n, **kwargs):
    """Monte-Carlo BLER of one decoder; see estimate_bler_paired for the options."""
    return estimate_bler_paired(cb, [decoder], snr_db, trials, rng, n, **kwargs)[0]


def snr_grid(start, stop, step):
    """Inclusive SNR grid start, start+step, ..., up to stop."""
    if not step > 0:
        raise ValueError('SNR step must be positive, got %r' % step)
    if stop < start:
        raise ValueError('SNR stop %r is below start %r' % (stop, start))
    count = int(np.floor((stop - start)/step + 1e-9)) + 1
    return [start + i*step for i in range(count)]


def sweep_snr_paired(cb, decoders, snr_start, snr_stop, snr_step, trials_per_point, rng, n,
                     show_progress=False, **kwargs):
    """One BlerCurve per decoder; point i of every curve uses the draws of rng.derive(i)."""
    grid = snr_grid(snr_start, snr_stop, snr_step)
    op = OperatingPoint(cb.k, cb.L, cb.m, n)

    points = []
    for i, snr_db in enumerate(tqdm(grid, file=sys.stderr, disable=not show_progress)):
        points += [estimate_bler_paired(cb, decoders, snr_db, trials_per_point, rng.derive(i), n, **kwargs)]
    return [BlerCurve(op, decoder.variant, [p[d] for p in points]) for d, decoder in enumerate(decoders)]


def sweep_snr(cb, decoder, snr_start, snr_stop, snr_step, trials_per_point, rng, n, **kwargs):
    return sweep_snr_paired(cb, [decoder], snr_start, snr_stop, snr_step, trials_per_point, rng, n, **kwargs)[0]


def information_estimate(cb, decoder, snr_db, trials, rng, n, chunk_size=DEFAULT_CHUNK):
    """Lower bound k - CE/ln 2 (bits per block) on the mutual information between message and Y.

    The cross-entropy is that of the decoder posterior on fresh transmissions.
    """
    cfg = ChannelConfig(cb.m, n, cb.L, sigma2_from_snr_db(snr_db))
    total = 0.
    done = 0
    while done < trials:
        size = min(chunk_size, trials - done)
        messages = rng.integers(cb.messages, size)
        Y, H = transmit(encode(cb, messages), cfg, rng)
        logits = decoder.logits(Y, cb, H, cfg.sigma2)
        total += np.sum(logsumexp(logits, axis=-1) - logits[np.arange(size), messages])
        done += size
    return cb.k - (total/trials)/np.log(2)


CURVE_COLUMNS = ['snr_db', 'trials', 'errors', 'bler', 'ci_lo', 'ci_hi']


def write_curve_csv(curve, path):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_COLUMNS)
        for p in curve.points:
            writer.writerow([repr(p.snr_db), p.trials, p.errors, repr(p.bler), repr(p.ci_lo), repr(p.ci_hi)])


def baseline_path(path, baseline):
    """Sibling file for a paired baseline curve, e.g. bler.csv -> bler.exactml.csv."""
    path = Path(path)
    return path.with_name('%s.%s%s' % (path.stem, baseline, path.suffix))


def read_curve_csv(path):
    with open(path, newline='') as f:
        rows = list(csv.DictReader(f))
    return [BlerPoint(float(r['snr_db']), int(r['trials']), int(r['errors']), float(r['bler']),
                      float(r['ci_lo']), float(r['ci_hi'])) for r in rows]
