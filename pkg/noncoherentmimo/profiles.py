#!/usr/bin/env python3
"""Named run profiles and registered hyperparameter grids.

desk: small enough to train and evaluate on a laptop in minutes.
paper: the full-scale batch, iteration and trial counts of the published experiments.
"""

import itertools
from dataclasses import dataclass


@dataclass(frozen=True)
class Profile:
    name: str
    batch_size: int
    max_iterations: int
    eval_interval: int
    patience: int
    validation_size: int
    eval_trials: int

    def train_defaults(self):
        return dict(batch_size=self.batch_size, max_iterations=self.max_iterations,
                    eval_interval=self.eval_interval, patience=self.patience,
                    validation_size=self.validation_size)


PROFILES = {p.name: p for p in [
    Profile('desk', batch_size=1000, max_iterations=2000, eval_interval=250, patience=10,
            validation_size=10000, eval_trials=10**5),
    Profile('paper', batch_size=10000, max_iterations=50000, eval_interval=250, patience=10,
            validation_size=10000, eval_trials=10**6),
]}


def get_profile(name):
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError('unknown profile %r (choose from %s)' % (name, ', '.join(PROFILES))) from None


# Operating points of the published experiment matrix as (k, L, m, n).
MESSAGE_BITS = [2, 4, 6, 8]
ANTENNAS = {2: [(2, 2), (2, 3), (2, 4)],
            4: [(2, 2), (3, 3), (4, 4)]}

OPERATING_POINTS = [dict(k=k, L=L, m=m, n=n)
                    for k in MESSAGE_BITS for L, antennas in ANTENNAS.items() for m, n in antennas]

TRAIN_SNRS = [float(snr) for snr in range(10, 31, 5)]
LAMBDAS = [1.0, 3.0, 10.0]
DEPTHS = [1, 2, 3]
WIDTHS = [256, 500, 1000]


GRID_REGISTRY = {}


def register_grid(name):
    """Decorator registering a function that returns a list of grid entries (dicts of TrainConfig keys)."""
    def decorator(function):
        if name in GRID_REGISTRY:
            raise ValueError('grid %r registered twice' % name)
        GRID_REGISTRY[name] = function
        return function
    return decorator


def expand_grid(grid):
    """Cartesian product of key -> list of values, the first key varying slowest."""
    keys = list(grid)
    for key, values in grid.items():
        if not isinstance(values, (list, tuple)) or len(values) == 0:
            raise ValueError('grid entry %r must be a non-empty list' % key)
    return [dict(zip(keys, values)) for values in itertools.product(*grid.values())]


@register_grid('paper-pml')
def paper_pml_grid():
    return expand_grid(dict(decoder=['pml'], lamb=LAMBDAS, snr_db=TRAIN_SNRS))


@register_grid('paper-nn')
def paper_nn_grid():
    return expand_grid(dict(decoder=['mlp', 'resmlp'], depth=DEPTHS, hidden=WIDTHS, snr_db=TRAIN_SNRS))


@register_grid('paper')
def paper_grid():
    return paper_pml_grid() + paper_nn_grid()


def registered_grid(name, operating_points=None):
    """Entries of a registered grid crossed with operating points (all published ones by default)."""
    if name not in GRID_REGISTRY:
        raise ValueError('unknown grid %r (choose from %s)' % (name, ', '.join(GRID_REGISTRY)))
    if operating_points is None: operating_points = OPERATING_POINTS
    return [{**op, **entry} for op in operating_points for entry in GRID_REGISTRY[name]()]
