#!/usr/bin/env python3
"""JSON run configurations and sweep grid files.

A run configuration is a JSON object whose keys are TrainConfig fields, e.g.

    {"k": 2, "L": 2, "m": 2, "n": 2, "decoder": "pml", "lamb": 1.0, "snr_db": 15}

Keys the file omits take the profile value (batch_size, max_iterations,
eval_interval, patience, validation_size) or the TrainConfig default
(learning_rate 1e-3, depth 1, hidden 256, seed 0, combination
'multiplicative'). lamb has no default and must be given for pml.

A grid file holds
    base:       keys shared by every run
    grid:       key -> list of values, expanded as a Cartesian product in file order
    registered: optional {"name": <registered grid>, "operating_points": [{k, L, m, n}, ...]}
                (all published operating points when omitted)
"""

import json
from dataclasses import fields

from .training import TrainConfig
from .profiles import get_profile, expand_grid, registered_grid

CONFIG_KEYS = [f.name for f in fields(TrainConfig)]
REQUIRED_KEYS = ['k', 'L', 'm', 'n', 'decoder', 'snr_db']
GRID_KEYS = ['base', 'grid', 'registered']


class ConfigError(ValueError):
    pass


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError('configuration file %s does not exist' % path) from None
    except json.JSONDecodeError as e:
        raise ConfigError('%s is not valid JSON: %s' % (path, e)) from None


def _check_keys(values, allowed, where):
    if not isinstance(values, dict):
        raise ConfigError('%s must be a JSON object' % where)
    for key in values:
        if key not in allowed:
            raise ConfigError('unknown key %r in %s' % (key, where))


def make_config(values, profile='desk', where='configuration'):
    """TrainConfig from a dict of keys, filling omitted keys from the profile.

    Raises:
        ConfigError: on unknown, missing or invalid keys.
    """
    _check_keys(values, CONFIG_KEYS, where)
    merged = dict(get_profile(profile).train_defaults(), **values)
    for key in REQUIRED_KEYS:
        if key not in merged:
            raise ConfigError('missing key %r in %s' % (key, where))
    if merged['decoder'] == 'pml' and merged.get('lamb') is None:
        raise ConfigError("missing key 'lamb' in %s (required for the pml decoder)" % where)

    try:
        return TrainConfig(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigError('invalid %s: %s' % (where, e)) from None


def load_run_config(path, profile='desk', **overrides):
    """Read a run configuration; overrides (e.g. seed from the command line) take precedence."""
    values = _read_json(path)
    _check_keys(values, CONFIG_KEYS, str(path))
    values.update({key: value for key, value in overrides.items() if value is not None})
    return make_config(values, profile, str(path))


def grid_entries(spec, where='grid'):
    """Expand a parsed grid file into a list of dicts of TrainConfig keys."""
    _check_keys(spec, GRID_KEYS, where)
    base = spec.get('base', {})
    _check_keys(base, CONFIG_KEYS, '%s base' % where)

    grid = spec.get('grid', {})
    _check_keys(grid, CONFIG_KEYS, '%s grid' % where)
    try:
        combinations = expand_grid(grid) if grid else [{}]
    except ValueError as e:
        raise ConfigError('%s: %s' % (where, e)) from None

    registered = spec.get('registered')
    if registered is None:
        prefixes = [{}]
    else:
        if isinstance(registered, str): registered = dict(name=registered)
        _check_keys(registered, ['name', 'operating_points'], '%s registered' % where)
        try:
            prefixes = registered_grid(registered['name'], registered.get('operating_points'))
        except (KeyError, ValueError) as e:
            raise ConfigError('%s: bad registered grid: %s' % (where, e)) from None

    return [{**base, **prefix, **combination} for prefix in prefixes for combination in combinations]


def load_grid(path, profile='desk'):
    """List of TrainConfig a grid file expands to, in enumeration order."""
    entries = grid_entries(_read_json(path), str(path))
    if len(entries) == 0:
        raise ConfigError('%s expands to no runs' % path)
    return [make_config(entry, profile, '%s entry %d' % (path, i)) for i, entry in enumerate(entries)]
