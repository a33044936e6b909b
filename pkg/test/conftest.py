#!/usr/bin/env python3

import sys, os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest
from hypothesis import settings, HealthCheck

settings.register_profile('ci', max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile('fast', max_examples=10, deadline=None)
settings.load_profile(os.getenv('HYPOTHESIS_PROFILE', 'ci'))


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the desk-scale training acceptance tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: desk-scale run taking minutes (enable with --runslow)')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'): return
    skip = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)
