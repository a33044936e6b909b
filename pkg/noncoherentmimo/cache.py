#!/usr/bin/env python3

import sys

# cloudpickle handles the dataclasses and network objects that make up a finished run.
import cloudpickle


class DiskCache:
    """Dictionary of finished results persisted to a single pickle file.

    Keys are arbitrary picklable objects (e.g. a TrainConfig) and are stored by their
    pickled bytes, so equal configurations hit the same entry across processes and
    sessions.
    """

    def __init__(self, path, verbose=False):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        self.verbose = verbose
        self.load()

    def load(self):
        try:
            with open(self.path, 'rb') as f:
                self.cache = cloudpickle.load(f)
        except FileNotFoundError:
            self.cache = {}

    def save(self):
        with open(self.path, 'wb') as f:
            f.write(cloudpickle.dumps(self.cache))

    @staticmethod
    def key(obj):
        return cloudpickle.dumps(obj)

    def __contains__(self, obj):
        return self.key(obj) in self.cache

    def __getitem__(self, obj):
        return self.cache[self.key(obj)]

    def __setitem__(self, obj, result):
        self.cache[self.key(obj)] = result
        self.save()
        if self.verbose:
            sys.stderr.write('caching result for %r\n' % (obj,))

    def __len__(self):
        return len(self.cache)
