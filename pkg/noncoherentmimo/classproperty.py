#!/usr/bin/env python3

class classproperty:
    """Read-only attribute computed from the class, reachable from the class and its
    instances alike (e.g. the family tag of a network type)."""

    def __init__(self, fget):
        self.fget = fget
        self.__doc__ = fget.__doc__

    def __get__(self, instance, owner=None):
        if owner is None: owner = type(instance)
        return self.fget(owner)
