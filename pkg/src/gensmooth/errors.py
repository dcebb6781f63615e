"""Exception hierarchy. Every error carries a short machine-readable ``code``."""

from __future__ import annotations


class GensmoothError(Exception):
    code = "error"


class InputError(GensmoothError, ValueError):
    """Invalid arguments or a violated precondition."""

    code = "input"


class CapacityError(GensmoothError):
    """An exact (exhaustive) computation was asked to run beyond its cutoff."""

    code = "capacity"


class InstanceError(InputError):
    code = "instance"


class MalformedInstanceError(InstanceError):
    code = "malformed"


class NormalizationError(InstanceError):
    code = "normalization"


class MaskRangeError(InstanceError):
    code = "range"
