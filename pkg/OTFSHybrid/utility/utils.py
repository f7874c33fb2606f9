"""
Utility functions - :mod:`OTFSHybrid.utility.utils`
===================================================

This module provides the helpers shared by the transforms, the detectors and
the simulation :ref:`processes <processes>`: log-domain probability
handling, reproducible random streams and configuration hashing.

.. _helpers:

Caching
-------

.. autoclass:: CacheFunctionOutput
    :members:

Exceptions
----------

.. autoclass:: ConfigurationError
.. autoclass:: InputShapeError
.. autoclass:: OracleSizeError

Defining utility functions
--------------------------

.. currentmodule:: OTFSHybrid.utility.utils

.. autofunction:: normalise_log_probabilities
.. autofunction:: floor_probabilities
.. autofunction:: one_hot_encode
.. autofunction:: total_variation
.. autofunction:: child_rng
.. autofunction:: content_hash
.. autofunction:: resolve_threads

"""
import hashlib
import json
import os
from functools import partial

import numpy as np
from scipy.special import logsumexp


__all__ = [
    "CacheFunctionOutput",
    "ConfigurationError",
    "InputShapeError",
    "OracleSizeError",
    "PROBABILITY_FLOOR",
    "normalise_log_probabilities",
    "floor_probabilities",
    "one_hot_encode",
    "total_variation",
    "child_rng",
    "content_hash",
    "resolve_threads",
]

PROBABILITY_FLOOR = 1e-12


class ConfigurationError(ValueError):
    """Invalid simulation, detector or channel parameters"""


class InputShapeError(ValueError):
    """Array or bit sequence with an unusable shape"""


class OracleSizeError(ValueError):
    """Exhaustive enumeration requested beyond the size guard"""


class CacheFunctionOutput(object):
    """
    this provides a decorator to cache method outputs per instance,
    used for the shift tables of the neighbourhood index
    """

    def __init__(self, func):
        self.func = func

    def __get__(self, obj, _=None):
        if obj is None:
            return self
        return partial(self, obj)

    def __call__(self, *args, **kw):
        obj = args[0]
        try:
            cache = obj.__cache
        except AttributeError:
            cache = obj.__cache = {}
        key = (self.func, args[1:], frozenset(kw.items()))
        try:
            value = cache[key]
        except KeyError:
            value = cache[key] = self.func(*args, **kw)
        return value


def floor_probabilities(prob, floor=PROBABILITY_FLOOR):
    """
    Mixes normalised probability vectors (last axis) with a uniform floor so
    that no entry is below ``floor`` while the sum stays one

    .. math::

        p \\leftarrow (1 - Q f) p + f

    :param prob: array whose last axis is a probability vector of size Q
    :param floor: minimum entry value
    :return: floored probabilities
    """
    prob = np.asarray(prob, dtype=float)
    n_symbols = prob.shape[-1]
    return (1.0 - n_symbols * floor) * prob + floor


def normalise_log_probabilities(log_prob, floor=PROBABILITY_FLOOR):
    """
    Turns unnormalised log-probabilities (last axis) into floored probability
    vectors

    :param log_prob: array of log-domain weights, -inf allowed
    :param floor: probability floor, see :func:`floor_probabilities`
    :return: probabilities summing to one along the last axis
    """
    log_prob = np.asarray(log_prob, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_norm = logsumexp(log_prob, axis=-1, keepdims=True)
        prob = np.exp(log_prob - log_norm)
    # rows without any support fall back to uniform
    empty = ~np.isfinite(log_norm[..., 0])
    prob[empty] = 1.0 / log_prob.shape[-1]
    return floor_probabilities(prob, floor)


def one_hot_encode(indices, n_classes):
    """One-hot encodes an integer array along a new last axis
    """
    return np.eye(n_classes)[np.asarray(indices, dtype=int)]


def total_variation(prob_a, prob_b):
    """
    Total-variation distance between probability vectors along the last axis

    :return: array of distances, one per leading index
    """
    return 0.5 * np.sum(np.abs(np.asarray(prob_a) - np.asarray(prob_b)), axis=-1)


def child_rng(seed, *keys):
    """
    Counter-based child random stream keyed by ``(seed, *keys)``

    The stream only depends on the seed and the keys, never on the order in
    which streams are requested, so workers can draw frames independently.

    :param seed: 64-bit root seed
    :param keys: non-negative integers (e.g. SNR index, frame index)
    :return: numpy Generator backed by Philox
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def content_hash(dict_content):
    """
    Git-style blob hash of the canonical JSON encoding of a dictionary

    :return: hexadecimal sha1 digest
    """
    payload = json.dumps(dict_content, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = ("blob %d\0" % len(payload)).encode("utf-8")
    return hashlib.sha1(header + payload).hexdigest()


def resolve_threads(requested=None):
    """
    Number of worker threads: explicit request, else ``OTFS_THREADS``
    (0 meaning one worker per CPU)
    """
    if requested is None:
        requested = int(os.environ.get("OTFS_THREADS", "0") or 0)
    if requested < 0:
        raise ConfigurationError("worker count must be >= 0, got %d" % requested)
    if requested == 0:
        return os.cpu_count() or 1
    return requested
