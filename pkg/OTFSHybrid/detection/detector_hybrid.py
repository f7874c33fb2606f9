# Copyright (c) OTFSHybrid developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#     http://www.apache.org/licenses/LICENSE-2.0
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Hybrid MAP and PIC detection - :mod:`OTFSHybrid.detection.detector_hybrid`
==========================================================================

This module provides the reduced-complexity :ref:`hybrid <hybrid>` detector.

.. _hybrid:

Partitioning and soft cancellation
----------------------------------

At the observation of path i the P-1 interferers are sorted by decreasing
power :math:`|g_j|^2`. The L strongest are enumerated exactly as in the
symbol-wise MAP detector, the remaining ones are treated as Gaussian with
the mean :math:`\\mu_j` and variance :math:`\\sigma_j^2` of their incoming
message:

.. math::

    e^{-|y_i - g_i x - \\sum_{j \\le L} g_j x_j - \\sum_{j > L} g_j \\mu_j|^2
    / (N_0 + \\sigma^2)}, \\qquad \\sigma^2 = \\sum_{j > L} |g_j|^2 \\sigma_j^2

With L = 0 this is the classical Gaussian-approximation message passing
detector, with L = P-1 the symbol-wise MAP detector.

.. autoclass:: Partition
    :members:

.. autoclass:: PicMoments
    :members:

.. autoclass:: HybridMAPPICDetector
    :members:

.. currentmodule:: OTFSHybrid.detection.detector_hybrid

.. autofunction:: partition_interferers
.. autofunction:: pic_moments
.. autofunction:: likelihood_pic
.. autofunction:: detect_hybrid

"""

import warnings

import numpy as np

from OTFSHybrid.detection.detector_map import (
    DetectorConfig,
    SymbolWiseMAPDetector,
    _log_likelihood,
)
from OTFSHybrid.utility.utils import ConfigurationError


__all__ = [
    "Partition",
    "PicMoments",
    "HybridMAPPICDetector",
    "partition_interferers",
    "pic_moments",
    "likelihood_pic",
    "detect_hybrid",
]


class Partition(object):
    """
    Split of the interferers of one observation

    :param map_set: enumerated slots, in ascending slot order
    :param pic_set: cancelled slots, in ascending slot order
    :param order: all slots by decreasing power
    :param l_requested: L asked for before clamping to the number of interferers
    """

    def __init__(self, map_set, pic_set, order, l_requested):
        self.map_set = list(map_set)
        self.pic_set = list(pic_set)
        self.order = list(order)
        self.l_requested = l_requested

    @property
    def clamped(self):
        return self.l_requested > len(self.order)

    def __repr__(self):
        return "Partition(map=%s, pic=%s)" % (self.map_set, self.pic_set)


def partition_interferers(gains, l_map, slots=None):
    """
    Puts the L strongest interferers in the MAP set and the rest in the PIC set.
    The sort is stable: equal powers keep the lower slot first.

    :param gains: complex gains of the interferers
    :param l_map: L >= 0, clamped to the number of interferers
    :param slots: identifiers of the interferers (path indices), default 0..len-1
    :return: Partition
    """
    if l_map < 0:
        raise ConfigurationError("L must be >= 0, got %r" % (l_map,))
    gains = np.asarray(gains, dtype=complex)
    if slots is None:
        slots = list(range(gains.size))
    power = np.abs(gains) ** 2
    ranked = sorted(range(gains.size), key=lambda s: (-power[s], s))
    n_map = min(l_map, gains.size)
    map_set = sorted(slots[s] for s in ranked[:n_map])
    pic_set = sorted(slots[s] for s in ranked[n_map:])
    return Partition(map_set, pic_set, [slots[s] for s in ranked], l_map)


def pic_moments(prob, c):
    """
    Mean and variance of a symbol distributed according to ``prob``

    :param prob: probabilities over the constellation (last axis)
    :param c: Constellation
    :return: (mean, variance), variance clipped at zero
    """
    prob = np.asarray(prob, dtype=float)
    mean = prob @ c.points
    second = prob @ (np.abs(c.points) ** 2)
    return mean, np.maximum(second - np.abs(mean) ** 2, 0.0)


class PicMoments(object):
    """
    Moments of the cancelled interferers of one path over the whole grid

    :param means: array (J, N, M) of symbol means, one per PIC slot
    :param variances: array (J, N, M) of symbol variances
    :param gains: effective gains of the J slots
    """

    def __init__(self, means, variances, gains):
        self.means = np.asarray(means, dtype=complex)
        self.variances = np.asarray(variances, dtype=float)
        self.gains = np.asarray(gains, dtype=complex)

    @classmethod
    def from_messages(cls, messages, gains, c):
        """
        :param messages: array (J, N, M, Q) of probabilities
        """
        mean, var = pic_moments(messages, c)
        return cls(mean, var, gains)

    def offset(self):
        """Mean interference :math:`\\sum_j g_j \\mu_j`"""
        return np.tensordot(self.gains, self.means, axes=(0, 0))

    def aggregate(self, weighted=True):
        """
        Residual interference variance, :math:`\\sum_j |g_j|^2 \\sigma_j^2`
        or the plain sum of the symbol variances
        """
        weights = np.abs(self.gains) ** 2 if weighted else np.ones(self.gains.size)
        return np.tensordot(weights, self.variances, axes=(0, 0))


def likelihood_pic(y_obs, hypothesis, map_values, map_gains, pic_means, pic_gains, path_gain, n0, sigma2):
    """
    Function-node likelihood with soft-cancelled interferers, without the
    hypothesis-independent prefactor

    :param y_obs: received sample
    :param hypothesis: candidate value of x[k, l]
    :param map_values: values of the enumerated interferers
    :param map_gains: their effective gains
    :param pic_means: means of the cancelled interferers
    :param pic_gains: their effective gains
    :param path_gain: effective gain of the observing path
    :param n0: noise level
    :param sigma2: aggregate residual interference variance
    :return: likelihood in [0, 1]
    """
    if not sigma2 >= 0:
        raise ConfigurationError("sigma2 must be >= 0, got %r" % (sigma2,))
    if not n0 + sigma2 > 0:
        raise ConfigurationError("n0 + sigma2 must be > 0")
    enumerated = np.sum(np.asarray(map_gains, dtype=complex) * np.asarray(map_values, dtype=complex), axis=-1)
    cancelled = np.sum(np.asarray(pic_gains, dtype=complex) * np.asarray(pic_means, dtype=complex), axis=-1)
    residual = y_obs - path_gain * hypothesis - enumerated - cancelled
    return np.exp(_log_likelihood(residual, n0 + sigma2))


class HybridMAPPICDetector(SymbolWiseMAPDetector):
    """
    Hybrid detector enumerating :math:`|\\mathbb{A}|^{L}` combinations per
    function node and cancelling the weaker interferers in parallel.
    ``config.l_map`` is required; values above P-1 are clamped with a warning.
    """

    def __init__(self, constellation, config):
        super(HybridMAPPICDetector, self).__init__(constellation, config)
        if self.config.l_map is None:
            raise ConfigurationError("hybrid requires --L")

    def partitions(self, index):
        result = []
        for i in range(index.n_paths):
            slots = index.interferer_slots(i)
            part = partition_interferers(index.gains[slots], self.config.l_map, slots)
            result.append((part.map_set, part.pic_set))
        if self.config.l_map > index.n_paths - 1:
            warnings.warn(
                "L=%d exceeds P-1=%d, using L=%d"
                % (self.config.l_map, index.n_paths - 1, index.n_paths - 1)
            )
        return result

    def interference_moments(self, index, state, i, pic_slots):
        if not pic_slots:
            return super(HybridMAPPICDetector, self).interference_moments(index, state, i, pic_slots)
        messages = []
        for j in pic_slots:
            source = state.posterior if self.config.moments_source == "posterior" else state.v2f[j]
            messages.append(index.gather(source, i, j))
        moments = PicMoments.from_messages(np.stack(messages), index.gains[pic_slots], self.constellation)
        return moments.offset(), moments.aggregate(self.config.weighted_variance)


def detect_hybrid(y, ch, c, n0, cfg):
    """
    Hybrid MAP and PIC detection, see :class:`HybridMAPPICDetector`

    :return: (posteriors, hard decisions DDFrame)
    """
    if cfg is None:
        cfg = DetectorConfig.for_detector("mp")
    return HybridMAPPICDetector(c, cfg).detect(y, ch, n0)
