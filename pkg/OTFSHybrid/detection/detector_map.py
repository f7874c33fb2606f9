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
Symbol-wise MAP detection - :mod:`OTFSHybrid.detection.detector_map`
====================================================================

This module provides the :ref:`symbol-wise MAP <symbolmap>` message-passing
detector on the delay-Doppler factor graph.

.. _symbolmap:

Factor graph and messages
-------------------------

Every transmitted symbol :math:`x[k,l]` is observed by the P received
samples :math:`y[[k+l_\\nu^{(i)}]_N, [l+l_\\tau^{(i)}]_M]`. The observation
of path i also contains the P-1 interferers
:math:`x[[k+l_\\nu^{(i)}-l_\\nu^{(j)}]_N, [l+l_\\tau^{(i)}-l_\\tau^{(j)}]_M]`,
j != i. Each function node returns

.. math::

    \\Pr\\{x[k,l] | y_i\\} \\propto \\sum_{\\mathbb{X}^{(i)}_{k,l}}
    e^{-|y_i - \\sum_{j\\neq i} g_j x_j - g_i x[k,l]|^2 / N_0}
    \\prod_{j \\neq i} \\Pr\\{x_j | \\mathbf{Y}_{\\notin y_i}\\}

and the posterior is the prior times the product of the P function-node
messages. All function nodes are updated from the previous iteration's
variable messages (flooding), then all variable messages are refreshed.

.. autoclass:: NeighborIndex
    :members:

.. autoclass:: MessageState
    :members:

.. autoclass:: DetectorConfig
    :members:

.. autoclass:: SymbolWiseMAPDetector
    :members:

.. currentmodule:: OTFSHybrid.detection.detector_map

.. autofunction:: build_neighbor_index
.. autofunction:: likelihood_full
.. autofunction:: extrinsic_product
.. autofunction:: detect_map

"""

import itertools

import numpy as np

from OTFSHybrid.system.otfs_transform import DDFrame
from OTFSHybrid.utility.utils import (
    CacheFunctionOutput,
    ConfigurationError,
    InputShapeError,
    PROBABILITY_FLOOR,
    floor_probabilities,
    normalise_log_probabilities,
)


__all__ = [
    "NeighborIndex",
    "MessageState",
    "DetectorConfig",
    "SymbolWiseMAPDetector",
    "build_neighbor_index",
    "likelihood_full",
    "extrinsic_product",
    "detect_map",
]

MOMENT_SOURCES = ("extrinsic", "posterior")


class NeighborIndex(object):
    """
    Neighbourhood sets of the factor graph for one channel realisation.
    Paths are indexed from 0. Positions are affine in (k, l), so the index
    only stores per-path shifts and serves whole-grid gathers with np.roll.

    :param ch: ChannelRealization
    :param n: number of Doppler bins N
    :param m: number of delay bins M
    """

    def __init__(self, ch, n, m):
        if (n, m) != (ch.n_doppler, ch.m_delay):
            raise InputShapeError(
                "channel drawn for %d x %d used on a %d x %d grid"
                % (ch.n_doppler, ch.m_delay, n, m)
            )
        self.n = n
        self.m = m
        self.n_paths = ch.n_paths
        self.dopplers = ch.dopplers
        self.delays = ch.delays
        self.gains = ch.effective_gains

    def shift(self, i):
        return int(self.dopplers[i]), int(self.delays[i])

    @CacheFunctionOutput
    def relative_shift(self, i, j):
        """Offset of the j-th interferer of an observation of path i"""
        return (
            int(self.dopplers[i] - self.dopplers[j]),
            int(self.delays[i] - self.delays[j]),
        )

    def interferer_slots(self, i):
        """Paths j != i, in original order"""
        return [j for j in range(self.n_paths) if j != i]

    def obs_pos(self, k, l, i):
        """Position of the i-th received sample depending on x[k, l]"""
        dk, dl = self.shift(i)
        return (k + dk) % self.n, (l + dl) % self.m

    def interferer_pos(self, k, l, i, j):
        """Position of the symbol reaching obs_pos(k, l, i) through path j"""
        if i == j:
            raise ValueError("a symbol does not interfere with itself")
        dk, dl = self.relative_shift(i, j)
        return (k + dk) % self.n, (l + dl) % self.m

    def gain_list(self, i):
        """
        Effective gain of path i and the gains of its interferers

        :return: (g_i, array of g_j for j != i)
        """
        return self.gains[i], self.gains[self.interferer_slots(i)]

    def observations(self, y, i):
        """Grid whose (k, l) entry is y at obs_pos(k, l, i)"""
        dk, dl = self.shift(i)
        return np.roll(y, (-dk, -dl), axis=(0, 1))

    def gather(self, values, i, j):
        """Grid (leading two axes) whose (k, l) entry is values at interferer_pos(k, l, i, j)"""
        dk, dl = self.relative_shift(i, j)
        return np.roll(values, (-dk, -dl), axis=(0, 1))


def build_neighbor_index(ch, n, m):
    """
    :return: NeighborIndex of the channel on an n x m grid
    """
    return NeighborIndex(ch, n, m)


class MessageState(object):
    """
    Messages of the factor graph, all probability vectors over the
    constellation along the last axis

    * v2f - shape (P, N, M, Q), variable to function node (extrinsic)
    * f2v - shape (P, N, M, Q), function to variable node
    * posterior - shape (N, M, Q)
    """

    def __init__(self, prior, n_paths, n, m, floor=PROBABILITY_FLOOR):
        prior = floor_probabilities(prior, floor)
        n_symbols = prior.size
        self.floor = floor
        self.v2f = np.broadcast_to(prior, (n_paths, n, m, n_symbols)).copy()
        self.f2v = np.full((n_paths, n, m, n_symbols), 1.0 / n_symbols)
        self.posterior = np.broadcast_to(prior, (n, m, n_symbols)).copy()

    def check_valid(self, atol=1e-9):
        """
        True when every stored vector sums to one and respects the floor
        """
        for messages in (self.v2f, self.f2v, self.posterior):
            if not np.allclose(np.sum(messages, axis=-1), 1.0, rtol=0, atol=atol):
                return False
            if np.any(messages < self.floor * (1 - 1e-9)):
                return False
        return True


class DetectorConfig(object):
    """
    Iteration settings shared by the message-passing detectors

    :param max_iters: maximum number of iterations I_max
    :param damping: damping factor in (0, 1] applied to function-node messages
    :param l_map: number of interferers handled by enumeration (hybrid only)
    :param early_stop: stop when hard decisions no longer change
    :param dict_args: optional ``floor``, ``weighted_variance`` (bool) and
        ``moments_source`` ("extrinsic" or "posterior")
    """

    def __init__(self, max_iters=10, damping=1.0, l_map=None, early_stop=False, dict_args=None):
        self.max_iters = max_iters
        self.damping = damping
        self.l_map = l_map
        self.early_stop = bool(early_stop)
        self.dict_args = dict(dict_args) if dict_args else {}
        self.floor = self.dict_args.get("floor", PROBABILITY_FLOOR)
        self.weighted_variance = self.dict_args.get("weighted_variance", True)
        self.moments_source = self.dict_args.get("moments_source", "extrinsic")
        self.check_valid()

    def check_valid(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigurationError("max_iters must be an integer >= 1, got %r" % (self.max_iters,))
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must be in (0, 1], got %r" % (self.damping,))
        if self.l_map is not None and (int(self.l_map) != self.l_map or self.l_map < 0):
            raise ConfigurationError("L must be an integer >= 0, got %r" % (self.l_map,))
        if self.moments_source not in MOMENT_SOURCES:
            raise ConfigurationError(
                "moments_source must be one of %s, got %r" % (MOMENT_SOURCES, self.moments_source)
            )
        if not 0 <= self.floor < 1e-3:
            raise ConfigurationError("probability floor must be in [0, 1e-3), got %r" % (self.floor,))

    @classmethod
    def for_detector(cls, detector, max_iters=10, damping=None, l_map=None, early_stop=False, dict_args=None):
        """
        Resolves the per-detector defaults: damping 1.0 except 0.7 for "mp",
        which is the hybrid detector with L = 0
        """
        if detector == "mp":
            if l_map not in (None, 0):
                raise ConfigurationError("mp is the hybrid detector with L=0, got L=%r" % (l_map,))
            l_map = 0
            if damping is None:
                damping = 0.7
        elif detector == "hybrid" and l_map is None:
            raise ConfigurationError("hybrid requires --L")
        if damping is None:
            damping = 1.0
        return cls(max_iters=max_iters, damping=damping, l_map=l_map,
                   early_stop=early_stop, dict_args=dict_args)

    def to_dict(self):
        return {
            "max_iters": self.max_iters,
            "damping": self.damping,
            "l_map": self.l_map,
            "early_stop": self.early_stop,
            "floor": self.floor,
            "weighted_variance": self.weighted_variance,
            "moments_source": self.moments_source,
        }


def _log_likelihood(residual, variance):
    return -np.abs(residual) ** 2 / variance


def likelihood_full(y_obs, hypothesis, interferer_values, interferer_gains, path_gain, n0):
    """
    Function-node likelihood of one observation without the constant
    :math:`1/\\sqrt{\\pi N_0}` prefactor

    .. math::

        e^{-|y - \\sum_j g_j x_j - g_i x|^2 / N_0}

    :param y_obs: received sample
    :param hypothesis: candidate value of x[k, l]
    :param interferer_values: values of the interfering symbols (last axis)
    :param interferer_gains: effective gains of the interferers
    :param path_gain: effective gain g_i of the observing path
    :param n0: noise level
    :return: likelihood in [0, 1]
    """
    if not n0 > 0:
        raise ConfigurationError("n0 must be > 0, got %r" % (n0,))
    interference = np.sum(
        np.asarray(interferer_gains, dtype=complex) * np.asarray(interferer_values, dtype=complex),
        axis=-1,
    )
    residual = y_obs - interference - path_gain * hypothesis
    return np.exp(_log_likelihood(residual, n0))


def extrinsic_product(messages, prior, floor=PROBABILITY_FLOOR):
    """
    Normalised product of messages and prior, computed in the log domain

    :param messages: array of shape (J, ..., Q); J may be zero
    :param prior: probability vector of size Q
    :param floor: probability floor of the result
    :return: probabilities of shape (..., Q)
    """
    messages = np.asarray(messages, dtype=float)
    with np.errstate(divide="ignore"):
        log_total = np.log(np.asarray(prior, dtype=float)) + np.sum(np.log(messages), axis=0)
    return normalise_log_probabilities(log_total, floor)


class SymbolWiseMAPDetector(object):
    """
    Message-passing detector enumerating all :math:`|\\mathbb{A}|^{P-1}`
    interferer combinations at every function node.

    After :meth:`detect`, ``likelihood_evals`` holds the number of likelihood
    evaluations, ``iterations_run`` the iterations performed and ``state``
    the final MessageState.

    :param constellation: Constellation (its priors are the a priori probabilities)
    :param config: DetectorConfig
    """

    def __init__(self, constellation, config=None):
        self.constellation = constellation
        self.config = config if config is not None else DetectorConfig()
        self.likelihood_evals = 0
        self.iterations_run = 0
        self.state = None
        self.decision_indices = None

    def partitions(self, index):
        """
        Enumerated and cancelled interferer slots for every path:
        all interferers are enumerated

        :return: list of (map_slots, pic_slots), one per path
        """
        return [(index.interferer_slots(i), []) for i in range(index.n_paths)]

    def interference_moments(self, index, state, i, pic_slots):
        """
        Soft interference cancelled at the observations of path i

        :return: (mean offset, aggregate variance) as N x M grids
        """
        shape = (index.n, index.m)
        return np.zeros(shape, dtype=complex), np.zeros(shape)

    def function_node_update(self, y, index, state, i, map_slots, pic_slots, n0):
        """
        Function-to-variable messages of path i for the whole grid

        :return: array (N, M, Q) of probabilities before damping
        """
        points = self.constellation.points
        n_symbols = points.size
        gains = index.gains
        offset, sigma2 = self.interference_moments(index, state, i, pic_slots)
        residual_base = index.observations(y, i) - offset
        variance = (n0 + sigma2)[..., None]
        hypothesis_term = gains[i] * points
        log_msgs = [np.log(index.gather(state.v2f[j], i, j)) for j in map_slots]
        acc = np.full(residual_base.shape + (n_symbols,), -np.inf)
        for combo in itertools.product(range(n_symbols), repeat=len(map_slots)):
            residual = residual_base
            log_weight = np.zeros(residual_base.shape)
            for slot, (j, s) in enumerate(zip(map_slots, combo)):
                residual = residual - gains[j] * points[s]
                log_weight = log_weight + log_msgs[slot][..., s]
            log_lik = _log_likelihood(residual[..., None] - hypothesis_term, variance)
            acc = np.logaddexp(acc, log_lik + log_weight[..., None])
            self.likelihood_evals += residual_base.size * n_symbols
        return normalise_log_probabilities(acc, self.config.floor)

    def detect(self, y, ch, n0):
        """
        Runs the iterations and returns the posteriors and hard decisions

        :param y: received DDFrame
        :param ch: ChannelRealization (perfect CSI)
        :param n0: noise level used by the likelihoods
        :return: (posteriors of shape (N, M, Q), DDFrame of decided symbols)
        """
        if not n0 > 0:
            raise ConfigurationError("n0 must be > 0, got %r" % (n0,))
        ch.check_frame(y)
        cfg = self.config
        n, m = y.shape
        index = build_neighbor_index(ch, n, m)
        prior = self.constellation.priors
        state = MessageState(prior, index.n_paths, n, m, cfg.floor)
        partitions = self.partitions(index)
        self.likelihood_evals = 0
        decisions = None
        for iteration in range(cfg.max_iters):
            f2v = np.empty_like(state.f2v)
            for i, (map_slots, pic_slots) in enumerate(partitions):
                computed = self.function_node_update(y.values, index, state, i, map_slots, pic_slots, n0)
                f2v[i] = cfg.damping * computed + (1.0 - cfg.damping) * state.f2v[i]
            state.f2v = f2v
            for i in range(index.n_paths):
                state.v2f[i] = extrinsic_product(np.delete(f2v, i, axis=0), prior, cfg.floor)
            state.posterior = extrinsic_product(f2v, prior, cfg.floor)
            new_decisions = np.argmax(state.posterior, axis=-1)
            self.iterations_run = iteration + 1
            converged = decisions is not None and np.array_equal(new_decisions, decisions)
            decisions = new_decisions
            if cfg.early_stop and converged:
                break
        self.state = state
        self.decision_indices = decisions
        return state.posterior, DDFrame(self.constellation.points[decisions])


def detect_map(y, ch, c, n0, cfg=None):
    """
    Symbol-wise MAP detection, see :class:`SymbolWiseMAPDetector`

    :return: (posteriors, hard decisions DDFrame)
    """
    return SymbolWiseMAPDetector(c, cfg).detect(y, ch, n0)
