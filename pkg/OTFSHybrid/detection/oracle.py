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
Exact posterior oracle - :mod:`OTFSHybrid.detection.oracle`
===========================================================

This module provides the brute-force reference for the message-passing
detectors on tiny frames.

.. _oracle:

Exhaustive marginalisation
--------------------------

Every candidate frame :math:`\\mathbf{x} \\in \\mathbb{A}^{NM}` is scored with
the exact joint likelihood of the delay-Doppler model,

.. math::

    \\log \\Pr\\{\\mathbf{Y}|\\mathbf{x}\\} + \\log\\Pr\\{\\mathbf{x}\\} =
    -\\dfrac{\\|\\mathbf{Y} - \\mathcal{H}(\\mathbf{x})\\|^2}{N_0}
    - NM\\log(\\pi N_0) + \\sum_{k,l}\\log\\Pr\\{x[k,l]\\}

and the symbol marginals are accumulated with log-sum-exp. Candidates are
processed in chunks; the merge is a log-sum-exp as well, so the result does
not depend on the chunking. Frames with more than :math:`2^{20}` candidates
are refused.

.. autoclass:: OracleResult
    :members:

.. autoclass:: ExactPosteriorOracle
    :members:

.. currentmodule:: OTFSHybrid.detection.oracle

.. autofunction:: exact_marginals

"""

import numpy as np
from scipy.special import logsumexp

from OTFSHybrid.system.channel import dd_forward
from OTFSHybrid.system.otfs_transform import DDFrame
from OTFSHybrid.utility.utils import ConfigurationError, OracleSizeError


__all__ = [
    "MAX_ENUMERATION_BITS",
    "OracleResult",
    "ExactPosteriorOracle",
    "exact_marginals",
]

MAX_ENUMERATION_BITS = 20


class OracleResult(object):
    """
    :param marginals: array (N, M, Q) of exact posterior marginals
    :param map_frame: DDFrame of the jointly most likely frame
    :param log_evidence: log of the total probability of the observation
    """

    def __init__(self, marginals, map_frame, log_evidence):
        self.marginals = marginals
        self.map_frame = map_frame
        self.log_evidence = log_evidence


class ExactPosteriorOracle(object):
    """
    Exhaustive enumeration over all transmitted frames

    :param constellation: Constellation (priors included)
    :param dict_args: optional ``oracle_chunk``, candidate frames per chunk
    """

    def __init__(self, constellation, dict_args=None):
        self.constellation = constellation
        self.dict_args = dict(dict_args) if dict_args else {}
        self.chunk = int(self.dict_args.get("oracle_chunk", 1 << 14))
        if self.chunk < 1:
            raise ConfigurationError("oracle_chunk must be >= 1")
        self.frames_enumerated = 0

    def check_size(self, n, m):
        n_bits = n * m * self.constellation.bits_per_symbol
        if n_bits > MAX_ENUMERATION_BITS:
            raise OracleSizeError(
                "oracle needs N*M*log2|A| <= %d, got %d x %d x %d = %d"
                % (MAX_ENUMERATION_BITS, n, m, self.constellation.bits_per_symbol, n_bits)
            )

    def exact_marginals(self, y, ch, n0):
        """
        :param y: received DDFrame
        :param ch: ChannelRealization
        :param n0: noise level
        :return: OracleResult
        """
        if not n0 > 0:
            raise ConfigurationError("n0 must be > 0, got %r" % (n0,))
        ch.check_frame(y)
        n, m = y.shape
        self.check_size(n, m)
        points = self.constellation.points
        n_symbols = points.size
        n_pos = n * m
        total = n_symbols ** n_pos
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.constellation.priors)
        powers = n_symbols ** np.arange(n_pos)
        symbol_ids = np.arange(n_symbols)
        log_const = -n_pos * np.log(np.pi * n0)

        log_marg = np.full((n_pos, n_symbols), -np.inf)
        log_evidence = -np.inf
        best_ll = -np.inf
        best_frame = None
        self.frames_enumerated = 0
        for start in range(0, total, self.chunk):
            frame_ids = np.arange(start, min(start + self.chunk, total))
            # digit p of the frame id is the symbol at vector position p = l*N + k
            idx = (frame_ids[:, None] // powers) % n_symbols
            frames = points[idx].reshape(-1, m, n).transpose(0, 2, 1)
            residual = y.values - dd_forward(frames, ch)
            ll = (
                -np.sum(np.abs(residual) ** 2, axis=(1, 2)) / n0
                + log_const
                + np.sum(log_prior[idx], axis=1)
            )
            with np.errstate(divide="ignore", invalid="ignore"):
                log_evidence = np.logaddexp(log_evidence, logsumexp(ll))
                masked = np.where(idx[:, :, None] == symbol_ids, ll[:, None, None], -np.inf)
                log_marg = np.logaddexp(log_marg, logsumexp(masked, axis=0))
            best = int(np.argmax(ll))
            if ll[best] > best_ll:
                best_ll = ll[best]
                best_frame = frames[best]
            self.frames_enumerated += frame_ids.size

        marginals = np.exp(log_marg - log_evidence)
        marginals = marginals / np.sum(marginals, axis=-1, keepdims=True)
        marginals = marginals.reshape(m, n, n_symbols).transpose(1, 0, 2)
        return OracleResult(marginals, DDFrame(best_frame), float(log_evidence))


def exact_marginals(y, ch, c, n0, dict_args=None):
    """
    Exact symbol marginals by enumeration, see :class:`ExactPosteriorOracle`

    :return: OracleResult
    """
    return ExactPosteriorOracle(c, dict_args).exact_marginals(y, ch, n0)
