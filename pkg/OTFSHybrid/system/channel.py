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
Channel - :mod:`OTFSHybrid.system.channel`
==========================================

This module provides random integer delay-Doppler channels and applies them
either directly in the :ref:`delay-Doppler domain <ddchannel>` or as a
multiplicative time-frequency channel.

.. _ddchannel:

Delay-Doppler input-output relation
-----------------------------------

With integer delay and Doppler indices and ideal pulses the received grid is

.. math::

    y[k,l] = \\sum_{i=1}^{P} h_i e^{-j2\\pi l_\\nu^{(i)} l_\\tau^{(i)}/(NM)}
    x[[k - l_\\nu^{(i)}]_N, [l - l_\\tau^{(i)}]_M] + \\eta[k,l]

The phase factor is folded into the *effective gain* of each path.

.. autoclass:: ChannelPath
    :members:

.. autoclass:: ChannelRealization
    :members:

.. autoclass:: NoiseModel
    :members:

.. currentmodule:: OTFSHybrid.system.channel

.. autofunction:: pdp_variances
.. autofunction:: draw_channel
.. autofunction:: dd_forward
.. autofunction:: apply_dd
.. autofunction:: apply_tf

"""

import numpy as np

from OTFSHybrid.system.otfs_transform import DDFrame, TFFrame, isfft, sfft
from OTFSHybrid.utility.utils import ConfigurationError, InputShapeError


__all__ = [
    "ChannelPath",
    "ChannelRealization",
    "NoiseModel",
    "pdp_variances",
    "draw_channel",
    "dd_forward",
    "apply_dd",
    "apply_tf",
]


class ChannelPath(object):
    """
    One propagation path

    :param gain: complex path gain h_i
    :param delay_idx: integer delay index
    :param doppler_idx: integer Doppler index
    """

    def __init__(self, gain, delay_idx, doppler_idx):
        if int(delay_idx) != delay_idx or int(doppler_idx) != doppler_idx:
            raise ConfigurationError("delay and Doppler indices must be integers")
        self.gain = complex(gain)
        self.delay_idx = int(delay_idx)
        self.doppler_idx = int(doppler_idx)

    def phase(self, n_doppler, m_delay):
        """
        :math:`e^{-j2\\pi \\nu_i \\tau_i}` on the integer grid
        """
        return np.exp(-2j * np.pi * self.doppler_idx * self.delay_idx / (n_doppler * m_delay))

    def __repr__(self):
        return "ChannelPath(gain=%r, delay=%d, doppler=%d)" % (
            self.gain, self.delay_idx, self.doppler_idx
        )


class ChannelRealization(object):
    """
    P-path channel drawn for an N x M frame

    :param paths: list of ChannelPath
    :param n_doppler: N
    :param m_delay: M
    """

    def __init__(self, paths, n_doppler, m_delay):
        self.paths = list(paths)
        self.n_doppler = int(n_doppler)
        self.m_delay = int(m_delay)
        self.check_valid()

    def check_valid(self):
        if len(self.paths) < 1:
            raise ConfigurationError("a channel needs at least one path")
        pairs = set()
        for p in self.paths:
            if not 0 <= p.delay_idx <= self.m_delay - 1:
                raise ConfigurationError("delay index %d outside [0, %d]" % (p.delay_idx, self.m_delay - 1))
            if abs(p.doppler_idx) > self.n_doppler - 1:
                raise ConfigurationError(
                    "Doppler index %d outside [-%d, %d]"
                    % (p.doppler_idx, self.n_doppler - 1, self.n_doppler - 1)
                )
            pairs.add((p.delay_idx, p.doppler_idx))
        if len(pairs) != len(self.paths):
            raise ConfigurationError("(delay, Doppler) pairs must be pairwise distinct")

    @property
    def n_paths(self):
        return len(self.paths)

    @property
    def gains(self):
        return np.array([p.gain for p in self.paths])

    @property
    def delays(self):
        return np.array([p.delay_idx for p in self.paths], dtype=int)

    @property
    def dopplers(self):
        return np.array([p.doppler_idx for p in self.paths], dtype=int)

    @property
    def effective_gains(self):
        """
        :math:`g_i = h_i e^{-j2\\pi l_\\nu^{(i)} l_\\tau^{(i)}/(NM)}`
        """
        return np.array([p.gain * p.phase(self.n_doppler, self.m_delay) for p in self.paths])

    def check_frame(self, frame):
        if frame.shape != (self.n_doppler, self.m_delay):
            raise InputShapeError(
                "frame of shape %s does not match a channel drawn for %d x %d"
                % (frame.shape, self.n_doppler, self.m_delay)
            )

    def tf_response(self):
        """
        Multiplicative time-frequency channel
        :math:`H[n,m] = \\sum_i g_i e^{-j2\\pi m l_\\tau^{(i)}/M} e^{j2\\pi n l_\\nu^{(i)}/N}`

        :return: N x M complex array
        """
        n = np.arange(self.n_doppler)[:, None]
        m = np.arange(self.m_delay)[None, :]
        response = np.zeros((self.n_doppler, self.m_delay), dtype=complex)
        for g, p in zip(self.effective_gains, self.paths):
            response += (
                g
                * np.exp(-2j * np.pi * m * p.delay_idx / self.m_delay)
                * np.exp(2j * np.pi * n * p.doppler_idx / self.n_doppler)
            )
        return response

    def to_dict(self):
        return {
            "n_doppler": self.n_doppler,
            "m_delay": self.m_delay,
            "paths": [
                {
                    "gain": [p.gain.real, p.gain.imag],
                    "delay_idx": p.delay_idx,
                    "doppler_idx": p.doppler_idx,
                }
                for p in self.paths
            ],
        }


class NoiseModel(object):
    """
    Circularly-symmetric complex Gaussian noise of total variance n0
    """

    def __init__(self, n0):
        if not n0 > 0:
            raise ConfigurationError("noise level n0 must be > 0, got %r" % (n0,))
        self.n0 = float(n0)

    @classmethod
    def from_snr_db(cls, snr_db):
        """Es/N0 in dB with unit symbol energy"""
        return cls(10.0 ** (-snr_db / 10.0))

    def sample(self, shape, rng):
        scale = np.sqrt(self.n0 / 2.0)
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def pdp_variances(delay_indices):
    """
    Exponential power-delay profile normalised to unit total power

    .. math::

        \\hat\\sigma_i^2 = \\dfrac{e^{-l_\\tau^{(i)}/10}}{\\sum_k e^{-l_\\tau^{(k)}/10}}

    :param delay_indices: nonempty list of delay indices
    :return: numpy array of variances summing to one
    """
    delays = np.asarray(delay_indices, dtype=float)
    if delays.size == 0:
        raise InputShapeError("at least one delay index is required")
    weights = np.exp(-delays / 10.0)
    return weights / np.sum(weights)


def draw_channel(p, l_max, k_max, n, m, rng):
    """
    Random P-path channel: uniform integer delays on [0, l_max] and Dopplers on
    [-k_max, k_max], redrawn until all cyclic shifts are distinct, with
    Rayleigh gains following :func:`pdp_variances`

    :param p: number of paths
    :param l_max: maximum delay index (< m)
    :param k_max: maximum Doppler index (< n)
    :param n: number of Doppler bins N
    :param m: number of delay bins M
    :param rng: numpy Generator
    :return: ChannelRealization
    """
    if p < 1:
        raise ConfigurationError("number of paths must be >= 1, got %d" % p)
    if not 0 <= l_max < m:
        raise ConfigurationError("lmax must satisfy 0 <= lmax < M (%d), got %d" % (m, l_max))
    if not 0 <= k_max < n:
        raise ConfigurationError("kmax must satisfy 0 <= kmax < N (%d), got %d" % (n, k_max))
    capacity = (l_max + 1) * min(2 * k_max + 1, n)
    if p > capacity:
        raise ConfigurationError(
            "%d paths exceed the %d distinct (delay, Doppler) shifts available" % (p, capacity)
        )
    while True:
        delays = rng.integers(0, l_max + 1, size=p)
        dopplers = rng.integers(-k_max, k_max + 1, size=p)
        # pairs that coincide modulo the grid would alias onto one tap
        shifts = set(zip(delays.tolist(), (dopplers % n).tolist()))
        if len(shifts) == p:
            break
    variances = pdp_variances(delays)
    gains = np.sqrt(variances / 2.0) * (rng.standard_normal(p) + 1j * rng.standard_normal(p))
    paths = [ChannelPath(g, d, k) for g, d, k in zip(gains, delays, dopplers)]
    return ChannelRealization(paths, n, m)


def dd_forward(values, ch):
    """
    Noiseless delay-Doppler channel on the last two axes of ``values``
    (a batch of N x M grids is allowed)

    :return: array of the same shape
    """
    values = np.asarray(values, dtype=complex)
    out = np.zeros_like(values)
    for g, p in zip(ch.effective_gains, ch.paths):
        out += g * np.roll(values, (p.doppler_idx, p.delay_idx), axis=(-2, -1))
    return out


def apply_dd(x, ch, noise=None, rng=None):
    """
    Channel and noise applied in the delay-Doppler domain

    :param x: transmitted DDFrame
    :param ch: ChannelRealization
    :param noise: NoiseModel or None for a noiseless output
    :param rng: numpy Generator, required when noise is given
    :return: received DDFrame
    """
    ch.check_frame(x)
    y = dd_forward(x.values, ch)
    if noise is not None:
        y = y + noise.sample(y.shape, rng)
    return DDFrame(y)


def apply_tf(x, ch, noise=None, rng=None):
    """
    Same channel applied as a multiplicative time-frequency response between
    ISFFT and SFFT, noise added in the time-frequency domain

    :return: received DDFrame
    """
    ch.check_frame(x)
    tf = isfft(x).values * ch.tf_response()
    if noise is not None:
        tf = tf + noise.sample(tf.shape, rng)
    return sfft(TFFrame(tf))
