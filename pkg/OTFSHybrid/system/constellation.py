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
Constellation - :mod:`OTFSHybrid.system.constellation`
======================================================

This module provides the modulation alphabet used by every detector, with
its Gray bit labels and the symbol priors.

.. _constellation:

Defining a constellation
------------------------

.. autoclass:: Constellation
    :members:

.. currentmodule:: OTFSHybrid.system.constellation

.. autofunction:: make_qpsk
.. autofunction:: map_bits
.. autofunction:: demap_hard

"""

import numpy as np

from OTFSHybrid.utility.utils import ConfigurationError, InputShapeError


__all__ = [
    "Constellation",
    "make_qpsk",
    "map_bits",
    "demap_hard",
]

# Gray map, point index order
QPSK_LABELS = ["00", "01", "11", "10"]
QPSK_POINTS = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2)


class Constellation(object):
    """
    Immutable modulation alphabet

    :param points: complex points, unit average energy
    :param bit_labels: one bit string per point, all of length B
    :param priors: probability of each point (uniform if None)
    :param name: short name used in run manifests
    """

    def __init__(self, points, bit_labels, priors=None, name="custom"):
        points = np.asarray(points, dtype=complex)
        if priors is None:
            priors = np.full(points.size, 1.0 / points.size)
        priors = np.asarray(priors, dtype=float)
        self.name = name
        self.points = points
        self.bit_labels = tuple(bit_labels)
        self.priors = priors
        self.check_valid()
        self.points.setflags(write=False)
        self.priors.setflags(write=False)
        self.label_bits = np.array(
            [[int(b) for b in label] for label in self.bit_labels], dtype=np.uint8
        )
        self.label_bits.setflags(write=False)

    def check_valid(self):
        """
        Checks the alphabet invariants, raising ConfigurationError on failure
        """
        size = self.points.size
        if size < 2 or size & (size - 1):
            raise ConfigurationError("constellation size must be a power of two, got %d" % size)
        if len(self.bit_labels) != size:
            raise ConfigurationError("one bit label per point is required")
        bits = int(np.log2(size))
        if any(len(b) != bits or set(b) - {"0", "1"} for b in self.bit_labels):
            raise ConfigurationError("bit labels must be %d-bit strings" % bits)
        if len(set(self.bit_labels)) != size:
            raise ConfigurationError("bit labels must be pairwise distinct")
        if abs(np.mean(np.abs(self.points) ** 2) - 1.0) > 1e-12:
            raise ConfigurationError("constellation must have unit average energy")
        if self.priors.shape != (size,) or np.any(self.priors < 0):
            raise ConfigurationError("priors must be a nonnegative vector over points")
        if abs(np.sum(self.priors) - 1.0) > 1e-12:
            raise ConfigurationError("priors must sum to one")

    @property
    def size(self):
        return self.points.size

    @property
    def bits_per_symbol(self):
        return int(np.log2(self.points.size))

    def nearest_index(self, symbols):
        """
        Index of the nearest point for each symbol, ties to the lowest index

        :param symbols: complex array of any shape
        :return: integer array of the same shape
        """
        symbols = np.asarray(symbols, dtype=complex)
        dist = np.abs(symbols[..., None] - self.points) ** 2
        # argmin keeps the first minimum
        return np.argmin(dist, axis=-1)

    def bits_from_indices(self, indices):
        """Flattened bit array for an array of point indices"""
        return self.label_bits[np.asarray(indices, dtype=int).ravel()].ravel()


def make_qpsk(priors=None):
    """
    Unit-energy QPSK with the Gray labelling
    ``00 -> (1+j)``, ``01 -> (-1+j)``, ``11 -> (-1-j)``, ``10 -> (1-j)``
    (all divided by :math:`\\sqrt{2}`)

    :param priors: optional non-uniform prior over the four points
    :return: Constellation
    """
    return Constellation(QPSK_POINTS, QPSK_LABELS, priors=priors, name="qpsk")


def _as_bit_array(bits):
    if isinstance(bits, str):
        if set(bits) - {"0", "1"}:
            raise InputShapeError("bit strings may only contain 0 and 1")
        return np.array([int(b) for b in bits], dtype=np.uint8)
    bits = np.asarray(bits).ravel()
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise InputShapeError("bits must be 0 or 1")
    return bits.astype(np.uint8)


def map_bits(bits, constellation):
    """
    Maps consecutive B-bit groups to constellation points

    :param bits: bit string ("0011") or array of 0/1 values
    :param constellation: Constellation
    :return: complex array of len(bits) / B symbols
    """
    bits = _as_bit_array(bits)
    n_bits = constellation.bits_per_symbol
    if bits.size % n_bits:
        raise InputShapeError(
            "number of bits (%d) is not a multiple of %d" % (bits.size, n_bits)
        )
    groups = bits.reshape(-1, n_bits)
    weights = 1 << np.arange(n_bits - 1, -1, -1)
    label_values = constellation.label_bits.astype(int) @ weights
    lookup = np.empty(1 << n_bits, dtype=int)
    lookup[label_values] = np.arange(constellation.size)
    return constellation.points[lookup[groups.astype(int) @ weights]]


def demap_hard(symbols, constellation):
    """
    Nearest-point hard demapping, ties broken by the lowest point index

    :param symbols: complex array
    :param constellation: Constellation
    :return: uint8 bit array (B bits per symbol)
    """
    indices = constellation.nearest_index(np.asarray(symbols, dtype=complex).ravel())
    return constellation.bits_from_indices(indices)
