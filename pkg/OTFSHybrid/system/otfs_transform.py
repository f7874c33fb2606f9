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
OTFS transforms - :mod:`OTFSHybrid.system.otfs_transform`
=========================================================

This module provides the delay-Doppler and time-frequency grids and the
:ref:`symplectic transforms <symplectic>` between them.

.. _symplectic:

ISFFT and SFFT
--------------

The ISFFT maps the delay-Doppler grid :math:`x[k,l]` (Doppler row k, delay
column l) to the time-frequency grid

.. math::

    X[n,m] = \\dfrac{1}{\\sqrt{NM}} \\sum_{k=0}^{N-1}\\sum_{l=0}^{M-1}
    x[k,l] e^{j2\\pi(nk/N - ml/M)}

It is computed as an orthonormal inverse DFT along Doppler followed by an
orthonormal DFT along delay, so the transform is unitary and the SFFT is its
exact inverse.

.. autoclass:: DDFrame
    :members:

.. autoclass:: TFFrame
    :members:

.. currentmodule:: OTFSHybrid.system.otfs_transform

.. autofunction:: isfft
.. autofunction:: sfft

"""

import numpy as np
from scipy import fft

from OTFSHybrid.utility.utils import InputShapeError


__all__ = [
    "DDFrame",
    "TFFrame",
    "isfft",
    "sfft",
]


class _Grid(object):
    def __init__(self, values):
        values = np.array(values, dtype=complex)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InputShapeError("grid must be a non-empty 2D array, got shape %s" % (values.shape,))
        self.values = values

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return "%s(%d x %d)" % (type(self).__name__, self.shape[0], self.shape[1])


class DDFrame(_Grid):
    """
    N x M delay-Doppler grid, element (k, l) with k the Doppler index and l
    the delay index. Vectorisation is column-major: (k, l) sits at l*N + k.
    """

    @property
    def n_doppler(self):
        return self.values.shape[0]

    @property
    def m_delay(self):
        return self.values.shape[1]

    def vec(self):
        """Column-major vector of the grid"""
        return self.values.ravel(order="F")

    @classmethod
    def from_vector(cls, vector, n_doppler, m_delay):
        """Inverse of :meth:`vec`"""
        vector = np.asarray(vector)
        if vector.size != n_doppler * m_delay:
            raise InputShapeError(
                "vector of %d entries does not fill a %d x %d grid"
                % (vector.size, n_doppler, m_delay)
            )
        return cls(vector.reshape((n_doppler, m_delay), order="F"))

    def to_tf(self):
        return isfft(self)


class TFFrame(_Grid):
    """
    N x M time-frequency grid, element (n, m) with n the time slot and m the
    subcarrier
    """

    @property
    def n_slots(self):
        return self.values.shape[0]

    @property
    def m_subcarriers(self):
        return self.values.shape[1]

    def to_dd(self):
        return sfft(self)


def isfft(dd):
    """
    Inverse symplectic finite Fourier transform

    :param dd: DDFrame
    :return: TFFrame
    """
    tf = fft.fft(fft.ifft(dd.values, axis=0, norm="ortho"), axis=1, norm="ortho")
    return TFFrame(tf)


def sfft(tf):
    """
    Symplectic finite Fourier transform, exact inverse of :func:`isfft`

    :param tf: TFFrame
    :return: DDFrame
    """
    dd = fft.ifft(fft.fft(tf.values, axis=0, norm="ortho"), axis=1, norm="ortho")
    return DDFrame(dd)
