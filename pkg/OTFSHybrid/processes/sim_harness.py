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
Simulation harness - :mod:`OTFSHybrid.processes.sim_harness`
============================================================

This module provides the Monte-Carlo :ref:`simulation process <processes>`
measuring uncoded bit and symbol error rates over an SNR sweep.

.. _processes:

Running a sweep
---------------

For every SNR point, frames are generated until the error target and the
minimum frame count are both reached, or the frame budget is exhausted.
Every frame draws fresh bits, a fresh channel and fresh noise from its own
Philox stream keyed by ``(seed, snr_index, frame_index)``.

Frames are evaluated in batches of a fixed size, possibly on several worker
threads, and folded in frame order; the stop rule is checked after each
frame, so the outcome does not depend on the number of workers.

.. autoclass:: SimConfig
    :members:

.. autoclass:: SimResult
    :members:

.. autoclass:: SimulationProcess
    :members:

The available detectors are:

* map - symbol-wise MAP message passing
* hybrid - hybrid MAP and PIC with the given L
* mp - hybrid with L = 0 and damping 0.7
* oracle - exhaustive enumeration (tiny frames only)

.. currentmodule:: OTFSHybrid.processes.sim_harness

.. autofunction:: run_point
.. autofunction:: run_sweep

"""

import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from OTFSHybrid.detection.detector_hybrid import HybridMAPPICDetector
from OTFSHybrid.detection.detector_map import DetectorConfig, SymbolWiseMAPDetector
from OTFSHybrid.detection.oracle import MAX_ENUMERATION_BITS, ExactPosteriorOracle
from OTFSHybrid.system.channel import NoiseModel, apply_dd, draw_channel
from OTFSHybrid.system.constellation import map_bits, make_qpsk
from OTFSHybrid.system.otfs_transform import DDFrame
from OTFSHybrid.utility.utils import ConfigurationError, child_rng, resolve_threads


__all__ = [
    "SimConfig",
    "SimResult",
    "SimulationProcess",
    "run_point",
    "run_sweep",
    "COLUMNS",
]

DETECTORS = ["map", "hybrid", "mp", "oracle"]

MODULATIONS = {
    "qpsk": make_qpsk,
}

COLUMNS = [
    "snr_db",
    "frames",
    "bits",
    "bit_errors",
    "ber",
    "symbol_errors",
    "ser",
    "avg_iters",
    "wall_ms",
    "insufficient_errors",
]

BATCH_FRAMES = 16


class SimConfig(object):
    """
    Configuration of a Monte-Carlo run

    :param n: Doppler bins N
    :param m: delay bins M
    :param p: number of paths
    :param l_max: maximum delay index
    :param k_max: maximum Doppler index
    :param snr_db_list: Es/N0 points in dB (sorted and deduplicated)
    :param detector: one of map, hybrid, mp, oracle
    :param l_map: L for the hybrid detector
    :param iters: maximum detector iterations
    :param damping: damping factor, None for the detector default
    :param early_stop: stop iterating when decisions no longer change
    :param min_frames: minimum frames per point
    :param min_bit_errors: bit-error target per point
    :param max_frames: frame budget per point
    :param seed: root seed
    :param modulation: name of the constellation
    :param workers: worker threads, None to read ``OTFS_THREADS``
    :param count_ops: report likelihood evaluations per frame
    :param record_timing: report wall time (0 otherwise)
    :param dict_args: detector options, see DetectorConfig
    """

    def __init__(
        self,
        n=100,
        m=150,
        p=4,
        l_max=10,
        k_max=6,
        snr_db_list=(10.0,),
        detector="map",
        l_map=None,
        iters=10,
        damping=None,
        early_stop=False,
        min_frames=10,
        min_bit_errors=200,
        max_frames=10000,
        seed=1,
        modulation="qpsk",
        workers=None,
        count_ops=False,
        record_timing=True,
        dict_args=None,
    ):
        self.n = n
        self.m = m
        self.p = p
        self.l_max = l_max
        self.k_max = k_max
        self.snr_db_list = sorted(set(float(s) for s in snr_db_list))
        self.detector = detector
        self.l_map = l_map
        self.iters = iters
        self.damping = damping
        self.early_stop = early_stop
        self.min_frames = min_frames
        self.min_bit_errors = min_bit_errors
        self.max_frames = max_frames
        self.seed = seed
        self.modulation = modulation
        self.workers = workers
        self.count_ops = count_ops
        self.record_timing = record_timing
        self.dict_args = dict(dict_args) if dict_args else {}

    def validate(self):
        """
        Raises ConfigurationError on the first invalid setting
        """
        if self.n < 1 or self.m < 1:
            raise ConfigurationError("frame dimensions must be >= 1, got %d x %d" % (self.n, self.m))
        if not self.snr_db_list:
            raise ConfigurationError("the SNR list is empty")
        if self.detector not in DETECTORS:
            raise ConfigurationError("unknown detector %r, choose among %s" % (self.detector, DETECTORS))
        if self.modulation not in MODULATIONS:
            raise ConfigurationError("unknown modulation %r" % (self.modulation,))
        if self.detector == "oracle":
            n_bits = self.n * self.m * self.constellation().bits_per_symbol
            if n_bits > MAX_ENUMERATION_BITS:
                raise ConfigurationError(
                    "oracle needs N*M*log2|A| <= %d, got %d" % (MAX_ENUMERATION_BITS, n_bits)
                )
        if self.min_bit_errors < 1:
            raise ConfigurationError("min_bit_errors must be >= 1, got %d" % self.min_bit_errors)
        if self.min_frames < 1 or self.max_frames < self.min_frames:
            raise ConfigurationError(
                "frame budget must satisfy max_frames >= min_frames >= 1, got max_frames=%d min_frames=%d"
                % (self.max_frames, self.min_frames)
            )
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer, got %d" % self.seed)
        if self.p < 1:
            raise ConfigurationError("number of paths must be >= 1, got %d" % self.p)
        if not 0 <= self.l_max < self.m:
            raise ConfigurationError("lmax must satisfy 0 <= lmax < M (%d), got %d" % (self.m, self.l_max))
        if not 0 <= self.k_max < self.n:
            raise ConfigurationError("kmax must satisfy 0 <= kmax < N (%d), got %d" % (self.n, self.k_max))
        if self.p > (self.l_max + 1) * min(2 * self.k_max + 1, self.n):
            raise ConfigurationError(
                "%d paths exceed the %d distinct (delay, Doppler) shifts of lmax=%d kmax=%d"
                % (self.p, (self.l_max + 1) * min(2 * self.k_max + 1, self.n), self.l_max, self.k_max)
            )
        if self.detector != "oracle":
            self.detector_config()
        resolve_threads(self.workers)
        return self

    def constellation(self):
        return MODULATIONS[self.modulation]()

    def detector_config(self):
        return DetectorConfig.for_detector(
            self.detector,
            max_iters=self.iters,
            damping=self.damping,
            l_map=self.l_map,
            early_stop=self.early_stop,
            dict_args=self.dict_args,
        )

    @property
    def effective_l_map(self):
        """
        Number of interferers enumerated per function node once L is
        clamped to P-1, None for the oracle
        """
        if self.detector == "oracle":
            return None
        if self.detector == "map":
            return self.p - 1
        if self.detector == "mp":
            return 0
        return min(self.l_map, self.p - 1)

    def to_dict(self):
        """
        Settings that determine the results; the worker count is left out
        """
        dict_config = {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "l_max": self.l_max,
            "k_max": self.k_max,
            "snr_db_list": self.snr_db_list,
            "detector": self.detector,
            "modulation": self.modulation,
            "min_frames": self.min_frames,
            "min_bit_errors": self.min_bit_errors,
            "max_frames": self.max_frames,
            "seed": self.seed,
            "count_ops": self.count_ops,
            "record_timing": self.record_timing,
        }
        if self.detector != "oracle":
            dict_config["detector_config"] = self.detector_config().to_dict()
            dict_config["effective_l_map"] = self.effective_l_map
        return dict_config


class SimResult(object):
    """
    Rows of a sweep, one per SNR point, ordered by SNR

    :param rows: list of dictionaries with the COLUMNS keys
    :param config: SimConfig of the run
    """

    def __init__(self, rows, config):
        self.config = config
        self.seed = config.seed
        columns = list(COLUMNS)
        if config.count_ops:
            columns.append("likelihood_evals")
        self.table = pd.DataFrame(rows, columns=columns)

    def __len__(self):
        return self.table.shape[0]


class SimulationProcess(object):
    """
    Monte-Carlo process for one configuration

    :param config: SimConfig, validated on construction
    """

    def __init__(self, config):
        self.config = config.validate()
        self.constellation = config.constellation()
        self.workers = resolve_threads(config.workers)
        self.detectors_dict = {
            "map": (self.detect_map, "MAP"),
            "hybrid": (self.detect_hybrid, "Hybrid MAP/PIC"),
            "mp": (self.detect_hybrid, "MP"),
            "oracle": (self.detect_oracle, "Oracle"),
        }

    def detect_map(self, y, ch, n0):
        detector = SymbolWiseMAPDetector(self.constellation, self.config.detector_config())
        detector.detect(y, ch, n0)
        return detector.decision_indices, detector.iterations_run, detector.likelihood_evals

    def detect_hybrid(self, y, ch, n0):
        detector = HybridMAPPICDetector(self.constellation, self.config.detector_config())
        detector.detect(y, ch, n0)
        return detector.decision_indices, detector.iterations_run, detector.likelihood_evals

    def detect_oracle(self, y, ch, n0):
        oracle = ExactPosteriorOracle(self.constellation, self.config.dict_args)
        result = oracle.exact_marginals(y, ch, n0)
        return np.argmax(result.marginals, axis=-1), 1, 0

    def run_frame(self, snr_index, frame_index, noise):
        """
        One frame: bits, symbols, channel, noise, detection, error counts

        :return: dictionary of per-frame tallies
        """
        cfg = self.config
        c = self.constellation
        rng = child_rng(cfg.seed, snr_index, frame_index)
        n_bits = cfg.n * cfg.m * c.bits_per_symbol
        bits = rng.integers(0, 2, size=n_bits).astype(np.uint8)
        x = DDFrame.from_vector(map_bits(bits, c), cfg.n, cfg.m)
        ch = draw_channel(cfg.p, cfg.l_max, cfg.k_max, cfg.n, cfg.m, rng)
        y = apply_dd(x, ch, noise, rng)
        detect = self.detectors_dict[cfg.detector][0]
        decisions, iterations, evals = detect(y, ch, noise.n0)
        sent = c.nearest_index(x.values)
        bits_hat = c.bits_from_indices(decisions.ravel(order="F"))
        return {
            "bits": n_bits,
            "bit_errors": int(np.sum(bits_hat != bits)),
            "symbol_errors": int(np.sum(decisions != sent)),
            "iters": iterations,
            "likelihood_evals": evals,
        }

    def run_point(self, snr_db, snr_index=None):
        """
        Frames at one SNR until the stop rule is met

        :param snr_db: Es/N0 in dB
        :param snr_index: stream key, default the position of snr_db in the sweep
        :return: dictionary row with the COLUMNS keys
        """
        cfg = self.config
        if snr_index is None:
            snr_index = cfg.snr_db_list.index(snr_db) if snr_db in cfg.snr_db_list else 0
        noise = NoiseModel.from_snr_db(snr_db)
        tally = {"frames": 0, "bits": 0, "bit_errors": 0, "symbol_errors": 0, "iters": 0, "likelihood_evals": 0}

        def stop():
            reached = tally["bit_errors"] >= cfg.min_bit_errors and tally["frames"] >= cfg.min_frames
            return reached or tally["frames"] >= cfg.max_frames

        start = time.perf_counter()
        executor = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        try:
            next_frame = 0
            while not stop():
                batch = range(next_frame, min(next_frame + BATCH_FRAMES, cfg.max_frames))
                if executor is None:
                    outcomes = (self.run_frame(snr_index, f, noise) for f in batch)
                else:
                    outcomes = executor.map(lambda f: self.run_frame(snr_index, f, noise), batch)
                for outcome in outcomes:
                    tally["frames"] += 1
                    for key in ("bits", "bit_errors", "symbol_errors", "iters", "likelihood_evals"):
                        tally[key] += outcome[key]
                    if stop():
                        break
                next_frame = batch.stop
        finally:
            if executor is not None:
                executor.shutdown(wait=True, cancel_futures=True)
        wall_ms = 1000.0 * (time.perf_counter() - start) if cfg.record_timing else 0.0

        insufficient = tally["bit_errors"] < cfg.min_bit_errors
        if insufficient:
            warnings.warn(
                "SNR %g dB: %d bit errors after %d frames, below the target of %d"
                % (snr_db, tally["bit_errors"], tally["frames"], cfg.min_bit_errors)
            )
        n_symbols = tally["bits"] // self.constellation.bits_per_symbol
        row = {
            "snr_db": float(snr_db),
            "frames": tally["frames"],
            "bits": tally["bits"],
            "bit_errors": tally["bit_errors"],
            "ber": tally["bit_errors"] / tally["bits"],
            "symbol_errors": tally["symbol_errors"],
            "ser": tally["symbol_errors"] / n_symbols,
            "avg_iters": tally["iters"] / tally["frames"],
            "wall_ms": wall_ms,
            "insufficient_errors": bool(insufficient),
        }
        if cfg.count_ops:
            row["likelihood_evals"] = tally["likelihood_evals"] / tally["frames"]
        return row

    def run_sweep(self, progress=None):
        """
        All SNR points in increasing order

        :param progress: optional callable receiving each finished row
        :return: SimResult
        """
        rows = []
        for snr_index, snr_db in enumerate(self.config.snr_db_list):
            row = self.run_point(snr_db, snr_index)
            if progress is not None:
                progress(row)
            rows.append(row)
        return SimResult(rows, self.config)


def run_point(cfg, snr_db):
    """
    :return: dictionary row for one SNR point, see SimulationProcess.run_point
    """
    return SimulationProcess(cfg).run_point(snr_db)


def run_sweep(cfg):
    """
    :return: SimResult over cfg.snr_db_list
    """
    return SimulationProcess(cfg).run_sweep()
