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
Command line - :mod:`OTFSHybrid.processes.cli`
==============================================

This module provides the ``otfs-sim`` command: it parses the flags into a
:class:`~OTFSHybrid.processes.sim_harness.SimConfig`, runs the sweep and
writes a CSV file whose comment lines carry the :ref:`run manifest <manifest>`.

Example::

    otfs-sim --n 16 --m 32 --snr 8:2:16 --detector hybrid --L 1 --out ber.csv

.. _manifest:

Run manifest
------------

.. autoclass:: RunManifest
    :members:

.. currentmodule:: OTFSHybrid.processes.cli

.. autofunction:: parse_snr
.. autofunction:: parse_args
.. autofunction:: emit_csv
.. autofunction:: main

"""

import argparse
import datetime
import json
import sys

import numpy as np

from OTFSHybrid._version import __appname__, __version__
from OTFSHybrid.processes.sim_harness import DETECTORS, MODULATIONS, SimConfig, SimulationProcess
from OTFSHybrid.utility.utils import content_hash


__all__ = [
    "RunManifest",
    "build_parser",
    "parse_snr",
    "parse_args",
    "emit_csv",
    "main",
]


class RunManifest(object):
    """
    Provenance of a run, written as ``#`` comment lines ahead of the CSV
    header. The timestamp sits alone on the last comment line.

    :param config: SimConfig
    :param timestamp: ISO timestamp, default now (UTC)
    """

    def __init__(self, config, timestamp=None):
        self.config = config.to_dict()
        self.version = "%s %s" % (__appname__, __version__)
        self.seed = config.seed
        self.config_hash = content_hash(self.config)
        if timestamp is None:
            timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        self.timestamp = timestamp

    def comment_lines(self):
        return [
            "# tool: %s" % self.version,
            "# seed: %d" % self.seed,
            "# config_hash: %s" % self.config_hash,
            "# config: %s" % json.dumps(self.config, sort_keys=True),
            "# stop_rule: min_frames=%d min_bit_errors=%d max_frames=%d"
            % (self.config["min_frames"], self.config["min_bit_errors"], self.config["max_frames"]),
            "# timestamp: %s" % self.timestamp,
        ]


def parse_snr(text):
    """
    ``start:step:stop`` (inclusive) or a comma separated list of dB values

    :return: list of floats
    """
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("SNR range must be start:step:stop, got %r" % text)
        start, step, stop = (float(v) for v in parts)
        if step <= 0 or stop < start:
            raise ValueError("SNR range needs step > 0 and stop >= start, got %r" % text)
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + step * k for k in range(count)]
    values = [float(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError("empty SNR list")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="otfs-sim",
        description="Uncoded BER of OTFS detectors over random delay-Doppler channels",
    )
    parser.add_argument("--n", type=int, default=100, help="Doppler bins N (default 100)")
    parser.add_argument("--m", type=int, default=150, help="delay bins M (default 150)")
    parser.add_argument("--paths", type=int, default=4, help="number of paths P (default 4)")
    parser.add_argument("--lmax", type=int, default=10, help="maximum delay index (default 10)")
    parser.add_argument("--kmax", type=int, default=6, help="maximum Doppler index (default 6)")
    parser.add_argument("--snr", type=str, default="10", help="Es/N0 in dB: start:step:stop or comma list")
    parser.add_argument("--detector", choices=DETECTORS, default="map")
    parser.add_argument("--L", dest="l_map", type=int, default=None,
                        help="interferers enumerated by the hybrid detector")
    parser.add_argument("--iters", type=int, default=10, help="maximum detector iterations")
    parser.add_argument("--damping", type=float, default=None,
                        help="damping factor (default 1.0, 0.7 for mp)")
    parser.add_argument("--early-stop", action="store_true",
                        help="stop iterating once hard decisions are stable")
    parser.add_argument("--frames", type=int, default=10, help="minimum frames per SNR point")
    parser.add_argument("--min-errors", type=int, default=200, help="bit errors per SNR point")
    parser.add_argument("--max-frames", type=int, default=10000, help="frame budget per SNR point")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--mod", choices=sorted(MODULATIONS), default="qpsk")
    parser.add_argument("--out", type=str, default="-", help="CSV path, - for stdout")
    parser.add_argument("--count-ops", action="store_true",
                        help="add the likelihood evaluations per frame")
    parser.add_argument("--no-timing", action="store_true", help="write wall_ms as 0")
    parser.add_argument("--verbose", action="store_true", help="progress on stderr")
    return parser


def _config_from_namespace(args, parser):
    try:
        snr_list = parse_snr(args.snr)
    except ValueError as err:
        parser.error(str(err))
    if args.detector == "hybrid" and args.l_map is None:
        parser.error("hybrid requires --L")
    config = SimConfig(
        n=args.n,
        m=args.m,
        p=args.paths,
        l_max=args.lmax,
        k_max=args.kmax,
        snr_db_list=snr_list,
        detector=args.detector,
        l_map=args.l_map,
        iters=args.iters,
        damping=args.damping,
        early_stop=args.early_stop,
        min_frames=args.frames,
        min_bit_errors=args.min_errors,
        max_frames=args.max_frames,
        seed=args.seed,
        modulation=args.mod,
        count_ops=args.count_ops,
        record_timing=not args.no_timing,
    )
    try:
        config.validate()
    except ValueError as err:
        parser.error(str(err))
    return config


def parse_args(argv=None):
    """
    Parses command-line flags into a validated SimConfig. Invalid input
    exits with status 2 and a one-line message.

    :param argv: list of arguments, default sys.argv[1:]
    :return: SimConfig
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    return _config_from_namespace(args, parser)


def emit_csv(result, manifest, path):
    """
    Writes the manifest comment lines followed by the result table.
    Integers are written exactly, reals with 17 significant digits.

    :param result: SimResult
    :param manifest: RunManifest
    :param path: output path, "-" or None for stdout
    """
    table = result.table.copy()
    table["insufficient_errors"] = table["insufficient_errors"].map(lambda v: "true" if v else "false")
    header = "\n".join(manifest.comment_lines()) + "\n"
    if path in (None, "-"):
        sys.stdout.write(header)
        table.to_csv(sys.stdout, index=False, float_format="%.17g", lineterminator="\n")
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header)
        table.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")


def main(argv=None):
    """
    Entry point of ``otfs-sim``

    :return: exit status, 0 when every SNR point produced a row
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _config_from_namespace(args, parser)
    process = SimulationProcess(config)

    def report(row):
        if args.verbose:
            sys.stderr.write(
                "snr=%g dB frames=%d bit_errors=%d ber=%.3e\n"
                % (row["snr_db"], row["frames"], row["bit_errors"], row["ber"])
            )

    result = process.run_sweep(progress=report)
    manifest = RunManifest(config)
    try:
        emit_csv(result, manifest, args.out)
    except OSError as err:
        sys.stderr.write("otfs-sim: cannot write %s: %s\n" % (args.out, err))
        return 1
    return 0 if len(result) == len(config.snr_db_list) else 1


if __name__ == "__main__":
    sys.exit(main())
