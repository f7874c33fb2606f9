import os
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from OTFSHybrid.detection.detector_hybrid import (
    HybridMAPPICDetector,
    PicMoments,
    detect_hybrid,
    likelihood_pic,
    partition_interferers,
    pic_moments,
)
from OTFSHybrid.detection.detector_map import DetectorConfig, detect_map, likelihood_full
from OTFSHybrid.processes.sim_harness import SimConfig, SimulationProcess
from OTFSHybrid.system.channel import NoiseModel, apply_dd, draw_channel
from OTFSHybrid.system.constellation import make_qpsk
from OTFSHybrid.system.otfs_transform import DDFrame
from OTFSHybrid.utility.utils import ConfigurationError, child_rng, one_hot_encode

qpsk = make_qpsk()


def seeded_link(seed, trial, p, n, m, snr_db, l_max=3, k_max=2):
    rng = child_rng(seed, trial)
    ch = draw_channel(p, l_max, k_max, n, m, rng)
    x = DDFrame(qpsk.points[rng.integers(0, 4, size=(n, m))])
    noise = NoiseModel.from_snr_db(snr_db)
    return x, ch, apply_dd(x, ch, noise, rng), noise.n0


def test_partition_by_power():
    gains = np.array([0.1, 0.9j, -0.5, 0.3])
    part = partition_interferers(gains, 2)
    assert part.order == [1, 2, 3, 0]
    assert part.map_set == [1, 2]
    assert part.pic_set == [0, 3]
    assert not part.clamped
    part = partition_interferers(gains, 0, slots=[4, 5, 6, 7])
    assert part.map_set == []
    assert part.pic_set == [4, 5, 6, 7]


def test_partition_takes_strongest():
    gains = np.sqrt([0.3, 0.9, 0.1, 0.5])
    part = partition_interferers(gains, 2)
    assert part.map_set == [1, 3]
    assert part.pic_set == [0, 2]
    assert partition_interferers(gains, 3).pic_set == [2]
    assert partition_interferers(gains, 4).pic_set == []


def test_partition_ties_keep_lower_slot():
    part = partition_interferers([0.5, -0.5j, 0.5], 1, slots=[2, 3, 5])
    assert part.map_set == [2]
    assert part.order == [2, 3, 5]


def test_partition_clamps_l():
    part = partition_interferers([0.2, 0.4], 5)
    assert part.clamped
    assert part.map_set == [0, 1]
    assert part.pic_set == []
    with pytest.raises(ConfigurationError):
        partition_interferers([0.2], -1)


def test_pic_moments():
    mean, var = pic_moments(one_hot_encode([2], 4)[0], qpsk)
    assert_allclose(mean, qpsk.points[2])
    assert_allclose(var, 0.0, atol=1e-15)
    mean, var = pic_moments(np.full(4, 0.25), qpsk)
    assert_allclose(mean, 0.0, atol=1e-15)
    assert_allclose(var, 1.0)
    prob = np.array([[0.5, 0.5, 0, 0], [0.7, 0.1, 0.1, 0.1]])
    mean, var = pic_moments(prob, qpsk)
    assert mean.shape == (2,)
    assert_allclose(mean[0], 1j / np.sqrt(2))
    assert_allclose(var[0], 0.5)
    assert np.all(var >= 0)


def test_likelihood_pic_reduces_to_full():
    rng = np.random.default_rng(0)
    values = qpsk.points[rng.integers(0, 4, size=3)]
    gains = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    y_obs = 0.3 - 0.2j
    full = likelihood_full(y_obs, qpsk.points[1], values, gains, 0.7, 0.4)
    hybrid = likelihood_pic(y_obs, qpsk.points[1], values, gains, [], [], 0.7, 0.4, 0.0)
    assert_allclose(hybrid, full)
    # a certain interferer cancelled by its mean is the same as enumerating it
    split = likelihood_pic(y_obs, qpsk.points[1], values[:1], gains[:1], values[1:], gains[1:], 0.7, 0.4, 0.0)
    assert_allclose(split, full)
    widened = likelihood_pic(y_obs, qpsk.points[1], values, gains, [], [], 0.7, 0.4, 0.6)
    assert_allclose(widened, np.exp(np.log(full) * 0.4))
    # perfect cancellation of every interferer
    y_clean = np.sum(gains * values) + 0.7 * qpsk.points[1]
    exact = likelihood_pic(y_clean, qpsk.points[1], [], [], values, gains, 0.7, 0.4, 0.0)
    assert_allclose(exact, 1.0)
    # residual of magnitude sqrt(n0) with sigma2 = n0
    assert_allclose(likelihood_pic(np.sqrt(0.4), 0.0, [], [], [], [], 1.0, 0.4, 0.4), np.exp(-0.5))
    with pytest.raises(ConfigurationError):
        likelihood_pic(y_obs, 1.0, [], [], [], [], 1.0, 0.4, -0.1)


def test_full_enumeration_equals_map():
    for trial in range(50):
        _, ch, y, n0 = seeded_link(30, trial, 3, 8, 8, 10)
        post_map, x_map = detect_map(y, ch, qpsk, n0)
        cfg = DetectorConfig.for_detector("hybrid", l_map=2)
        post_hyb, x_hyb = detect_hybrid(y, ch, qpsk, n0, cfg)
        assert np.max(np.abs(post_map - post_hyb)) <= 1e-12
        assert_array_equal(x_map.values, x_hyb.values)


def test_oversized_l_is_clamped_with_warning():
    _, ch, y, n0 = seeded_link(31, 0, 3, 4, 4, 10)
    cfg = DetectorConfig.for_detector("hybrid", l_map=7)
    with pytest.warns(UserWarning, match="exceeds P-1"):
        post_hyb, _ = detect_hybrid(y, ch, qpsk, n0, cfg)
    post_map, _ = detect_map(y, ch, qpsk, n0)
    assert_allclose(post_hyb, post_map, atol=1e-12)


def test_single_path_mp_equals_map():
    _, ch, y, n0 = seeded_link(32, 0, 1, 4, 4, 5)
    cfg = DetectorConfig.for_detector("mp", damping=1.0)
    post_mp, _ = detect_hybrid(y, ch, qpsk, n0, cfg)
    post_map, _ = detect_map(y, ch, qpsk, n0)
    assert_allclose(post_mp, post_map, atol=1e-12)


def test_default_is_mp():
    _, ch, y, n0 = seeded_link(33, 0, 2, 4, 4, 5)
    post_default, _ = detect_hybrid(y, ch, qpsk, n0, None)
    post_mp, _ = detect_hybrid(y, ch, qpsk, n0, DetectorConfig.for_detector("mp"))
    assert_array_equal(post_default, post_mp)


def test_hybrid_requires_l():
    with pytest.raises(ConfigurationError, match="hybrid requires --L"):
        HybridMAPPICDetector(qpsk, DetectorConfig())


def test_likelihood_evaluation_closed_form():
    n, m, iters = 4, 4, 2
    for p in (2, 3, 4):
        for l_map in (0, 1, 2):
            _, ch, y, n0 = seeded_link(34, p, p, n, m, 10, l_max=3, k_max=1)
            detector = HybridMAPPICDetector(qpsk, DetectorConfig(max_iters=iters, l_map=l_map))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                detector.detect(y, ch, n0)
            expected = n * m * p * 4 ** (min(l_map, p - 1) + 1) * iters
            assert detector.likelihood_evals == expected


def test_variance_and_moment_variants():
    _, ch, y, n0 = seeded_link(35, 0, 4, 8, 8, 12)
    outputs = []
    for dict_args in [
        {},
        {"weighted_variance": False},
        {"moments_source": "posterior"},
    ]:
        cfg = DetectorConfig.for_detector("hybrid", l_map=1, dict_args=dict_args)
        detector = HybridMAPPICDetector(qpsk, cfg)
        posterior, _ = detector.detect(y, ch, n0)
        assert detector.state.check_valid()
        assert_allclose(np.sum(posterior, axis=-1), 1.0)
        outputs.append(posterior)
    assert not np.allclose(outputs[0], outputs[1])
    assert not np.allclose(outputs[0], outputs[2])


def test_mp_state_valid_with_damping():
    _, ch, y, n0 = seeded_link(36, 0, 4, 8, 8, 8)
    detector = HybridMAPPICDetector(qpsk, DetectorConfig.for_detector("mp", max_iters=4))
    detector.detect(y, ch, n0)
    assert detector.iterations_run == 4
    assert detector.state.check_valid()


@pytest.mark.skipif(not os.environ.get("OTFS_RUN_SLOW"), reason="set OTFS_RUN_SLOW to run the BER sweep")
def test_ber_improves_with_l():
    ber = {}
    for name, detector, l_map in [
        ("map", "map", None),
        ("hybrid2", "hybrid", 2),
        ("hybrid1", "hybrid", 1),
        ("mp", "mp", None),
    ]:
        cfg = SimConfig(
            n=16, m=32, p=4, l_max=10, k_max=6, snr_db_list=[14], detector=detector, l_map=l_map,
            iters=10, min_frames=10, min_bit_errors=200, max_frames=2000, seed=1, record_timing=False,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ber[name] = SimulationProcess(cfg).run_sweep().table["ber"].iloc[0]
    assert ber["map"] < ber["mp"]
    assert ber["hybrid1"] < ber["mp"]
    assert ber["map"] <= 1.1 * ber["hybrid2"]
    assert ber["hybrid2"] <= 1.1 * ber["hybrid1"]


def test_pic_moments_aggregate():
    messages = np.stack([one_hot_encode(np.zeros((2, 2), dtype=int), 4), np.full((2, 2, 4), 0.25)])
    gains = np.array([0.5, 2.0j])
    moments = PicMoments.from_messages(messages, gains, qpsk)
    assert moments.means.shape == (2, 2, 2)
    assert_allclose(moments.offset(), 0.5 * qpsk.points[0])
    assert_allclose(moments.aggregate(), 4.0, atol=1e-12)
    assert_allclose(moments.aggregate(weighted=False), 1.0, atol=1e-12)
