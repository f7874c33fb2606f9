import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from OTFSHybrid.detection.detector_map import detect_map
from OTFSHybrid.detection.oracle import ExactPosteriorOracle, exact_marginals
from OTFSHybrid.system.channel import ChannelPath, ChannelRealization, NoiseModel, apply_dd, draw_channel
from OTFSHybrid.system.constellation import make_qpsk
from OTFSHybrid.system.otfs_transform import DDFrame
from OTFSHybrid.utility.utils import (
    ConfigurationError,
    OracleSizeError,
    child_rng,
    one_hot_encode,
    total_variation,
)

qpsk = make_qpsk()


def seeded_link(seed, trial, p, l_max, k_max, n, m, snr_db, c=qpsk):
    rng = child_rng(seed, trial)
    ch = draw_channel(p, l_max, k_max, n, m, rng)
    x = DDFrame(c.points[rng.integers(0, c.size, size=(n, m))])
    noise = NoiseModel.from_snr_db(snr_db)
    y = apply_dd(x, ch, noise, rng)
    return x, ch, y, noise.n0


def enumerate_marginals(y, ch, c, n0):
    """Straightforward loop over every frame, kept apart from the oracle"""
    n, m = y.shape
    marg = np.zeros((n, m, c.size))
    positions = list(itertools.product(range(n), range(m)))
    for choice in itertools.product(range(c.size), repeat=n * m):
        x = np.zeros((n, m), dtype=complex)
        weight = 1.0
        for (k, l), s in zip(positions, choice):
            x[k, l] = c.points[s]
            weight *= c.priors[s]
        model = np.zeros((n, m), dtype=complex)
        for path, g in zip(ch.paths, ch.effective_gains):
            for k, l in positions:
                model[k, l] += g * x[(k - path.doppler_idx) % n, (l - path.delay_idx) % m]
        weight *= np.exp(-np.sum(np.abs(y.values - model) ** 2) / n0)
        for (k, l), s in zip(positions, choice):
            marg[k, l, s] += weight
    return marg / np.sum(marg, axis=-1, keepdims=True)


def test_matches_independent_enumeration():
    _, ch, y, n0 = seeded_link(10, 0, 2, 1, 1, 2, 2, 10)
    result = exact_marginals(y, ch, qpsk, n0)
    assert_allclose(result.marginals, enumerate_marginals(y, ch, qpsk, n0), atol=1e-12)
    assert_allclose(np.sum(result.marginals, axis=-1), 1.0)


def test_independent_enumeration_with_prior():
    c = make_qpsk(priors=[0.1, 0.2, 0.3, 0.4])
    _, ch, y, n0 = seeded_link(11, 0, 2, 1, 1, 2, 2, 3, c)
    result = exact_marginals(y, ch, c, n0)
    assert_allclose(result.marginals, enumerate_marginals(y, ch, c, n0), atol=1e-12)


def test_chunking_does_not_change_result():
    _, ch, y, n0 = seeded_link(12, 0, 2, 1, 1, 2, 2, 6)
    whole = exact_marginals(y, ch, qpsk, n0)
    oracle = ExactPosteriorOracle(qpsk, {"oracle_chunk": 7})
    chunked = oracle.exact_marginals(y, ch, n0)
    assert oracle.frames_enumerated == 256
    assert_allclose(chunked.marginals, whole.marginals, atol=1e-12)
    assert_allclose(chunked.log_evidence, whole.log_evidence)
    assert_allclose(chunked.map_frame.values, whole.map_frame.values)


def test_size_guard():
    oracle = ExactPosteriorOracle(qpsk)
    oracle.check_size(2, 4)
    oracle.check_size(2, 5)
    with pytest.raises(OracleSizeError):
        oracle.check_size(4, 4)
    y = DDFrame(np.zeros((4, 4)))
    ch = draw_channel(1, 1, 1, 4, 4, child_rng(0))
    with pytest.raises(OracleSizeError):
        exact_marginals(y, ch, qpsk, 0.1)


def test_invalid_arguments():
    with pytest.raises(ConfigurationError):
        ExactPosteriorOracle(qpsk, {"oracle_chunk": 0})
    _, ch, y, _ = seeded_link(13, 0, 1, 1, 1, 2, 2, 10)
    with pytest.raises(ConfigurationError):
        exact_marginals(y, ch, qpsk, 0.0)


def test_single_path_detector_is_exact():
    for trial in range(5):
        _, ch, y, n0 = seeded_link(14, trial, 1, 3, 1, 2, 4, 4)
        posterior, _ = detect_map(y, ch, qpsk, n0)
        marginals = exact_marginals(y, ch, qpsk, n0).marginals
        assert np.max(total_variation(posterior, marginals)) <= 1e-9


def test_loopy_detector_agrees_with_oracle():
    agree = 0
    tv = []
    for trial in range(200):
        _, ch, y, n0 = seeded_link(15, trial, 2, 1, 1, 2, 2, 20)
        posterior, _ = detect_map(y, ch, qpsk, n0)
        marginals = exact_marginals(y, ch, qpsk, n0).marginals
        agree += np.sum(np.argmax(posterior, axis=-1) == np.argmax(marginals, axis=-1))
        tv.append(np.mean(total_variation(posterior, marginals)))
    mean_tv = np.mean(tv)
    assert agree / (200 * 4) >= 0.99
    assert mean_tv < 0.05, "mean total variation %.4f" % mean_tv


def test_marginal_argmax_matches_joint_map():
    consistent = 0
    for trial in range(200):
        _, ch, y, n0 = seeded_link(16, trial, 2, 1, 1, 2, 2, 30)
        result = exact_marginals(y, ch, qpsk, n0)
        marginal_frame = qpsk.points[np.argmax(result.marginals, axis=-1)]
        consistent += np.allclose(marginal_frame, result.map_frame.values)
    assert consistent >= 0.99 * 200


@pytest.mark.parametrize("priors", [None, [0.1, 0.2, 0.3, 0.4]])
def test_silent_channel_returns_prior(priors):
    c = make_qpsk(priors=priors)
    ch = ChannelRealization([ChannelPath(0.0, 0, 0), ChannelPath(0.0, 1, 1)], 2, 2)
    rng = np.random.default_rng(17)
    y = DDFrame(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    result = exact_marginals(y, ch, c, 0.5)
    assert_allclose(result.marginals, np.broadcast_to(c.priors, (2, 2, 4)), atol=1e-12)


def test_identity_channel_without_noise_is_one_hot():
    rng = np.random.default_rng(18)
    sent = rng.integers(0, qpsk.size, size=(2, 2))
    x = DDFrame(qpsk.points[sent])
    ch = ChannelRealization([ChannelPath(1.0, 0, 0)], 2, 2)
    y = apply_dd(x, ch)
    result = exact_marginals(y, ch, qpsk, 1e-6)
    assert_allclose(result.marginals, one_hot_encode(sent, qpsk.size), atol=1e-9)
    assert_allclose(result.map_frame.values, x.values)
