import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coordbeam.errors import NegativeSinr, ShapeMismatch
from coordbeam.system_model import (
    ChannelSet,
    downlink_sinr,
    gain_matrix,
    per_bs_power,
    uplink_covariances,
    uplink_sinr,
    user_rate,
)
from helpers import crandn, iid_instance, sinr_matrix_form


def test_single_user_sinr_is_snr():
    h = np.array([[[1.0, 2.0j]]])
    ch = ChannelSet(h, 0.5, [0], 3.0)
    f = h[0, 0] / np.linalg.norm(h[0, 0])
    assert downlink_sinr(ch, f[None], [3.0], 0) == pytest.approx(3.0 * 5 / 0.5)
    assert uplink_sinr(ch, f[None], [3.0], 0) == pytest.approx(3.0 * 5 / 0.5)


def test_s2_downlink_and_uplink_sinr(s2):
    f = np.ones((2, 1))
    expected = 4 / (4 * 0.25 + 1)
    assert downlink_sinr(s2, f, [4, 4], 0) == pytest.approx(expected)
    assert uplink_sinr(s2, f, [4, 4], 0) == pytest.approx(expected)
    assert expected == 2


def test_zero_power_zero_sinr(s2):
    np.testing.assert_array_equal(downlink_sinr(s2, np.ones((2, 1)), [0, 0]), [0, 0])


def test_uplink_nulling_gives_unit_denominator():
    h = np.zeros((2, 2, 2), dtype=complex)
    h[0, 0] = [1, 0]
    h[1, 0] = [0, 1]  # user 2's channel at BS 1 is orthogonal to f_1 = e1
    h[0, 1] = [1, 1]
    h[1, 1] = [1, 1]
    ch = ChannelSet(h, 1.0, [0, 1], 1.0)
    f = np.array([[1, 0], [1, 0]], dtype=complex)
    q = np.array([2.0, 5.0])
    # denominator = 0 interference + |f_1|^2 = 1
    assert uplink_sinr(ch, f, q, 0) == pytest.approx(2.0)


def test_user_rate_examples():
    assert user_rate(0) == 0
    assert user_rate(1) == 1.0
    assert user_rate(3) == 2.0
    with pytest.raises(NegativeSinr):
        user_rate(-0.1)


def test_per_bs_power():
    h = crandn(np.random.default_rng(0), 3, 2, 2)
    ch = ChannelSet(h, 1.0, [0, 0, 1], 4.0)
    np.testing.assert_allclose(per_bs_power(ch, [1, 2, 3]), [3, 3])
    two = ChannelSet(crandn(np.random.default_rng(1), 2, 2, 1), 1.0, [0, 1], 4.0)
    np.testing.assert_allclose(per_bs_power(two, [1.5, 2.5]), [1.5, 2.5])


def test_s2_feasible_with_equality(s2):
    assert np.all(per_bs_power(s2, [4, 4]) == s2.p_max)


def test_shape_validation():
    with pytest.raises(ShapeMismatch):
        ChannelSet(np.ones((2, 2)), 1.0, [0, 1], 1.0)
    with pytest.raises(ShapeMismatch):
        ChannelSet(np.ones((2, 2, 1)), 1.0, [0, 2], 1.0)
    with pytest.raises(ShapeMismatch):
        ChannelSet(np.ones((1, 2, 1)), 1.0, [0], 1.0)
    ch = ChannelSet(np.ones((2, 2, 1)), 1.0, [0, 1], 1.0)
    with pytest.raises(ShapeMismatch):
        downlink_sinr(ch, np.ones((2, 2)), [1, 1])


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
def test_vectorized_sinr_matches_loop(seed, M, B):
    rng = np.random.default_rng(seed)
    ch = iid_instance(rng, M, B + 1 if B > 1 else 2, B)
    f = crandn(rng, ch.K, M)
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    p = rng.uniform(0, 2, ch.K)
    np.testing.assert_allclose(downlink_sinr(ch, f, p), sinr_matrix_form(ch, f, p), rtol=1e-12)


def test_uplink_covariance_matches_definition(rng):
    ch = iid_instance(rng, 3, 3, 3)
    q = np.array([0.5, 1.0, 2.0])
    C = uplink_covariances(ch, q)
    for k in range(3):
        b = ch.serving[k]
        ref = np.eye(3, dtype=complex)
        for i in range(3):
            if i != k:
                ref += q[i] * np.outer(ch.h[i, b], ch.h[i, b].conj()) / ch.noise[i]
        np.testing.assert_allclose(C[k], ref, atol=1e-12)


def test_record_roundtrip(rng):
    ch = iid_instance(rng, 2, 2, 2)
    back = ChannelSet.from_record(ch.to_record())
    np.testing.assert_array_equal(back.h, ch.h)
    np.testing.assert_array_equal(gain_matrix(back, np.ones((2, 2))), gain_matrix(ch, np.ones((2, 2))))
