import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recantsm.modem import (
    Constellation,
    TxWord,
    WordTable,
    bpsk,
    constellation_by_name,
    demap,
    map_bits,
    ml_detect,
    ml_detect_batch,
    ml_metric,
    qpsk,
    ssk,
    transmit,
)

CONSTS = [bpsk(), qpsk(), qpsk(gray=True), ssk()]


def test_constellations_have_unit_energy():
    for c in CONSTS:
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
    assert qpsk().M == 4 and qpsk().bits == 2
    assert ssk().M == 1 and ssk().bits == 0


def test_constellation_validation():
    with pytest.raises(ValueError):
        Constellation([1, -1, 1j], ("00", "01", "10"))
    with pytest.raises(ValueError):
        Constellation([2.0, -2.0], ("0", "1"))
    with pytest.raises(ValueError):
        Constellation([1, -1], ("0", "0"))
    with pytest.raises(ValueError):
        constellation_by_name("16qam")


def test_map_bits_examples():
    assert map_bits("0000", 4, qpsk()) == TxWord(0, qpsk().index_of_label("00"))
    assert map_bits("10", 4, ssk()) == TxWord(2, 0)
    w = map_bits("11", 2, bpsk())
    assert w.p == 1 and bpsk().points[w.m] == -1
    with pytest.raises(ValueError):
        map_bits("101", 4, qpsk())
    with pytest.raises(ValueError):
        map_bits("01", 3, bpsk())


def test_demap_examples_and_round_trips():
    assert demap(TxWord(0, 0), 4, qpsk()) == "0000"
    for P, c in [(4, qpsk()), (4, qpsk(gray=True)), (8, ssk()), (2, bpsk())]:
        n = int(np.log2(P)) + c.bits
        for bits in ("".join(b) for b in itertools.product("01", repeat=n)):
            assert demap(map_bits(bits, P, c), P, c) == bits


def test_gray_labels_differ_by_one_bit_between_neighbours():
    c = qpsk(gray=True)
    for k in range(4):
        a, b = c.labels[k], c.labels[(k + 1) % 4]
        assert sum(x != y for x, y in zip(a, b)) == 1


def rand_channel(rng, n_r, P):
    return (rng.standard_normal((n_r, P)) + 1j * rng.standard_normal((n_r, P))) / np.sqrt(2)


def test_transmit_special_cases():
    rng = np.random.default_rng(0)
    H = rand_channel(rng, 3, 4)
    np.testing.assert_allclose(transmit(H, TxWord(2, 0), 1.0, np.zeros(3), bpsk()), H[:, 2])
    noise = rng.standard_normal(3) + 0j
    np.testing.assert_allclose(transmit(H, TxWord(1, 1), 0.0, noise, bpsk()), noise)
    y = transmit(H, TxWord(3, 0), 4.0, np.zeros(3), ssk())
    np.testing.assert_allclose(y, 2.0 * H[:, 3])
    with pytest.raises(ValueError):
        transmit(H, TxWord(4, 0), 1.0, np.zeros(3), bpsk())


@pytest.mark.parametrize("const", CONSTS, ids=lambda c: c.name)
def test_noiseless_detection_is_exact(const):
    rng = np.random.default_rng(1)
    H = rand_channel(rng, 2, 4)
    for p in range(4):
        for m in range(const.M):
            y = transmit(H, TxWord(p, m), 10.0, np.zeros(2), const)
            assert ml_detect(y, H, 10.0, const) == TxWord(p, m)


def test_identical_columns_tie_to_lowest_index():
    rng = np.random.default_rng(2)
    col = rand_channel(rng, 2, 1)[:, 0]
    H = np.stack([rand_channel(rng, 2, 1)[:, 0], col, col], axis=1)
    y = transmit(H, TxWord(2, 0), 3.0, np.zeros(2), ssk())
    assert ml_detect(y, H, 3.0, ssk()) == TxWord(1, 0)


def test_zero_observation_picks_smallest_energy_candidate():
    H = np.array([[1.0 + 0j, 0.6j]])
    D = ml_metric(np.zeros(1), H, 2.0, bpsk())
    brute = np.array([[-0.5 * abs(np.sqrt(2.0) * H[0, q] * x) ** 2 for x in bpsk().points] for q in range(2)])
    np.testing.assert_allclose(D, brute)
    assert ml_detect(np.zeros(1), H, 2.0, bpsk()) == TxWord(1, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(CONSTS[:3]), st.integers(1, 3), st.floats(0.01, 1e3))
def test_metric_equals_minimum_distance(seed, const, n_r, rho):
    rng = np.random.default_rng(seed)
    H = rand_channel(rng, n_r, 4)
    y = rand_channel(rng, n_r, 1)[:, 0] * 3
    D = ml_metric(y, H, rho, const)
    dist = np.array(
        [[np.sum(np.abs(y - np.sqrt(rho) * H[:, q] * x) ** 2) for x in const.points] for q in range(4)]
    )
    # D = (|y|^2 - dist) / 2 exactly
    np.testing.assert_allclose(D, 0.5 * (np.sum(np.abs(y) ** 2) - dist), rtol=1e-9, atol=1e-9)
    assert np.argmax(D) == np.argmin(dist)


def test_batch_detector_matches_scalar():
    rng = np.random.default_rng(5)
    T, n_r, P = 200, 2, 2
    H = (rng.standard_normal((T, n_r, P)) + 1j * rng.standard_normal((T, n_r, P))) / np.sqrt(2)
    y = (rng.standard_normal((T, n_r)) + 1j * rng.standard_normal((T, n_r))) * 2
    const = qpsk()
    batch = ml_detect_batch(y, H, 3.0, const)
    for t in range(T):
        w = ml_detect(y[t], H[t], 3.0, const)
        assert batch[t] == w.p * const.M + w.m


def test_hamming_table():
    t = WordTable(4, qpsk())
    h = t.hamming
    assert h.shape == (16, 16)
    np.testing.assert_array_equal(h, h.T)
    np.testing.assert_array_equal(np.diag(h), 0)
    assert h[0, 15] == 4
    assert t.labels[5] == "0101"
    assert t.word(5) == TxWord(1, 1)
