import csv
import io

import numpy as np
import pytest
from statsmodels.stats.proportion import proportion_confint

from recantsm.channel import ChannelModel, TruncatedLaplacian, Uniform, VonMises
from recantsm.modem import bpsk, qpsk, ssk
from recantsm.montecarlo import (
    BER_COLUMNS,
    BerCurve,
    SmConfig,
    ber_csv,
    estimate_diversity,
    simulate_ber,
    wilson_interval,
)
from recantsm.patterns import EXCITATIONS, Codebook, isotropic, synth_array_pattern

MODEL = ChannelModel(
    64,
    1.0,
    TruncatedLaplacian(np.pi / 4, 0.3),
    VonMises(0.0, 4.0),
    TruncatedLaplacian(np.pi / 2, 0.5),
    Uniform(),
)
PAIR = Codebook((synth_array_pattern(EXCITATIONS["A"]), synth_array_pattern(EXCITATIONS["C"])))


def config(**kw):
    base = dict(
        codebook=PAIR,
        model=MODEL,
        n_r=1,
        constellation=bpsk(),
        snr_grid_db=(0.0, 10.0, 20.0),
        max_trials=20_000,
        target_errors=200,
        seed=7,
        block_size=5_000,
    )
    base.update(kw)
    return SmConfig(**base)


def test_rayleigh_bpsk_oracle():
    cfg = config(codebook=Codebook((isotropic(),)), snr_grid_db=(0.0, 5.0, 10.0), target_errors=10**9)
    curve = simulate_ber(cfg)
    rho = 10 ** (curve.snr_db / 10)
    ref = 0.5 * (1 - np.sqrt(rho / (rho + 1)))
    half = 0.5 * (curve.ci_hi - curve.ci_lo)
    assert np.all(np.abs(curve.ber - ref) <= 3 * half)


def test_identical_patterns_are_a_coin_flip():
    iso = isotropic()
    cfg = config(codebook=Codebook((iso, iso)), constellation=ssk(), snr_grid_db=(0.0, 30.0), max_trials=10_000)
    curve = simulate_ber(cfg)
    assert np.all(curve.ci_lo <= 0.5) and np.all(curve.ci_hi >= 0.5)


def test_high_snr_ber_is_small_and_decreasing():
    curve = simulate_ber(config(snr_grid_db=(20.0, 30.0, 40.0), max_trials=60_000))
    assert curve.ber[-1] < 1e-3
    assert np.all(np.diff(curve.ber) < 0)


def test_stopping_rule():
    curve = simulate_ber(config(snr_grid_db=(0.0, 20.0), max_trials=12_000, target_errors=300))
    # low SNR stops on errors after the first block, high SNR on the trial cap
    assert curve.trials[0] == 5_000 and curve.bit_errors[0] >= 300
    assert curve.trials[1] == 12_000 and curve.bit_errors[1] < 300


def test_seed_determinism_and_thread_independence():
    a = simulate_ber(config(seed=3))
    b = simulate_ber(config(seed=3))
    c = simulate_ber(config(seed=3, threads=3))
    d = simulate_ber(config(seed=4))
    assert ber_csv(a) == ber_csv(b) == ber_csv(c)
    assert ber_csv(a) != ber_csv(d)


def test_fixed_geometry_mode_runs_and_is_deterministic():
    a = simulate_ber(config(fading="fixed", snr_grid_db=(10.0,), max_trials=5_000))
    b = simulate_ber(config(fading="fixed", snr_grid_db=(10.0,), max_trials=5_000))
    assert ber_csv(a) == ber_csv(b)
    assert 0 < a.ber[0] < 0.5


def test_qpsk_four_patterns_runs():
    cb = Codebook(tuple(synth_array_pattern(EXCITATIONS[k]) for k in "ABCD"))
    curve = simulate_ber(config(codebook=cb, constellation=qpsk(), snr_grid_db=(10.0,), max_trials=5_000))
    assert curve.bits_per_word == 4
    assert 0 < curve.ber[0] < 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        config(snr_grid_db=())
    with pytest.raises(ValueError):
        config(max_trials=0)
    with pytest.raises(ValueError):
        config(target_errors=0)
    with pytest.raises(ValueError):
        config(fading="slow")
    with pytest.raises(ValueError):
        config(codebook=Codebook((isotropic(),)), constellation=ssk())
    with pytest.raises(ValueError):
        config(codebook=Codebook((isotropic(),) * 3))


def test_wilson_matches_reference_implementation():
    for k, n in [(0, 100), (3, 1000), (200, 20000), (50, 60)]:
        lo, hi = wilson_interval(k, n)
        ref = proportion_confint(k, n, alpha=0.05, method="wilson")
        assert lo == pytest.approx(ref[0], abs=1e-12)
        assert hi == pytest.approx(ref[1], abs=1e-12)


def synthetic(snr_db, ber):
    bits = 10**12
    return BerCurve(np.asarray(snr_db), np.full(len(snr_db), bits), np.round(np.asarray(ber) * bits), 1)


def test_diversity_of_synthetic_curves():
    snr = np.arange(0, 41, 5.0)
    rho = 10 ** (snr / 10)
    assert estimate_diversity(synthetic(snr, 1 / rho)) == pytest.approx(1.0, abs=1e-6)
    assert estimate_diversity(synthetic(snr, 0.3 / rho**2), (10, 40)) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(ValueError):
        estimate_diversity(synthetic(snr, 1 / rho), (41, 50))


def test_bercurve_invariants():
    with pytest.raises(ValueError):
        BerCurve(np.array([0.0]), np.array([10]), np.array([30]), 2)
    c = BerCurve(np.array([0.0, 5.0]), np.array([10, 10]), np.array([0, 20]), 2)
    np.testing.assert_allclose(c.ber, [0.0, 1.0])
    assert np.all((c.ci_lo <= c.ber) & (c.ber <= c.ci_hi))


def test_csv_contract():
    curve = simulate_ber(config(snr_grid_db=(0.0, 5.0), max_trials=5_000))
    rows = list(csv.DictReader(io.StringIO(ber_csv(curve))))
    assert tuple(rows[0].keys()) == BER_COLUMNS
    for row, t, e in zip(rows, curve.trials, curve.bit_errors):
        assert int(row["trials"]) == t and int(row["bit_errors"]) == e
        ber = float(row["ber"])
        assert 0 <= float(row["ci_lo"]) <= ber <= float(row["ci_hi"]) <= 1
