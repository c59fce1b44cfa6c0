import math
from pathlib import Path

import numpy as np
import pytest

from recantsm.channel import TruncatedLaplacian, Uniform, VonMises
from recantsm.config import (
    AngleLaw,
    ConfigError,
    PatternSpec,
    format_config,
    parse_config,
    parse_config_text,
)
from recantsm.patterns import EXCITATIONS, save_pattern, synth_array_pattern

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.ini"))

MINIMAL = """
[patterns]
p0 = excitation A
p1 = excitation C
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.rays == 64
    assert cfg.model.K == 64
    assert cfg.model.rx_spacing == pytest.approx(0.5 * cfg.model.wavelength)
    assert cfg.analysis.rel_tol == 1e-3
    assert cfg.n_r == 1 and cfg.constellation == "bpsk"
    assert cfg.pattern_pool.P == 2
    assert cfg.bound_kinds == ("exact", "high_snr", "asymptotic", "asymptotic_high_snr")


def test_angles_are_read_in_degrees():
    cfg = parse_config_text(
        MINIMAL
        + "[channel]\naod_theta = laplacian 45 18\naod_phi = vonmises 90 4\n"
        + "aoa_theta = uniform\naoa_phi = uniform -90 90\n"
    )
    m = cfg.model
    assert m.aod_theta == TruncatedLaplacian(math.pi / 4, math.pi / 10)
    assert m.aod_phi == VonMises(math.pi / 2, 4.0)
    assert m.aoa_theta == Uniform(0.0, math.pi)
    assert m.aoa_phi == Uniform(-math.pi / 2, math.pi / 2)


def test_rx_spacing_is_in_wavelengths():
    cfg = parse_config_text(MINIMAL + "[channel]\nwavelength = 0.1\nrx_spacing = 0.25\n")
    assert cfg.model.kd == pytest.approx(math.pi / 2)


def test_pattern_sources(tmp_path):
    rp = synth_array_pattern(EXCITATIONS["B"], resolution_deg=5.0)
    save_pattern(rp, tmp_path / "b.rp")
    text = """
[patterns]
resolution_deg = 5
gain_db = -3
p0 = matrix 0++0/0++0/0--0/0--0
p1 = excitation A rot=180 gain_db=-2
p2 = file b.rp
p3 = isotropic
"""
    (tmp_path / "c.ini").write_text(text)
    pool = parse_config(tmp_path / "c.ini").pattern_pool
    ref_a = synth_array_pattern(EXCITATIONS["A"], resolution_deg=5.0)
    ref_e = synth_array_pattern(EXCITATIONS["E"], resolution_deg=5.0)
    np.testing.assert_allclose(pool[0].gain, ref_a.gain * 10**-0.3)
    np.testing.assert_allclose(pool[1].gain, ref_e.gain * 10**-0.5)
    np.testing.assert_allclose(pool[2].gain, rp.gain * 10**-0.3, rtol=1e-12)
    np.testing.assert_allclose(pool[3].gain, 10**-0.3)


def test_pattern_spec_round_trip():
    for text in ("excitation A", "excitation B rot=270 gain_db=-1.5", "matrix 0+00/0000/0000/000-", "isotropic"):
        assert PatternSpec.parse(PatternSpec.parse(text).format()) == PatternSpec.parse(text)
    with pytest.raises(ValueError):
        PatternSpec.parse("excitation Z")
    with pytest.raises(ValueError):
        PatternSpec.parse("excitation A rot=45")
    with pytest.raises(ValueError):
        PatternSpec.parse("isotropic rot=90")
    with pytest.raises(ValueError):
        PatternSpec.parse("excitation A colour=red")


def test_angle_law_arity():
    assert AngleLaw.parse("fixed 90").build(True).value == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        AngleLaw.parse("laplacian 45")
    with pytest.raises(ValueError):
        AngleLaw.parse("cauchy 0 1")


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_shipped_configs_round_trip(path):
    cfg = parse_config(path)
    again = parse_config_text(format_config(cfg), base_dir=path.parent)
    assert again == cfg
    assert format_config(again) == format_config(cfg)


def test_round_trip_with_every_option():
    text = (
        "[experiment]\nn_r = 2\nconstellation = qpsk_gray\nsnr_db = 1.5 2.5\nfading = fixed\nthreads = 3\n"
        "[channel]\naoa_theta = fixed 80\naod_phi = gaussian 10 20\n"
        "[patterns]\np0 = excitation A\np1 = excitation D rot=90 gain_db=-1\n"
        "[analysis]\nkinds = asymptotic\nquad_theta_nodes = 48\ncheck_convergence = yes\n"
        "[optimize]\nchoose = 2\nranking_snr_db = 25\n"
    )
    cfg = parse_config_text(text)
    assert cfg.analysis.check_convergence is True
    assert parse_config_text(format_config(cfg)) == cfg


def error_for(text):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text, source="x.ini")
    return str(exc.value)


def test_errors_name_key_and_line():
    msg = error_for("[experiment]\nseed = 1\nn_r = two\n" + MINIMAL)
    assert "x.ini:3" in msg and "n_r" in msg
    msg = error_for(MINIMAL + "[channel]\naod_theta = laplacian 45 0\n")
    assert "aod_theta" in msg and "x.ini:6" in msg


def test_choose_larger_than_pool_names_both_values():
    msg = error_for(MINIMAL + "[optimize]\nchoose = 4\n")
    assert "choose = 4" in msg and "2" in msg


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[experiment]\nn_r = 1\n", "at least one pattern"),
        (MINIMAL + "[experiment]\nbogus = 1\n", "bogus"),
        (MINIMAL + "[extras]\na = 1\n", "unknown section"),
        (MINIMAL + "[experiment]\nconstellation = 16qam\n", "constellation"),
        (MINIMAL + "[experiment]\nfading = slow\n", "fading"),
        (MINIMAL + "[experiment]\nmax_trials = 0\n", "max_trials"),
        ("[patterns]\np0 = excitation A\np2 = excitation C\n", "without gaps"),
        ("[patterns]\np0 = file missing.rp\n", "does not exist"),
        ("[patterns]\np0 = matrix 0+0/0000/0000/0000\n", "p0"),
        (MINIMAL + "[analysis]\nkinds = tight\n", "tight"),
        (MINIMAL + "[analysis]\nrel_tol = 2\n", "rel_tol"),
        (MINIMAL + "[experiment]\nn_r = 2\n[analysis]\nkinds = exact\n", "n_r = 1"),
        ("[patterns]\np0 = excitation A\np1 = excitation B\np2 = excitation C\n[optimize]\nchoose = 3\n", "power of two"),
        ("[patterns]\np0 = isotropic\n[experiment]\nconstellation = ssk\n", "two hypotheses"),
    ],
)
def test_invalid_configs(text, fragment):
    assert fragment in error_for(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/config.ini")


def test_sm_config_bridge():
    cfg = parse_config_text(MINIMAL + "[experiment]\nsnr_db = 0, 10\nseed = 5\n")
    sm = cfg.sm_config(seed=9)
    assert sm.snr_grid_db == (0.0, 10.0)
    assert sm.seed == 9 and sm.codebook.P == 2 and sm.bits_per_word == 2
