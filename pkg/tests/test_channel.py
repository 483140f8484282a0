"""Channel realization sampling, compound channels, and binary persistence."""
import numpy as np
import pytest

from repeater_fd.channel import (
    ChannelRealization,
    RepeaterWeights,
    compound_dl,
    compound_ul,
    load_realization,
    loopback_matrix,
    sample_realization,
    save_realization,
)
from repeater_fd.scenario import ScenarioConfig, derive_fading, sample_geometry


def make_setup(seed=0, **kw):
    args = dict(
        bs_tx_antennas=4,
        bs_rx_antennas=4,
        num_dl_users=2,
        num_ul_users=2,
        num_repeaters=3,
    )
    args.update(kw)
    config = ScenarioConfig(**args)
    rng = np.random.default_rng(seed)
    fading = derive_fading(sample_geometry(config, rng), config)
    real = sample_realization(fading, config, rng)
    return config, fading, real


# ---------------------------------------------------------------------------
# Sampling statistics
# ---------------------------------------------------------------------------

def test_shapes_at_paper_scale():
    config = ScenarioConfig()
    rng = np.random.default_rng(1)
    fading = derive_fading(sample_geometry(config, rng), config)
    real = sample_realization(fading, config, rng)
    assert real.h_bs_dl.shape == (5, 32)
    assert real.h_rep_dl.shape == (32, 5)
    assert real.h_bs_rep.shape == (32, 32)
    assert real.h_ul_bs.shape == (5, 32)
    assert real.h_ul_rep.shape == (5, 32)
    assert real.h_rep_bs.shape == (32, 32)
    assert real.h_si.shape == (32, 32)
    assert real.h_cross.shape == (5, 5)
    assert real.dims == (32, 32, 5, 5, 32)


def test_zero_variance_gives_zero_draws():
    config, fading, _ = make_setup()
    zeroed = type(fading)(
        beta_bs_dl=np.zeros_like(fading.beta_bs_dl),
        beta_rep_dl=fading.beta_rep_dl,
        beta_bs_rep=fading.beta_bs_rep,
        beta_ul_bs=fading.beta_ul_bs,
        beta_ul_rep=fading.beta_ul_rep,
        beta_rep_bs=fading.beta_rep_bs,
        beta_cross=fading.beta_cross,
    )
    real = sample_realization(zeroed, config, np.random.default_rng(2))
    assert np.all(real.h_bs_dl == 0.0)
    assert np.any(real.h_bs_rep != 0.0)


def test_sample_variance_matches_fading():
    # A single wide user channel gives 1e5 i.i.d. draws at variance 2.0;
    # the sample second moment must land within 2%.
    config = ScenarioConfig(
        bs_tx_antennas=100_000,
        bs_rx_antennas=1,
        num_dl_users=1,
        num_ul_users=1,
        num_repeaters=0,
        pathloss={
            name: type(p)(ref_gain_db=3.0103, ref_distance=1.0, exponent=0.0)
            for name, p in ScenarioConfig().pathloss.items()
        },
    )
    geo = sample_geometry(config, np.random.default_rng(0))
    fading = derive_fading(geo, config)
    assert fading.beta_bs_dl[0] == pytest.approx(2.0, rel=1e-4)
    real = sample_realization(fading, config, np.random.default_rng(42))
    var = float(np.mean(np.abs(real.h_bs_dl) ** 2))
    assert 1.96 < var < 2.04


def test_determinism_and_stream_independence():
    config, fading, _ = make_setup()
    a = sample_realization(fading, config, np.random.default_rng(5))
    b = sample_realization(fading, config, np.random.default_rng(5))
    for name in ("h_bs_dl", "h_rep_dl", "h_si", "h_cross"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_mismatched_fading_shapes_rejected():
    config, fading, _ = make_setup()
    bad = config.replace(num_repeaters=5)
    with pytest.raises(ValueError):
        sample_realization(fading, bad, np.random.default_rng(0))


def test_weights_validation():
    with pytest.raises(ValueError):
        RepeaterWeights(np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        RepeaterWeights(np.array([[1.0]]))
    with pytest.raises(ValueError):
        RepeaterWeights(np.array([np.inf]))
    assert np.array_equal(RepeaterWeights.zeros(3).alpha, np.zeros(3))


# ---------------------------------------------------------------------------
# Compound channels
# ---------------------------------------------------------------------------

def test_zero_weights_give_direct_channel():
    config, fading, real = make_setup()
    w = RepeaterWeights.zeros(config.num_repeaters)
    for k in range(config.num_dl_users):
        assert np.array_equal(compound_dl(real, w, k), real.h_bs_dl[k])
    for q in range(config.num_ul_users):
        assert np.array_equal(compound_ul(real, w, q), real.h_ul_bs[q])


def test_single_repeater_algebra():
    # With one repeater and the direct path removed, the compound channel is
    # exactly alpha * (repeater-user coefficient) * (BS-repeater vector).
    config, fading, real = make_setup(num_repeaters=1)
    amputated = ChannelRealization(
        h_bs_dl=np.zeros_like(real.h_bs_dl),
        h_rep_dl=real.h_rep_dl,
        h_bs_rep=real.h_bs_rep,
        h_ul_bs=real.h_ul_bs,
        h_ul_rep=real.h_ul_rep,
        h_rep_bs=real.h_rep_bs,
        h_si=real.h_si,
        h_cross=real.h_cross,
    )
    w = RepeaterWeights(np.array([2.5]))
    got = compound_dl(amputated, w, 1)
    want = 2.5 * real.h_rep_dl[0, 1] * real.h_bs_rep[0]
    assert np.allclose(got, want, rtol=1e-15, atol=0.0)


def test_compound_matches_naive_summation():
    config, fading, real = make_setup(num_repeaters=6, seed=3)
    rng = np.random.default_rng(8)
    w = RepeaterWeights(rng.uniform(0.0, 3.0, size=6))
    for k in range(config.num_dl_users):
        naive = real.h_bs_dl[k].copy()
        for ell in range(6):
            naive = naive + w.alpha[ell] * real.h_rep_dl[ell, k] * real.h_bs_rep[ell]
        assert np.allclose(compound_dl(real, w, k), naive, rtol=1e-12)
    for q in range(config.num_ul_users):
        naive = real.h_ul_bs[q].copy()
        for ell in range(6):
            naive = naive + w.alpha[ell] * real.h_ul_rep[q, ell] * real.h_rep_bs[ell]
        assert np.allclose(compound_ul(real, w, q), naive, rtol=1e-12)


def test_compound_linear_in_weights():
    config, fading, real = make_setup()
    w = RepeaterWeights(np.array([1.0, 2.0, 0.5]))
    base = compound_dl(real, RepeaterWeights.zeros(3), 0)
    part = compound_dl(real, w, 0) - base
    doubled = compound_dl(real, RepeaterWeights(2.0 * w.alpha), 0) - base
    assert np.allclose(doubled, 2.0 * part, rtol=1e-12)


def test_loopback_matrix_outer_product():
    config, fading, real = make_setup()
    m = loopback_matrix(real, 1)
    assert m.shape == (4, 4)
    want = real.h_rep_bs[1, 2] * real.h_bs_rep[1, 3]
    assert abs(m[2, 3] - want) <= 1e-15 * abs(want)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    config, fading, real = make_setup(seed=9)
    path = tmp_path / "drop.chan"
    save_realization(real, path)
    loaded = load_realization(path)
    for name in (
        "h_bs_dl", "h_rep_dl", "h_bs_rep", "h_ul_bs",
        "h_ul_rep", "h_rep_bs", "h_si", "h_cross",
    ):
        assert np.array_equal(getattr(real, name), getattr(loaded, name))


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.chan"
    path.write_bytes(b"NOTACHAN" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_realization(path)


def test_load_rejects_truncation(tmp_path):
    config, fading, real = make_setup()
    path = tmp_path / "drop.chan"
    save_realization(real, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(ValueError):
        load_realization(path)
