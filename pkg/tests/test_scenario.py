"""Geometry sampling, path-loss model, and configuration validation."""
import numpy as np
import pytest

from repeater_fd.scenario import (
    LINK_CLASSES,
    PathLossParams,
    ScenarioConfig,
    default_pathloss,
    derive_fading,
    sample_geometry,
)


def small_config(**kw):
    args = dict(
        bs_tx_antennas=4,
        bs_rx_antennas=4,
        num_dl_users=2,
        num_ul_users=2,
        num_repeaters=3,
    )
    args.update(kw)
    return ScenarioConfig(**args)


# ---------------------------------------------------------------------------
# Path loss
# ---------------------------------------------------------------------------

def test_reference_distance_anchor():
    pl = PathLossParams(ref_gain_db=-30.0, ref_distance=1.0, exponent=3.67)
    assert pl.gain(1.0) == pytest.approx(1e-3, rel=1e-12)


def test_log_distance_hand_value():
    # At ten reference distances the gain drops by exactly the exponent decade.
    pl = PathLossParams(ref_gain_db=-30.0, ref_distance=1.0, exponent=3.67)
    expected = 10.0 ** (-30.0 / 10.0) * 10.0 ** (-3.67)
    assert pl.gain(10.0) == pytest.approx(expected, rel=1e-12)


def test_distance_floor_at_reference():
    pl = PathLossParams(ref_gain_db=-20.0, ref_distance=2.0, exponent=3.0)
    ref = 10.0 ** (-20.0 / 10.0)
    assert pl.gain(0.0) == pytest.approx(ref, rel=1e-12)
    assert pl.gain(1.99) == pytest.approx(ref, rel=1e-12)


def test_monotone_in_distance():
    pl = PathLossParams()
    d = np.linspace(0.0, 40.0, 200)
    g = pl.gain(d)
    assert np.all(np.diff(g) <= 0.0)


def test_nonpositive_reference_distance_rejected():
    with pytest.raises(ValueError):
        PathLossParams(ref_distance=0.0)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def test_geometry_inside_area_bs_centered():
    config = ScenarioConfig()
    geo = sample_geometry(config, np.random.default_rng(3))
    assert np.allclose(geo.bs, [10.0, 10.0])
    for pts in (geo.repeaters, geo.dl_users, geo.ul_users):
        assert np.all(pts >= 0.0) and np.all(pts <= 20.0)
    assert geo.repeaters.shape == (32, 2)
    assert geo.dl_users.shape == (5, 2)
    assert geo.ul_users.shape == (5, 2)


def test_geometry_empty_deployment():
    config = ScenarioConfig(num_dl_users=0, num_ul_users=0, num_repeaters=0)
    geo = sample_geometry(config, np.random.default_rng(0))
    assert geo.repeaters.shape == (0, 2)
    assert geo.dl_users.shape == (0, 2)
    assert geo.ul_users.shape == (0, 2)


def test_geometry_deterministic():
    config = small_config()
    a = sample_geometry(config, np.random.default_rng(11))
    b = sample_geometry(config, np.random.default_rng(11))
    assert np.array_equal(a.repeaters, b.repeaters)
    assert np.array_equal(a.dl_users, b.dl_users)
    assert np.array_equal(a.ul_users, b.ul_users)


def test_user_positions_stable_under_repeater_count():
    # Each node category has its own substream.
    a = sample_geometry(small_config(num_repeaters=1), np.random.default_rng(7))
    b = sample_geometry(small_config(num_repeaters=16), np.random.default_rng(7))
    assert np.array_equal(a.dl_users, b.dl_users)
    assert np.array_equal(a.ul_users, b.ul_users)


# ---------------------------------------------------------------------------
# Fading
# ---------------------------------------------------------------------------

def test_fading_matches_distances():
    config = small_config()
    geo = sample_geometry(config, np.random.default_rng(5))
    fading = derive_fading(geo, config)
    pl = config.pathloss["bs_ue"]
    for k in range(config.num_dl_users):
        d = np.linalg.norm(geo.dl_users[k] - geo.bs)
        assert fading.beta_bs_dl[k] == pytest.approx(pl.gain(d), rel=1e-12)
    pl_ru = config.pathloss["repeater_ue"]
    for ell in range(config.num_repeaters):
        for k in range(config.num_dl_users):
            d = np.linalg.norm(geo.repeaters[ell] - geo.dl_users[k])
            assert fading.beta_rep_dl[ell, k] == pytest.approx(
                pl_ru.gain(d), rel=1e-12
            )


def test_fading_shapes():
    config = small_config()
    fading = derive_fading(sample_geometry(config, np.random.default_rng(9)), config)
    assert fading.beta_bs_dl.shape == (2,)
    assert fading.beta_rep_dl.shape == (3, 2)
    assert fading.beta_bs_rep.shape == (3,)
    assert fading.beta_ul_bs.shape == (2,)
    assert fading.beta_ul_rep.shape == (2, 3)
    assert fading.beta_rep_bs.shape == (3,)
    assert fading.beta_cross.shape == (2, 2)


def test_bs_repeater_reciprocity():
    config = small_config()
    fading = derive_fading(sample_geometry(config, np.random.default_rng(13)), config)
    assert np.array_equal(fading.beta_rep_bs, fading.beta_bs_rep)


def test_coincident_nodes_floored():
    config = small_config(num_repeaters=1, num_dl_users=1, num_ul_users=1)
    geo = sample_geometry(config, np.random.default_rng(1))
    forced = type(geo)(
        bs=geo.bs,
        repeaters=np.array([geo.bs]),  # repeater on top of the BS
        dl_users=geo.dl_users,
        ul_users=geo.ul_users,
    )
    fading = derive_fading(forced, config)
    ref = 10.0 ** (config.pathloss["bs_repeater"].ref_gain_db / 10.0)
    assert fading.beta_bs_rep[0] == pytest.approx(ref, rel=1e-12)


# ---------------------------------------------------------------------------
# Configuration validation
# ---------------------------------------------------------------------------

def test_default_config_valid():
    config = ScenarioConfig()
    assert config.noise_power_dbm == pytest.approx(-96.0, abs=1e-9)
    assert set(config.pathloss) == set(LINK_CLASSES)
    assert np.allclose(config.power_coeffs(), 0.2)


def test_power_coeffs_custom():
    config = small_config(dl_power_coeffs=[0.7, 0.3])
    assert np.allclose(config.power_coeffs(), [0.7, 0.3])


def test_reject_more_users_than_antennas():
    with pytest.raises(ValueError):
        small_config(num_dl_users=5)
    with pytest.raises(ValueError):
        small_config(num_ul_users=5)


def test_reject_bad_power_coeffs():
    with pytest.raises(ValueError):
        small_config(dl_power_coeffs=[0.5])
    with pytest.raises(ValueError):
        small_config(dl_power_coeffs=[0.9, 0.2])
    with pytest.raises(ValueError):
        small_config(dl_power_coeffs=[0.5, -0.1])


def test_reject_negative_scalars():
    with pytest.raises(ValueError):
        small_config(noise_power=-1.0)
    with pytest.raises(ValueError):
        small_config(weight_dl=-0.5)
    with pytest.raises(ValueError):
        small_config(area_side=0.0)


def test_reject_missing_pathloss_class():
    pathloss = default_pathloss()
    del pathloss["ue_ue"]
    with pytest.raises(ValueError):
        small_config(pathloss=pathloss)


def test_replace_returns_new_config():
    config = small_config()
    other = config.replace(noise_power=1e-9)
    assert other.noise_power == 1e-9
    assert config.noise_power != 1e-9
