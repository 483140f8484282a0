"""Analytical SINR terms, the empirical estimator, and drop aggregation."""
import numpy as np
import pytest

from repeater_fd.beamforming import build_beamforming
from repeater_fd.channel import RepeaterWeights, sample_realization
from repeater_fd.performance import (
    SinrBreakdown,
    dl_sinr,
    empirical_sinr,
    evaluate_drop,
    repeater_input_power,
    ul_sinr,
)
from repeater_fd.scenario import ScenarioConfig, derive_fading, sample_geometry


def make_setup(seed=0, **kw):
    args = dict(
        bs_tx_antennas=6,
        bs_rx_antennas=6,
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


def zero_weights(config):
    return RepeaterWeights.zeros(config.num_repeaters)


# ---------------------------------------------------------------------------
# Degenerate analytical forms
# ---------------------------------------------------------------------------

def test_dl_single_user_no_interferers():
    config, fading, real = make_setup(num_dl_users=1, num_ul_users=0)
    w = zero_weights(config)
    bf = build_beamforming(real, w, fading)
    got = dl_sinr(0, real, w, bf, config)
    want = (
        config.power_coeffs()[0]
        * config.dl_power
        * abs(real.h_bs_dl[0].conj() @ bf.precoders[:, 0]) ** 2
        / config.noise_power
    )
    assert got.sinr == pytest.approx(want, rel=1e-12)
    assert got.interference["cross_link_or_si"] == 0.0
    assert got.interference["repeater_noise"] == 0.0


def test_dl_cross_term_is_direct_cross_power():
    # Zero weights: the cross-link term is exactly rho_ul |h_cross|^2.
    config, fading, real = make_setup(num_ul_users=1)
    w = zero_weights(config)
    bf = build_beamforming(real, w, fading)
    got = dl_sinr(0, real, w, bf, config)
    want = config.ul_power * abs(real.h_cross[0, 0]) ** 2
    assert got.interference["cross_link_or_si"] == pytest.approx(want, rel=1e-12)


def test_ul_clean_form():
    config, fading, real = make_setup(num_dl_users=0, si_attenuation=0.0)
    w = zero_weights(config)
    bf = build_beamforming(real, w, fading)
    got = ul_sinr(0, real, w, bf, config)
    wq = bf.combiners[:, 0]
    signal = config.ul_power * abs(wq.conj() @ real.h_ul_bs[0]) ** 2
    thermal = config.noise_power * np.linalg.norm(wq) ** 2
    assert got.signal == pytest.approx(signal, rel=1e-12)
    assert got.interference["cross_link_or_si"] == 0.0
    assert got.sinr == pytest.approx(
        signal / (thermal + got.interference["inter_user"]), rel=1e-12
    )


def test_ul_si_only_term():
    # No repeaters: the DL block reduces to the self-interference path alone.
    config, fading, real = make_setup(num_repeaters=0)
    w = zero_weights(config)
    bf = build_beamforming(real, w, fading)
    got = ul_sinr(1, real, w, bf, config)
    wq = bf.combiners[:, 1]
    si_gain = wq.conj() @ real.h_si @ bf.precoders
    want = config.dl_power * float(
        np.sum(
            config.power_coeffs()
            * config.si_attenuation**2
            * np.abs(si_gain) ** 2
        )
    )
    assert got.interference["cross_link_or_si"] == pytest.approx(want, rel=1e-12)
    assert got.interference["repeater_noise"] == 0.0


def test_zf_inter_user_residue_negligible():
    config, fading, real = make_setup(seed=4)
    rng = np.random.default_rng(5)
    w = RepeaterWeights(rng.uniform(0.0, 2.0, size=config.num_repeaters))
    bf = build_beamforming(real, w, fading)
    for k in range(config.num_dl_users):
        b = dl_sinr(k, real, w, bf, config)
        assert b.interference["inter_user"] <= 1e-16 * b.signal
    for q in range(config.num_ul_users):
        b = ul_sinr(q, real, w, bf, config)
        assert b.interference["inter_user"] <= 1e-16 * b.signal


def test_prelog_halves_se():
    config, fading, real = make_setup()
    w = zero_weights(config)
    bf = build_beamforming(real, w, fading)
    full = dl_sinr(0, real, w, bf, config)
    half = dl_sinr(0, real, w, bf, config, prelog=0.5)
    assert half.sinr == pytest.approx(full.sinr, rel=1e-15)
    assert half.se == pytest.approx(0.5 * full.se, rel=1e-12)


def test_se_monotone_in_sinr():
    lo = SinrBreakdown.build(1.0, {"thermal_noise": 1.0})
    hi = SinrBreakdown.build(2.0, {"thermal_noise": 1.0})
    assert hi.se > lo.se
    assert lo.se == pytest.approx(1.0)  # log2(1 + 1)


# ---------------------------------------------------------------------------
# Repeater input power
# ---------------------------------------------------------------------------

def test_input_power_no_users_is_noise():
    config, fading, real = make_setup(num_dl_users=0, num_ul_users=0)
    bf = build_beamforming(real, zero_weights(config), fading)
    psi = repeater_input_power(real, bf, config)
    assert np.allclose(psi, config.noise_power, rtol=1e-12)


def test_input_power_naive_summation():
    config, fading, real = make_setup(seed=7)
    bf = build_beamforming(real, zero_weights(config), fading)
    psi = repeater_input_power(real, bf, config)
    eta = config.power_coeffs()
    for ell in range(config.num_repeaters):
        want = config.noise_power
        for q in range(config.num_ul_users):
            want += config.ul_power * abs(real.h_ul_rep[q, ell]) ** 2
        for k in range(config.num_dl_users):
            proj = real.h_bs_rep[ell] @ bf.precoders[:, k]
            want += config.dl_power * eta[k] * abs(proj) ** 2
        assert psi[ell] == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# Empirical estimator
# ---------------------------------------------------------------------------

def test_empirical_matches_analytical():
    config, fading, real = make_setup(seed=11)
    rng = np.random.default_rng(12)
    w = RepeaterWeights(rng.uniform(0.0, 1.5, size=config.num_repeaters))
    bf = build_beamforming(real, w, fading)
    for side, idx in (("dl", 0), ("ul", 1)):
        analytic = (
            dl_sinr(idx, real, w, bf, config)
            if side == "dl"
            else ul_sinr(idx, real, w, bf, config)
        )
        emp = empirical_sinr(
            idx, side, real, w, bf, config, 200_000, np.random.default_rng(13)
        )
        tol = max(4.0 * emp.std_error, 0.04 * analytic.sinr)
        assert abs(emp.sinr - analytic.sinr) <= tol
        assert not emp.capped


def test_empirical_capped_without_noise_or_interference():
    config, fading, real = make_setup(
        num_dl_users=0, num_ul_users=1, num_repeaters=0, noise_power=0.0
    )
    w = zero_weights(config)
    bf = build_beamforming(real, w, fading)
    emp = empirical_sinr(0, "ul", real, w, bf, config, 10_000, np.random.default_rng(1))
    assert emp.capped


def test_empirical_rejects_small_sample_count():
    config, fading, real = make_setup()
    w = zero_weights(config)
    bf = build_beamforming(real, w, fading)
    with pytest.raises(ValueError):
        empirical_sinr(0, "dl", real, w, bf, config, 100, np.random.default_rng(0))
    with pytest.raises(ValueError):
        empirical_sinr(0, "up", real, w, bf, config, 10_000, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Drop aggregation
# ---------------------------------------------------------------------------

def test_evaluate_drop_objective_form():
    config, fading, real = make_setup(seed=15)
    config = config.replace(weight_dl=2.0, weight_ul=0.5)
    w = zero_weights(config)
    bf = build_beamforming(real, w, fading)
    perf = evaluate_drop(real, w, bf, config)
    assert perf.dl_se.shape == (2,)
    assert perf.ul_se.shape == (2,)
    assert perf.min_dl_se == pytest.approx(perf.dl_se.min())
    assert perf.min_ul_se == pytest.approx(perf.ul_se.min())
    assert perf.objective == pytest.approx(
        2.0 * perf.min_dl_se + 0.5 * perf.min_ul_se, rel=1e-12
    )
    assert perf.dl[0].se == pytest.approx(perf.dl_se[0])
