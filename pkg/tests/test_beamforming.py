"""Zero-forcing beamforming on compound channels."""
import numpy as np
import pytest

from repeater_fd.beamforming import (
    DegenerateChannelError,
    IllConditionedChannelError,
    average_gain_dl,
    average_gain_ul,
    build_beamforming,
    normalize_channels,
    zf_directions,
)
from repeater_fd.channel import (
    RepeaterWeights,
    compound_dl,
    compound_ul,
    sample_realization,
)
from repeater_fd.scenario import ScenarioConfig, derive_fading, sample_geometry


def make_setup(seed=0, **kw):
    args = dict(
        bs_tx_antennas=8,
        bs_rx_antennas=8,
        num_dl_users=3,
        num_ul_users=3,
        num_repeaters=4,
    )
    args.update(kw)
    config = ScenarioConfig(**args)
    rng = np.random.default_rng(seed)
    fading = derive_fading(sample_geometry(config, rng), config)
    real = sample_realization(fading, config, rng)
    return config, fading, real


def random_weights(config, seed=1, high=2.0):
    rng = np.random.default_rng(seed)
    return RepeaterWeights(rng.uniform(0.0, high, size=config.num_repeaters))


# ---------------------------------------------------------------------------
# Average gains and normalization
# ---------------------------------------------------------------------------

def test_average_gain_zero_weights():
    config, fading, _ = make_setup()
    w = RepeaterWeights.zeros(config.num_repeaters)
    assert np.allclose(average_gain_dl(w, fading), fading.beta_bs_dl, rtol=1e-15)
    assert np.allclose(average_gain_ul(w, fading), fading.beta_ul_bs, rtol=1e-15)


def test_average_gain_naive_summation():
    config, fading, _ = make_setup()
    w = random_weights(config)
    for k in range(config.num_dl_users):
        want = fading.beta_bs_dl[k]
        for ell in range(config.num_repeaters):
            want += (
                w.alpha[ell] ** 2
                * fading.beta_rep_dl[ell, k]
                * fading.beta_bs_rep[ell]
            )
        assert average_gain_dl(w, fading)[k] == pytest.approx(want, rel=1e-12)
    for q in range(config.num_ul_users):
        want = fading.beta_ul_bs[q]
        for ell in range(config.num_repeaters):
            want += (
                w.alpha[ell] ** 2
                * fading.beta_ul_rep[q, ell]
                * fading.beta_rep_bs[ell]
            )
        assert average_gain_ul(w, fading)[q] == pytest.approx(want, rel=1e-12)


def test_normalization_round_trip():
    # Un-normalizing with sqrt(gamma) must recover the compound channel.
    config, fading, real = make_setup()
    w = random_weights(config)
    nc = normalize_channels(real, w, fading)
    for k in range(config.num_dl_users):
        recovered = nc.dl[:, k] * np.sqrt(nc.gamma_dl[k])
        assert np.allclose(recovered, compound_dl(real, w, k), rtol=1e-12)
    for q in range(config.num_ul_users):
        recovered = nc.ul[:, q] * np.sqrt(nc.gamma_ul[q])
        assert np.allclose(recovered, compound_ul(real, w, q), rtol=1e-12)


def test_zero_average_gain_rejected():
    config, fading, real = make_setup(num_repeaters=0)
    broken = type(fading)(
        beta_bs_dl=np.zeros_like(fading.beta_bs_dl),
        beta_rep_dl=fading.beta_rep_dl,
        beta_bs_rep=fading.beta_bs_rep,
        beta_ul_bs=fading.beta_ul_bs,
        beta_ul_rep=fading.beta_ul_rep,
        beta_rep_bs=fading.beta_rep_bs,
        beta_cross=fading.beta_cross,
    )
    with pytest.raises(DegenerateChannelError):
        normalize_channels(real, RepeaterWeights.zeros(0), broken)


# ---------------------------------------------------------------------------
# ZF directions
# ---------------------------------------------------------------------------

def test_zf_single_user_is_matched_filter():
    rng = np.random.default_rng(3)
    h = (rng.standard_normal((6, 1)) + 1j * rng.standard_normal((6, 1))) / np.sqrt(2)
    v, norms = zf_directions(h)
    want = h[:, 0] / np.linalg.norm(h[:, 0])
    assert np.allclose(v[:, 0], want, rtol=1e-12)
    assert norms[0] == pytest.approx(1.0 / np.linalg.norm(h[:, 0]), rel=1e-12)


def test_zf_orthonormal_channels_passthrough():
    # For orthonormal columns the pseudo-inverse is the matrix itself.
    rng = np.random.default_rng(4)
    a = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
    q, _ = np.linalg.qr(a)
    v, norms = zf_directions(q)
    assert np.allclose(v, q, rtol=1e-10, atol=1e-12)
    assert np.allclose(norms, 1.0, rtol=1e-10)


def test_zf_empty_matrix():
    v, norms = zf_directions(np.zeros((5, 0), dtype=complex))
    assert v.shape == (5, 0)
    assert norms.shape == (0,)


def test_zf_ill_conditioned_rejected():
    h = np.ones((4, 2), dtype=complex)
    h[:, 1] = h[:, 0] * (1.0 + 1e-14)
    with pytest.raises(IllConditionedChannelError):
        zf_directions(h)


# ---------------------------------------------------------------------------
# Full solutions
# ---------------------------------------------------------------------------

def test_unit_norm_columns():
    config, fading, real = make_setup()
    bf = build_beamforming(real, random_weights(config), fading)
    assert np.allclose(np.linalg.norm(bf.precoders, axis=0), 1.0, atol=1e-10)
    assert np.allclose(np.linalg.norm(bf.combiners, axis=0), 1.0, atol=1e-10)


def test_cross_terms_nulled():
    # |h_k' . v_k| / |h_k . v_k| below 1e-9 for all off-diagonal pairs.
    config, fading, real = make_setup(seed=6)
    w = random_weights(config, seed=7)
    bf = build_beamforming(real, w, fading)
    for k in range(config.num_dl_users):
        h = compound_dl(real, w, k).conj()
        diag = abs(h @ bf.precoders[:, k])
        for kk in range(config.num_dl_users):
            if kk != k:
                assert abs(h @ bf.precoders[:, kk]) / diag < 1e-9
    for q in range(config.num_ul_users):
        h = compound_ul(real, w, q)
        diag = abs(bf.combiners[:, q].conj() @ h)
        for qq in range(config.num_ul_users):
            if qq != q:
                assert abs(bf.combiners[:, qq].conj() @ h) / diag < 1e-9


def test_effective_amplitude_identity():
    # c * |vbar| == sqrt(gamma): the effective amplitude absorbs the
    # normalization exactly.
    config, fading, real = make_setup(seed=8)
    bf = build_beamforming(real, random_weights(config, seed=9), fading)
    assert np.allclose(bf.c_dl * bf.vbar_norms, np.sqrt(bf.gamma_dl), rtol=1e-12)
    assert np.allclose(bf.c_ul * bf.wbar_norms, np.sqrt(bf.gamma_ul), rtol=1e-12)


def test_effective_gain_matches_direct_projection():
    # h_k^dagger v_k equals c_dl[k] (up to phase) by the ZF construction.
    config, fading, real = make_setup(seed=10)
    w = random_weights(config, seed=11)
    bf = build_beamforming(real, w, fading)
    for k in range(config.num_dl_users):
        gain = compound_dl(real, w, k).conj() @ bf.precoders[:, k]
        assert abs(gain) == pytest.approx(bf.c_dl[k], rel=1e-9)
