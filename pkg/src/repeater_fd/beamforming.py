"""Zero-forcing precoding and combining on the compound channels.

Channels are first normalized by the square root of their average power
(direct-path gain plus the amplitude-weighted repeater-path gains), then the
ZF directions come from the pseudo-inverse of the normalized channel matrix.
Returned precoder/combiner columns have exactly unit norm; the scalar
``c_dl``/``c_ul`` arrays carry the resulting effective channel amplitudes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, RepeaterWeights, compound_dl, compound_ul
from .scenario import LargeScaleFading

__all__ = [
    "DegenerateChannelError",
    "IllConditionedChannelError",
    "NormalizedChannels",
    "BeamformingSolution",
    "average_gain_dl",
    "average_gain_ul",
    "normalize_channels",
    "zf_directions",
    "build_beamforming",
]

# Gram matrices worse than this are treated as a failed drop.
CONDITION_LIMIT = 1e10


class DegenerateChannelError(ValueError):
    """A user has zero average channel power; normalization is undefined."""


class IllConditionedChannelError(RuntimeError):
    """The ZF Gram matrix is numerically singular; the drop should be redrawn."""


@dataclass(frozen=True)
class NormalizedChannels:
    """Unit-average-power compound channels, one column per user."""

    dl: np.ndarray        # (Mt, K_dl)
    ul: np.ndarray        # (Mr, K_ul)
    gamma_dl: np.ndarray  # (K_dl,) average DL compound gains
    gamma_ul: np.ndarray  # (K_ul,) average UL compound gains


@dataclass(frozen=True)
class BeamformingSolution:
    precoders: np.ndarray   # (Mt, K_dl), unit-norm columns
    combiners: np.ndarray   # (Mr, K_ul), unit-norm columns
    c_dl: np.ndarray        # (K_dl,) effective DL channel amplitudes
    c_ul: np.ndarray        # (K_ul,) effective UL channel amplitudes
    gamma_dl: np.ndarray    # (K_dl,)
    gamma_ul: np.ndarray    # (K_ul,)
    vbar_norms: np.ndarray  # (K_dl,) norms of the unnormalized ZF directions
    wbar_norms: np.ndarray  # (K_ul,)


def average_gain_dl(weights: RepeaterWeights, fading: LargeScaleFading) -> np.ndarray:
    """Average compound DL gains: direct gain plus amplitude^2-weighted hop products."""
    a2 = weights.alpha**2
    return fading.beta_bs_dl + a2 @ (fading.beta_rep_dl * fading.beta_bs_rep[:, None])


def average_gain_ul(weights: RepeaterWeights, fading: LargeScaleFading) -> np.ndarray:
    a2 = weights.alpha**2
    return fading.beta_ul_bs + (fading.beta_ul_rep * fading.beta_rep_bs[None, :]) @ a2


def normalize_channels(
    real: ChannelRealization,
    weights: RepeaterWeights,
    fading: LargeScaleFading,
) -> NormalizedChannels:
    mt, mr, k_dl, k_ul, _ = real.dims
    gamma_dl = average_gain_dl(weights, fading)
    gamma_ul = average_gain_ul(weights, fading)
    if np.any(gamma_dl <= 0.0) or np.any(gamma_ul <= 0.0):
        raise DegenerateChannelError("user with zero average compound gain")
    dl = np.empty((mt, k_dl), dtype=complex)
    for k in range(k_dl):
        dl[:, k] = compound_dl(real, weights, k) / np.sqrt(gamma_dl[k])
    ul = np.empty((mr, k_ul), dtype=complex)
    for q in range(k_ul):
        ul[:, q] = compound_ul(real, weights, q) / np.sqrt(gamma_ul[q])
    return NormalizedChannels(dl=dl, ul=ul, gamma_dl=gamma_dl, gamma_ul=gamma_ul)


def zf_directions(channels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ZF directions for a (M, K) channel matrix.

    Returns (unit-norm columns, norms of the raw pseudo-inverse columns).
    Raises :class:`IllConditionedChannelError` when the Gram matrix condition
    number exceeds ``CONDITION_LIMIT``.
    """
    m, k = channels.shape
    if k == 0:
        return np.zeros((m, 0), dtype=complex), np.zeros(0)
    gram = channels.conj().T @ channels
    if np.linalg.cond(gram) > CONDITION_LIMIT:
        raise IllConditionedChannelError("ZF Gram matrix condition number too large")
    raw = channels @ np.linalg.solve(gram, np.eye(k, dtype=complex))
    norms = np.linalg.norm(raw, axis=0)
    return raw / norms, norms


def build_beamforming(
    real: ChannelRealization,
    weights: RepeaterWeights,
    fading: LargeScaleFading,
) -> BeamformingSolution:
    nc = normalize_channels(real, weights, fading)
    precoders, vbar_norms = zf_directions(nc.dl)
    combiners, wbar_norms = zf_directions(nc.ul)
    with np.errstate(divide="ignore", invalid="ignore"):
        c_dl = np.sqrt(nc.gamma_dl) / vbar_norms if vbar_norms.size else np.zeros(0)
        c_ul = np.sqrt(nc.gamma_ul) / wbar_norms if wbar_norms.size else np.zeros(0)
    return BeamformingSolution(
        precoders=precoders,
        combiners=combiners,
        c_dl=c_dl,
        c_ul=c_ul,
        gamma_dl=nc.gamma_dl,
        gamma_ul=nc.gamma_ul,
        vbar_norms=vbar_norms,
        wbar_norms=wbar_norms,
    )
