"""Small-scale channel realizations and compound repeater-assisted channels.

A realization holds every i.i.d. Rayleigh draw for one drop.  Each array is
sampled from its own RNG substream in a fixed order, so realizations stay
reproducible when the repeater count changes (a zero-repeater configuration
sees exactly the same user-side draws for the same seed).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .scenario import LargeScaleFading, ScenarioConfig

__all__ = [
    "ChannelRealization",
    "RepeaterWeights",
    "sample_realization",
    "compound_dl",
    "compound_ul",
    "loopback_matrix",
    "save_realization",
    "load_realization",
]


@dataclass(frozen=True)
class RepeaterWeights:
    """Nonnegative amplitude weights, one per repeater."""

    alpha: np.ndarray  # (L,)

    def __post_init__(self) -> None:
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1:
            raise ValueError("weights must be a 1-D array")
        if not np.all(np.isfinite(a)) or np.any(a < 0.0):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def zeros(cls, num_repeaters: int) -> "RepeaterWeights":
        return cls(np.zeros(num_repeaters))


@dataclass(frozen=True)
class ChannelRealization:
    """All small-scale coefficients of one drop.

    Shapes: L repeaters, K_dl/K_ul users, Mt/Mr BS antennas.  ``h_si`` has
    unit-variance entries; the self-interference attenuation is applied at the
    point of use, never baked into the draw.
    """

    h_bs_dl: np.ndarray   # (K_dl, Mt) BS array -> DL user
    h_rep_dl: np.ndarray  # (L, K_dl)  repeater -> DL user
    h_bs_rep: np.ndarray  # (L, Mt)    BS array -> repeater
    h_ul_bs: np.ndarray   # (K_ul, Mr) UL user -> BS array
    h_ul_rep: np.ndarray  # (K_ul, L)  UL user -> repeater
    h_rep_bs: np.ndarray  # (L, Mr)    repeater -> BS array
    h_si: np.ndarray      # (Mr, Mt)   BS self-interference, unit variance
    h_cross: np.ndarray   # (K_ul, K_dl) UL user -> DL user

    def __post_init__(self) -> None:
        k_dl, mt = self.h_bs_dl.shape
        k_ul, mr = self.h_ul_bs.shape
        n_rep = self.h_bs_rep.shape[0]
        expected = {
            "h_rep_dl": (n_rep, k_dl),
            "h_bs_rep": (n_rep, mt),
            "h_ul_rep": (k_ul, n_rep),
            "h_rep_bs": (n_rep, mr),
            "h_si": (mr, mt),
            "h_cross": (k_ul, k_dl),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        """(Mt, Mr, K_dl, K_ul, L)."""
        return (
            self.h_bs_dl.shape[1],
            self.h_ul_bs.shape[1],
            self.h_bs_dl.shape[0],
            self.h_ul_bs.shape[0],
            self.h_bs_rep.shape[0],
        )


def _cn(rng: np.random.Generator, variance, shape) -> np.ndarray:
    """Circularly symmetric complex Gaussian draws with the given per-entry variance."""
    var = np.broadcast_to(np.asarray(variance, dtype=float), shape)
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_realization(
    fading: LargeScaleFading, config: ScenarioConfig, rng: np.random.Generator
) -> ChannelRealization:
    """Draw one full realization; deterministic for a given generator state."""
    mt, mr = config.bs_tx_antennas, config.bs_rx_antennas
    k_dl, k_ul, n_rep = config.num_dl_users, config.num_ul_users, config.num_repeaters
    if fading.beta_bs_dl.shape != (k_dl,) or fading.beta_bs_rep.shape != (n_rep,):
        raise ValueError("fading shapes inconsistent with the configuration")
    # Fixed spawn order keeps each array on its own stream; do not reorder.
    streams = rng.spawn(8)
    return ChannelRealization(
        h_bs_dl=_cn(streams[0], fading.beta_bs_dl[:, None], (k_dl, mt)),
        h_rep_dl=_cn(streams[1], fading.beta_rep_dl, (n_rep, k_dl)),
        h_bs_rep=_cn(streams[2], fading.beta_bs_rep[:, None], (n_rep, mt)),
        h_ul_bs=_cn(streams[3], fading.beta_ul_bs[:, None], (k_ul, mr)),
        h_ul_rep=_cn(streams[4], fading.beta_ul_rep, (k_ul, n_rep)),
        h_rep_bs=_cn(streams[5], fading.beta_rep_bs[:, None], (n_rep, mr)),
        h_si=_cn(streams[6], 1.0, (mr, mt)),
        h_cross=_cn(streams[7], fading.beta_cross, (k_ul, k_dl)),
    )


# ---------------------------------------------------------------------------
# Compound channels
# ---------------------------------------------------------------------------

def compound_dl(
    real: ChannelRealization, weights: RepeaterWeights, dl_user: int
) -> np.ndarray:
    """Effective BS->DL-user channel: direct path plus amplified repeater paths."""
    path = weights.alpha * real.h_rep_dl[:, dl_user]
    return real.h_bs_dl[dl_user] + path @ real.h_bs_rep


def compound_ul(
    real: ChannelRealization, weights: RepeaterWeights, ul_user: int
) -> np.ndarray:
    """Effective UL-user->BS channel: direct path plus amplified repeater paths."""
    path = weights.alpha * real.h_ul_rep[ul_user]
    return real.h_ul_bs[ul_user] + path @ real.h_rep_bs


def loopback_matrix(real: ChannelRealization, repeater: int) -> np.ndarray:
    """BS->repeater->BS loopback outer product (plain transpose, no conjugation)."""
    return np.outer(real.h_rep_bs[repeater], real.h_bs_rep[repeater])


# ---------------------------------------------------------------------------
# Binary persistence
# ---------------------------------------------------------------------------
#
# Layout (all little-endian):
#   bytes 0..7   magic b"RFDCH01\0"
#   bytes 8..27  five uint32: Mt, Mr, K_dl, K_ul, L
#   then the eight arrays in declaration order (h_bs_dl, h_rep_dl, h_bs_rep,
#   h_ul_bs, h_ul_rep, h_rep_bs, h_si, h_cross), each row-major as
#   interleaved (re, im) float64 pairs.

_MAGIC = b"RFDCH01\0"
_ARRAY_ORDER = (
    "h_bs_dl", "h_rep_dl", "h_bs_rep", "h_ul_bs",
    "h_ul_rep", "h_rep_bs", "h_si", "h_cross",
)


def _array_shapes(mt: int, mr: int, k_dl: int, k_ul: int, n_rep: int):
    return {
        "h_bs_dl": (k_dl, mt),
        "h_rep_dl": (n_rep, k_dl),
        "h_bs_rep": (n_rep, mt),
        "h_ul_bs": (k_ul, mr),
        "h_ul_rep": (k_ul, n_rep),
        "h_rep_bs": (n_rep, mr),
        "h_si": (mr, mt),
        "h_cross": (k_ul, k_dl),
    }


def save_realization(real: ChannelRealization, path) -> None:
    mt, mr, k_dl, k_ul, n_rep = real.dims
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<5I", mt, mr, k_dl, k_ul, n_rep))
        for name in _ARRAY_ORDER:
            arr = np.ascontiguousarray(getattr(real, name), dtype=np.complex128)
            inter = np.empty(arr.size * 2, dtype="<f8")
            inter[0::2] = arr.real.ravel()
            inter[1::2] = arr.imag.ravel()
            fh.write(inter.tobytes())


def load_realization(path) -> ChannelRealization:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a channel realization file (bad magic)")
    mt, mr, k_dl, k_ul, n_rep = struct.unpack_from("<5I", blob, len(_MAGIC))
    shapes = _array_shapes(mt, mr, k_dl, k_ul, n_rep)
    offset = len(_MAGIC) + struct.calcsize("<5I")
    arrays = {}
    for name in _ARRAY_ORDER:
        shape = shapes[name]
        count = int(np.prod(shape)) * 2
        inter = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        if inter.size != count:
            raise ValueError("channel realization file truncated")
        offset += count * 8
        arrays[name] = (inter[0::2] + 1j * inter[1::2]).reshape(shape)
    if offset != len(blob):
        raise ValueError("trailing bytes in channel realization file")
    return ChannelRealization(**arrays)
