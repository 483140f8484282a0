"""Deployment geometry, log-distance path loss, and system-level parameters.

Everything downstream (channel synthesis, beamforming, the weight optimizer)
reads its dimensions and power budget from :class:`ScenarioConfig`.  Distances
are in meters, powers in watts, gains linear unless a field name says dB.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PathLossParams",
    "ScenarioConfig",
    "Geometry",
    "LargeScaleFading",
    "default_pathloss",
    "sample_geometry",
    "derive_fading",
]

# Link classes with independent path-loss parameter sets.
LINK_CLASSES = ("bs_ue", "bs_repeater", "repeater_ue", "ue_ue")


# ---------------------------------------------------------------------------
# Path loss
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path loss for one link class."""

    ref_gain_db: float = -30.0   # gain at the reference distance [dB]
    ref_distance: float = 1.0    # reference distance d0 [m], must be > 0
    exponent: float = 3.67       # decay exponent

    def __post_init__(self) -> None:
        if self.ref_distance <= 0.0:
            raise ValueError("path loss reference distance must be positive")

    def gain(self, distance):
        """Linear power gain at ``distance`` meters.

        Distances below the reference distance are floored to it, so the
        model never amplifies at close range.
        """
        d = np.maximum(np.asarray(distance, dtype=float), self.ref_distance)
        ref = 10.0 ** (self.ref_gain_db / 10.0)
        return ref * (d / self.ref_distance) ** (-self.exponent)


def default_pathloss() -> dict[str, PathLossParams]:
    return {name: PathLossParams() for name in LINK_CLASSES}


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    bs_tx_antennas: int = 32          # downlink array size at the BS
    bs_rx_antennas: int = 32          # uplink array size at the BS
    num_dl_users: int = 5
    num_ul_users: int = 5
    num_repeaters: int = 32
    area_side: float = 20.0           # square deployment area side [m]
    dl_power: float = 1.0             # total BS transmit power [W]
    dl_power_coeffs: list[float] | None = None  # per-DL-user share, default uniform
    ul_power: float = 0.1             # per-UL-user transmit power [W]
    noise_power: float = 2.511886431509582e-13  # thermal noise [W] (-96 dBm)
    si_attenuation: float = 1e-3      # residual self-interference amplitude
    repeater_max_amp: float = 1e3     # hard cap on a repeater amplitude weight
    repeater_max_power: float = 0.1   # repeater output power budget [W]
    qos_dl: float = 0.0               # spectral-efficiency floor, downlink [bit/s/Hz]
    qos_ul: float = 0.0               # spectral-efficiency floor, uplink [bit/s/Hz]
    weight_dl: float = 1.0            # objective weight on the downlink minimum
    weight_ul: float = 1.0            # objective weight on the uplink minimum
    rng_seed: int = 1
    pathloss: dict[str, PathLossParams] = field(default_factory=default_pathloss)

    def __post_init__(self) -> None:
        self.validate()

    # -- derived quantities -------------------------------------------------

    def power_coeffs(self) -> np.ndarray:
        """Per-DL-user power shares; defaults to an even split."""
        if self.dl_power_coeffs is None:
            k = max(self.num_dl_users, 1)
            return np.full(self.num_dl_users, 1.0 / k)
        return np.asarray(self.dl_power_coeffs, dtype=float)

    @property
    def noise_power_dbm(self) -> float:
        return 10.0 * np.log10(self.noise_power / 1e-3)

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.bs_tx_antennas < 0 or self.bs_rx_antennas < 0:
            raise ValueError("antenna counts must be nonnegative")
        if min(self.num_dl_users, self.num_ul_users, self.num_repeaters) < 0:
            raise ValueError("user/repeater counts must be nonnegative")
        if self.num_dl_users > self.bs_tx_antennas and self.num_dl_users > 0:
            raise ValueError("need at least as many BS transmit antennas as DL users")
        if self.num_ul_users > self.bs_rx_antennas and self.num_ul_users > 0:
            raise ValueError("need at least as many BS receive antennas as UL users")
        if self.area_side <= 0.0:
            raise ValueError("area side must be positive")
        for name, val in (
            ("dl_power", self.dl_power),
            ("ul_power", self.ul_power),
            ("noise_power", self.noise_power),
            ("repeater_max_power", self.repeater_max_power),
        ):
            if val < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.si_attenuation < 0.0 or self.repeater_max_amp < 0.0:
            raise ValueError("attenuation and amplitude caps must be nonnegative")
        if self.weight_dl < 0.0 or self.weight_ul < 0.0:
            raise ValueError("objective weights must be nonnegative")
        eta = self.power_coeffs()
        if eta.shape != (self.num_dl_users,):
            raise ValueError("dl_power_coeffs length must match num_dl_users")
        if self.num_dl_users and (np.any(eta <= 0.0) or eta.sum() > 1.0 + 1e-12):
            raise ValueError("dl_power_coeffs must be positive and sum to at most 1")
        missing = [name for name in LINK_CLASSES if name not in self.pathloss]
        if missing:
            raise ValueError(f"pathloss classes missing: {missing}")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# Geometry and fading containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Geometry:
    bs: np.ndarray          # (2,) BS position
    repeaters: np.ndarray   # (L, 2)
    dl_users: np.ndarray    # (K_dl, 2)
    ul_users: np.ndarray    # (K_ul, 2)


@dataclass(frozen=True)
class LargeScaleFading:
    """Linear power gains for every link in the network.

    Reciprocity of the BS-repeater hop holds exactly:
    ``beta_rep_bs is``, numerically, ``beta_bs_rep``.
    """

    beta_bs_dl: np.ndarray    # (K_dl,)   BS -> DL user
    beta_rep_dl: np.ndarray   # (L, K_dl) repeater -> DL user
    beta_bs_rep: np.ndarray   # (L,)      BS -> repeater
    beta_ul_bs: np.ndarray    # (K_ul,)   UL user -> BS
    beta_ul_rep: np.ndarray   # (K_ul, L) UL user -> repeater
    beta_rep_bs: np.ndarray   # (L,)      repeater -> BS (= beta_bs_rep)
    beta_cross: np.ndarray    # (K_ul, K_dl) UL user -> DL user


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of ``a`` (n,2) and rows of ``b`` (m,2)."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def sample_geometry(config: ScenarioConfig, rng: np.random.Generator) -> Geometry:
    """Drop repeaters and users uniformly in the square; BS at the center.

    Each node category draws from its own spawned substream, so changing the
    repeater count does not disturb the user positions for a given seed.
    """
    side = config.area_side
    rep_rng, dl_rng, ul_rng = rng.spawn(3)
    return Geometry(
        bs=np.array([side / 2.0, side / 2.0]),
        repeaters=rep_rng.uniform(0.0, side, size=(config.num_repeaters, 2)),
        dl_users=dl_rng.uniform(0.0, side, size=(config.num_dl_users, 2)),
        ul_users=ul_rng.uniform(0.0, side, size=(config.num_ul_users, 2)),
    )


def derive_fading(geometry: Geometry, config: ScenarioConfig) -> LargeScaleFading:
    """Map geometry to per-link linear gains through the class path-loss models."""
    pl = config.pathloss
    bs = geometry.bs[None, :]
    beta_bs_rep = pl["bs_repeater"].gain(
        _pairwise_dist(geometry.repeaters, bs)[:, 0]
    )
    return LargeScaleFading(
        beta_bs_dl=pl["bs_ue"].gain(_pairwise_dist(geometry.dl_users, bs)[:, 0]),
        beta_rep_dl=pl["repeater_ue"].gain(
            _pairwise_dist(geometry.repeaters, geometry.dl_users)
        ),
        beta_bs_rep=beta_bs_rep,
        beta_ul_bs=pl["bs_ue"].gain(_pairwise_dist(geometry.ul_users, bs)[:, 0]),
        beta_ul_rep=pl["repeater_ue"].gain(
            _pairwise_dist(geometry.ul_users, geometry.repeaters)
        ),
        beta_rep_bs=beta_bs_rep.copy(),
        beta_cross=pl["ue_ue"].gain(
            _pairwise_dist(geometry.ul_users, geometry.dl_users)
        ),
    )
