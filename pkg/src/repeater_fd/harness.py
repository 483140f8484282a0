"""Monte Carlo campaign over the competing architectures.

One drop is a joint draw of geometry, large-scale fading, and small-scale
channels.  Every architecture sees the same draw (paired comparison): the
per-drop generator is re-created from ``SeedSequence([seed, drop, attempt])``
for each architecture, and the shared arrays come from spawned substreams in
a fixed order, so campaigns are a pure function of configuration, seed, and
drop count regardless of the worker-pool size.

Architectures:

* ``RA_FD_OPT``     full duplex, amplification weights from the SCA optimizer
* ``RA_FD_RANDOM``  full duplex, weights drawn uniformly inside the power box
* ``RA_HD``         half duplex on the combined array, time-split phases
* ``FD_MMIMO``      full duplex with every repeater silent (all-zero weights)
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .beamforming import (
    DegenerateChannelError,
    IllConditionedChannelError,
    build_beamforming,
)
from .channel import ChannelRealization, RepeaterWeights, sample_realization
from .performance import (
    DropPerformance,
    dl_sinr,
    evaluate_drop,
    ul_sinr,
)
from .scenario import Geometry, LargeScaleFading, ScenarioConfig, derive_fading, sample_geometry
from .sca_optimizer import OptimizerOptions, compute_alpha_bounds, optimize

__all__ = [
    "ARCH_KINDS",
    "HD_WEIGHT_MODES",
    "ArchitectureSpec",
    "CampaignResult",
    "DropChannels",
    "DEFAULT_ARCHS",
    "cdf",
    "drop_generator",
    "evaluate_hd",
    "run_campaign",
    "run_drop",
    "sample_drop_channels",
    "summary_dict",
    "write_cdf_files",
    "write_results_csv",
    "write_summary_json",
]

ARCH_KINDS = ("RA_FD_OPT", "RA_FD_RANDOM", "RA_HD", "FD_MMIMO")
HD_WEIGHT_MODES = ("random", "optimized")

# A drop is retried with a fresh attempt counter when ZF rejects the channel;
# runaway rejection means the configuration itself is degenerate.
MAX_DROP_ATTEMPTS = 50

RESULTS_HEADER = "drop,arch,side,ue,sinr,se"
CDF_HEADER = "value,probability"


@dataclass(frozen=True)
class ArchitectureSpec:
    """One architecture under test; ``hd_weight_mode`` applies to RA_HD only."""

    kind: str
    hd_weight_mode: str = "random"

    def __post_init__(self) -> None:
        if self.kind not in ARCH_KINDS:
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if self.hd_weight_mode not in HD_WEIGHT_MODES:
            raise ValueError(f"unknown HD weight mode {self.hd_weight_mode!r}")

    @property
    def label(self) -> str:
        if self.kind == "RA_HD" and self.hd_weight_mode == "optimized":
            return "RA_HD_OPTIMIZED"
        return self.kind


DEFAULT_ARCHS = (
    ArchitectureSpec("RA_FD_OPT"),
    ArchitectureSpec("RA_FD_RANDOM"),
    ArchitectureSpec("RA_HD"),
    ArchitectureSpec("FD_MMIMO"),
)


@dataclass(frozen=True)
class DropChannels:
    """Shared per-drop draw plus the architecture-private substreams."""

    geometry: Geometry
    fading: LargeScaleFading
    real: ChannelRealization
    arch_rng: np.random.Generator
    hd_rng: np.random.Generator


@dataclass
class CampaignResult:
    """Per-architecture arrays over a whole campaign.

    ``dl_se``/``ul_se``/``dl_sinr``/``ul_sinr`` map architecture label to a
    ``(drops, K)`` array; ``objective`` maps to a ``(drops,)`` array.
    ``attempts`` records the accepted attempt index per drop so the exact
    channel draws can be regenerated later.
    """

    config: ScenarioConfig
    seed: int
    num_drops: int
    arch_labels: tuple[str, ...]
    dl_se: dict[str, np.ndarray]
    ul_se: dict[str, np.ndarray]
    dl_sinr: dict[str, np.ndarray]
    ul_sinr: dict[str, np.ndarray]
    objective: dict[str, np.ndarray]
    rejected: int
    attempts: np.ndarray
    opt_alpha: np.ndarray | None = None       # (drops, L) accepted weights
    opt_converged: np.ndarray | None = None   # (drops,) bool
    opt_max_slack: np.ndarray | None = None   # (drops,)

    def __post_init__(self) -> None:
        for label in self.arch_labels:
            for table in (self.dl_se, self.ul_se, self.objective):
                arr = table[label]
                if arr.shape[0] != self.num_drops:
                    raise ValueError("campaign arrays inconsistent with drop count")
                if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
                    raise ValueError("campaign arrays must be finite and nonnegative")


# ---------------------------------------------------------------------------
# Per-drop sampling and evaluation
# ---------------------------------------------------------------------------

def drop_generator(seed: int, drop: int, attempt: int = 0) -> np.random.Generator:
    """The canonical generator for one (drop, attempt) of a campaign."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(drop), int(attempt)]))


def sample_drop_channels(config: ScenarioConfig, rng: np.random.Generator) -> DropChannels:
    """Draw the shared channel state of one drop.

    Children are spawned in a fixed order so every architecture, handed a
    generator with the same state, observes identical geometry and channels
    while keeping its own private stream for weight draws.
    """
    geo_rng, chan_rng, arch_rng, hd_rng = rng.spawn(4)
    geometry = sample_geometry(config, geo_rng)
    fading = derive_fading(geometry, config)
    real = sample_realization(fading, config, chan_rng)
    return DropChannels(geometry, fading, real, arch_rng, hd_rng)


def run_drop(
    config: ScenarioConfig,
    arch: ArchitectureSpec,
    rng: np.random.Generator,
    options: OptimizerOptions | None = None,
) -> DropPerformance:
    """Evaluate one architecture on one drop drawn from ``rng``."""
    ch = sample_drop_channels(config, rng)
    perf, _ = _evaluate_arch(config, arch, ch, options)
    return perf


def _evaluate_arch(config, arch, ch, options=None):
    """Returns (DropPerformance, optimizer extras or None)."""
    zero = RepeaterWeights.zeros(config.num_repeaters)
    if arch.kind == "FD_MMIMO":
        bf = build_beamforming(ch.real, zero, ch.fading)
        return evaluate_drop(ch.real, zero, bf, config), None
    if arch.kind == "RA_FD_RANDOM":
        bf0 = build_beamforming(ch.real, zero, ch.fading)
        bound = compute_alpha_bounds(ch.real, bf0, config)
        weights = RepeaterWeights(ch.arch_rng.uniform(0.0, bound))
        bf = build_beamforming(ch.real, weights, ch.fading)
        return evaluate_drop(ch.real, weights, bf, config), None
    if arch.kind == "RA_FD_OPT":
        res = optimize(ch.real, ch.fading, config, options)
        extras = (res.weights.alpha, res.converged, res.max_slack)
        return res.performance, extras
    return _run_hd(config, arch, ch, options), None


def _hd_configs(config: ScenarioConfig):
    """Combined-array config plus its DL-only and UL-only phase views."""
    m = config.bs_tx_antennas + config.bs_rx_antennas
    hd = config.replace(bs_tx_antennas=m, bs_rx_antennas=m)
    cfg_dl = hd.replace(num_ul_users=0)
    cfg_ul = hd.replace(num_dl_users=0, dl_power_coeffs=None)
    return hd, cfg_dl, cfg_ul


def _phase_slice(real: ChannelRealization, side: str) -> ChannelRealization:
    """View of a realization with the other side's users removed."""
    mt, mr, k_dl, k_ul, n_rep = real.dims
    if side == "dl":
        return ChannelRealization(
            h_bs_dl=real.h_bs_dl,
            h_rep_dl=real.h_rep_dl,
            h_bs_rep=real.h_bs_rep,
            h_ul_bs=np.zeros((0, mr), dtype=complex),
            h_ul_rep=np.zeros((0, n_rep), dtype=complex),
            h_rep_bs=real.h_rep_bs,
            h_si=real.h_si,
            h_cross=np.zeros((0, k_dl), dtype=complex),
        )
    return ChannelRealization(
        h_bs_dl=np.zeros((0, mt), dtype=complex),
        h_rep_dl=np.zeros((n_rep, 0), dtype=complex),
        h_bs_rep=real.h_bs_rep,
        h_ul_bs=real.h_ul_bs,
        h_ul_rep=real.h_ul_rep,
        h_rep_bs=real.h_rep_bs,
        h_si=real.h_si,
        h_cross=np.zeros((k_ul, 0), dtype=complex),
    )


def _phase_fading(fading: LargeScaleFading, side: str) -> LargeScaleFading:
    k_dl = fading.beta_bs_dl.shape[0]
    k_ul = fading.beta_ul_bs.shape[0]
    n_rep = fading.beta_bs_rep.shape[0]
    if side == "dl":
        return LargeScaleFading(
            beta_bs_dl=fading.beta_bs_dl,
            beta_rep_dl=fading.beta_rep_dl,
            beta_bs_rep=fading.beta_bs_rep,
            beta_ul_bs=np.zeros(0),
            beta_ul_rep=np.zeros((0, n_rep)),
            beta_rep_bs=fading.beta_rep_bs,
            beta_cross=np.zeros((0, k_dl)),
        )
    return LargeScaleFading(
        beta_bs_dl=np.zeros(0),
        beta_rep_dl=np.zeros((n_rep, 0)),
        beta_bs_rep=fading.beta_bs_rep,
        beta_ul_bs=fading.beta_ul_bs,
        beta_ul_rep=fading.beta_ul_rep,
        beta_rep_bs=fading.beta_rep_bs,
        beta_cross=np.zeros((k_ul, 0)),
    )


def evaluate_hd(
    real: ChannelRealization,
    fading: LargeScaleFading,
    config: ScenarioConfig,
    weights,
) -> DropPerformance:
    """Half-duplex evaluation on the combined array.

    The DL and UL phases are time-separated: each phase is evaluated on its
    own user slice (which removes the cross-link, the BS self-interference,
    and the DL loopback terms structurally), repeater-forwarded noise stays
    in both phases, and every spectral efficiency carries the 1/2 duplexing
    pre-log.  ``weights`` is a single :class:`RepeaterWeights` applied to
    both phases or a ``(dl_weights, ul_weights)`` pair.
    """
    if isinstance(weights, RepeaterWeights):
        w_dl = w_ul = weights
    else:
        w_dl, w_ul = weights
    k_dl, k_ul = real.dims[2], real.dims[3]
    cfg_dl = config.replace(num_ul_users=0)
    cfg_ul = config.replace(num_dl_users=0, dl_power_coeffs=None)
    real_dl, real_ul = _phase_slice(real, "dl"), _phase_slice(real, "ul")
    fad_dl, fad_ul = _phase_fading(fading, "dl"), _phase_fading(fading, "ul")
    bf_dl = build_beamforming(real_dl, w_dl, fad_dl)
    bf_ul = build_beamforming(real_ul, w_ul, fad_ul)

    dl = [dl_sinr(k, real_dl, w_dl, bf_dl, cfg_dl, prelog=0.5) for k in range(k_dl)]
    ul = [ul_sinr(q, real_ul, w_ul, bf_ul, cfg_ul, prelog=0.5) for q in range(k_ul)]
    dl_se = np.array([b.se for b in dl])
    ul_se = np.array([b.se for b in ul])
    min_dl = float(dl_se.min()) if k_dl else 0.0
    min_ul = float(ul_se.min()) if k_ul else 0.0
    return DropPerformance(
        dl=dl,
        ul=ul,
        dl_se=dl_se,
        ul_se=ul_se,
        min_dl_se=min_dl,
        min_ul_se=min_ul,
        objective=config.weight_dl * min_dl + config.weight_ul * min_ul,
    )


def _run_hd(config, arch, ch, options=None) -> DropPerformance:
    """RA_HD drop: fresh combined-array channels, weights per the HD mode."""
    hd_real_rng, hd_weight_rng = ch.hd_rng.spawn(2)
    cfg_hd, cfg_dl, cfg_ul = _hd_configs(config)
    real_hd = sample_realization(ch.fading, cfg_hd, hd_real_rng)
    real_dl, real_ul = _phase_slice(real_hd, "dl"), _phase_slice(real_hd, "ul")
    fad_dl, fad_ul = _phase_fading(ch.fading, "dl"), _phase_fading(ch.fading, "ul")
    zero = RepeaterWeights.zeros(config.num_repeaters)
    if arch.hd_weight_mode == "optimized":
        res_dl = optimize(real_dl, fad_dl, cfg_dl, options)
        res_ul = optimize(real_ul, fad_ul, cfg_ul, options)
        weights = (res_dl.weights, res_ul.weights)
    else:
        # One weight draw serves both phases, so it must respect the tighter
        # of the per-phase power boxes (zero-weight beamformer operating point).
        bound = np.minimum(
            compute_alpha_bounds(real_dl, build_beamforming(real_dl, zero, fad_dl), cfg_dl),
            compute_alpha_bounds(real_ul, build_beamforming(real_ul, zero, fad_ul), cfg_ul),
        )
        weights = RepeaterWeights(hd_weight_rng.uniform(0.0, bound))
    return evaluate_hd(real_hd, ch.fading, cfg_hd, weights)


# ---------------------------------------------------------------------------
# Campaign loop
# ---------------------------------------------------------------------------

def _drop_task(drop: int, config: ScenarioConfig, archs, options):
    """Evaluate every architecture on one drop; retries on ZF rejection.

    Runs inside worker processes; returns plain arrays to keep the
    inter-process payload small.
    """
    attempt = 0
    while True:
        try:
            out = {}
            opt_extras = None
            for arch in archs:
                rng = drop_generator(config.rng_seed, drop, attempt)
                ch = sample_drop_channels(config, rng)
                perf, extras = _evaluate_arch(config, arch, ch, options)
                if extras is not None:
                    opt_extras = extras
                out[arch.label] = (
                    np.array([b.sinr for b in perf.dl]),
                    np.array([b.sinr for b in perf.ul]),
                    perf.dl_se.copy(),
                    perf.ul_se.copy(),
                    perf.objective,
                )
            return drop, attempt, out, opt_extras
        except (IllConditionedChannelError, DegenerateChannelError):
            attempt += 1
            if attempt >= MAX_DROP_ATTEMPTS:
                raise RuntimeError(
                    f"drop {drop} rejected {attempt} times; configuration degenerate"
                )


def run_campaign(
    config: ScenarioConfig,
    archs=DEFAULT_ARCHS,
    num_drops: int = 200,
    parallelism: int = 1,
    options: OptimizerOptions | None = None,
) -> CampaignResult:
    """Run the paired Monte Carlo campaign.

    Results are identical for any ``parallelism`` because each drop is a pure
    function of (config, drop index, attempt) and aggregation happens in
    drop order.
    """
    if num_drops < 1:
        raise ValueError("num_drops must be at least 1")
    archs = tuple(archs)
    labels = tuple(a.label for a in archs)
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate architecture labels: {labels}")

    task = partial(_drop_task, config=config, archs=archs, options=options)
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(task, range(num_drops)))
    else:
        rows = [task(d) for d in range(num_drops)]

    k_dl, k_ul = config.num_dl_users, config.num_ul_users
    n_rep = config.num_repeaters
    dl_se = {lab: np.zeros((num_drops, k_dl)) for lab in labels}
    ul_se = {lab: np.zeros((num_drops, k_ul)) for lab in labels}
    dl_sinr_t = {lab: np.zeros((num_drops, k_dl)) for lab in labels}
    ul_sinr_t = {lab: np.zeros((num_drops, k_ul)) for lab in labels}
    objective = {lab: np.zeros(num_drops) for lab in labels}
    attempts = np.zeros(num_drops, dtype=int)
    track_opt = any(a.kind == "RA_FD_OPT" for a in archs)
    opt_alpha = np.zeros((num_drops, n_rep)) if track_opt else None
    opt_conv = np.zeros(num_drops, dtype=bool) if track_opt else None
    opt_slack = np.zeros(num_drops) if track_opt else None

    for drop, attempt, out, extras in rows:
        attempts[drop] = attempt
        for lab in labels:
            sin_dl, sin_ul, se_dl, se_ul, obj = out[lab]
            dl_sinr_t[lab][drop] = sin_dl
            ul_sinr_t[lab][drop] = sin_ul
            dl_se[lab][drop] = se_dl
            ul_se[lab][drop] = se_ul
            objective[lab][drop] = obj
        if extras is not None and track_opt:
            opt_alpha[drop] = extras[0]
            opt_conv[drop] = extras[1]
            opt_slack[drop] = extras[2]

    return CampaignResult(
        config=config,
        seed=config.rng_seed,
        num_drops=num_drops,
        arch_labels=labels,
        dl_se=dl_se,
        ul_se=ul_se,
        dl_sinr=dl_sinr_t,
        ul_sinr=ul_sinr_t,
        objective=objective,
        rejected=int(attempts.sum()),
        attempts=attempts,
        opt_alpha=opt_alpha,
        opt_converged=opt_conv,
        opt_max_slack=opt_slack,
    )


# ---------------------------------------------------------------------------
# Aggregation and persistence
# ---------------------------------------------------------------------------

def cdf(values) -> list[tuple[float, float]]:
    """Empirical CDF points: sorted values with probabilities (i+1)/N."""
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0:
        raise ValueError("cdf of an empty sample")
    n = arr.size
    return [(float(v), (i + 1) / n) for i, v in enumerate(arr)]


def write_results_csv(result: CampaignResult, path) -> None:
    """One row per UE per drop per architecture; floats round-trip via repr."""
    with open(path, "w", newline="") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for drop in range(result.num_drops):
            for lab in result.arch_labels:
                for side, sinr_t, se_t in (
                    ("dl", result.dl_sinr[lab], result.dl_se[lab]),
                    ("ul", result.ul_sinr[lab], result.ul_se[lab]),
                ):
                    for ue in range(sinr_t.shape[1]):
                        fh.write(
                            f"{drop},{lab},{side},{ue},"
                            f"{float(sinr_t[drop, ue])!r},{float(se_t[drop, ue])!r}\n"
                        )


def _metric_arrays(result: CampaignResult, label: str) -> dict[str, np.ndarray]:
    return {
        "dl_se": result.dl_se[label].ravel(),
        "ul_se": result.ul_se[label].ravel(),
        "objective": result.objective[label],
    }


def write_cdf_files(result: CampaignResult, out_dir) -> list[str]:
    """Emit cdf_<metric>_<arch>.csv files; returns the file names written."""
    written = []
    for lab in result.arch_labels:
        for metric, arr in _metric_arrays(result, lab).items():
            if arr.size == 0:
                continue
            name = f"cdf_{metric}_{lab}.csv"
            with open(f"{out_dir}/{name}", "w", newline="") as fh:
                fh.write(CDF_HEADER + "\n")
                for value, prob in cdf(arr):
                    fh.write(f"{value!r},{prob!r}\n")
            written.append(name)
    return written


def _stats(arr: np.ndarray) -> dict:
    if arr.size == 0:
        return {"median": None, "mean": None}
    return {"median": float(np.median(arr)), "mean": float(np.mean(arr))}


def summary_dict(result: CampaignResult) -> dict:
    """Medians, means, and optimized-over-baseline gain ratios."""
    archs = {}
    for lab in result.arch_labels:
        entry = {}
        for metric, arr in _metric_arrays(result, lab).items():
            stats = _stats(arr)
            entry[f"{metric}_median"] = stats["median"]
            entry[f"{metric}_mean"] = stats["mean"]
        archs[lab] = entry
    if result.opt_converged is not None:
        archs["RA_FD_OPT"]["converged_fraction"] = float(result.opt_converged.mean())

    gains = {}
    if "RA_FD_OPT" in result.arch_labels:
        opt = archs["RA_FD_OPT"]
        for lab in result.arch_labels:
            if lab == "RA_FD_OPT":
                continue
            base = archs[lab]
            pair = {}
            for key in ("objective_mean", "dl_se_median", "ul_se_median"):
                num, den = opt.get(key), base.get(key)
                pair[f"{key}_ratio"] = (
                    num / den if num is not None and den not in (None, 0.0) else None
                )
            gains[f"RA_FD_OPT_vs_{lab}"] = pair

    cfg = result.config
    return {
        "drops": result.num_drops,
        "seed": result.seed,
        "rejected": result.rejected,
        "config": {
            "bs_tx_antennas": cfg.bs_tx_antennas,
            "bs_rx_antennas": cfg.bs_rx_antennas,
            "num_dl_users": cfg.num_dl_users,
            "num_ul_users": cfg.num_ul_users,
            "num_repeaters": cfg.num_repeaters,
            "weight_dl": cfg.weight_dl,
            "weight_ul": cfg.weight_ul,
        },
        "archs": archs,
        "gains": gains,
    }


def write_summary_json(result: CampaignResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
