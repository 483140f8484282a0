"""CDF figure rendering for campaign results.

Renders one figure per emitted metric (per-UE downlink SE, per-UE uplink SE,
weighted min-rate objective) with every architecture overlaid, next to the
delimited CDF files the harness writes.  matplotlib is imported lazily with
the Agg backend so headless runs and figure-free library use never pay for a
display stack.
"""

from __future__ import annotations

import numpy as np

from .harness import CampaignResult, cdf

METRIC_LABELS = {
    "dl_se": "downlink per-UE spectral efficiency [bit/s/Hz]",
    "ul_se": "uplink per-UE spectral efficiency [bit/s/Hz]",
    "objective": "weighted min-rate objective [bit/s/Hz]",
}

# Stable styling so overlays stay readable whatever subset of
# architectures a campaign ran.
_ARCH_STYLE = {
    "RA_FD_OPT": dict(color="tab:blue", linestyle="-"),
    "RA_FD_RANDOM": dict(color="tab:orange", linestyle="--"),
    "RA_HD": dict(color="tab:green", linestyle="-."),
    "FD_MMIMO": dict(color="tab:red", linestyle=":"),
}


def _metric_values(result: CampaignResult, label: str, metric: str) -> np.ndarray:
    if metric == "dl_se":
        return result.dl_se[label].ravel()
    if metric == "ul_se":
        return result.ul_se[label].ravel()
    if metric == "objective":
        return result.objective[label]
    raise ValueError(f"unknown metric: {metric!r}")


def render_cdf_figures(result: CampaignResult, out_dir, dpi: int = 150) -> list[str]:
    """Write cdf_<metric>.png files into ``out_dir``; returns the names written."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for metric, xlabel in METRIC_LABELS.items():
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        drew = False
        for label in result.arch_labels:
            values = _metric_values(result, label, metric)
            if values.size == 0:
                continue
            points = np.asarray(cdf(values))
            style = _ARCH_STYLE.get(label, {})
            # Step at each sample so the plot matches the emitted CDF rows.
            ax.step(points[:, 0], points[:, 1], where="post", label=label, **style)
            drew = True
        if not drew:
            plt.close(fig)
            continue
        ax.set_xlabel(xlabel)
        ax.set_ylabel("cumulative probability")
        ax.set_ylim(0.0, 1.02)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="lower right", fontsize=9)
        fig.tight_layout()
        name = f"cdf_{metric}.png"
        fig.savefig(f"{out_dir}/{name}", dpi=dpi)
        plt.close(fig)
        written.append(name)
    return written
