"""Repeater-assisted full-duplex massive MIMO: simulator and optimizer.

A base station with separate transmit and receive arrays serves downlink and
uplink users on the same band while network-controlled single-antenna
repeaters amplify and instantaneously re-forward everything they hear.  The
package builds the compound channels, zero-forces the beamformers, evaluates
closed-form per-user SINR with every interference mechanism of the model
(self-interference, UE-to-UE cross talk, repeater loopback, forwarded
noise), optimizes the per-repeater amplification weights by successive
convex approximation with feasible-point pursuit, and runs paired Monte
Carlo campaigns against the non-repeater and half-duplex baselines.
"""

from .scenario import (
    LINK_CLASSES,
    Geometry,
    LargeScaleFading,
    PathLossParams,
    ScenarioConfig,
    default_pathloss,
    derive_fading,
    sample_geometry,
)
from .channel import (
    ChannelRealization,
    RepeaterWeights,
    compound_dl,
    compound_ul,
    load_realization,
    loopback_matrix,
    sample_realization,
    save_realization,
)
from .beamforming import (
    BeamformingSolution,
    DegenerateChannelError,
    IllConditionedChannelError,
    build_beamforming,
    normalize_channels,
    zf_directions,
)
from .performance import (
    DropPerformance,
    EmpiricalSinr,
    SinrBreakdown,
    dl_sinr,
    empirical_sinr,
    evaluate_drop,
    repeater_input_power,
    ul_sinr,
)
from .convex_core import (
    AffineConstraint,
    ConvexProgram,
    ExpoConstraint,
    InfeasibleProgramError,
    QuadConstraint,
    SolverReport,
    find_strictly_feasible,
    solve,
)
from .sca_optimizer import (
    OptimizationResult,
    OptimizerOptions,
    build_subproblem,
    compute_alpha_bounds,
    optimize,
)
from .harness import (
    DEFAULT_ARCHS,
    ArchitectureSpec,
    CampaignResult,
    cdf,
    evaluate_hd,
    run_campaign,
    run_drop,
    summary_dict,
    write_cdf_files,
    write_results_csv,
    write_summary_json,
)
from .verification import CheckResult, run_all_checks

__version__ = "0.1.0"
