"""Per-repeater amplification weight optimization.

The joint uplink/downlink max-min rate problem is nonconvex in the
amplification weights, so it is solved by successive convex approximation:
around the current iterate every rate constraint is replaced by a convex
restriction (quadratic-over-linear signal terms are minorized by tangent
planes, indefinite pair products in the interference are split into convex
and concave squares with the concave halves linearized) and the resulting
program is handed to the interior-point routine in
:mod:`repeater_fd.convex_core`.  Feasibility is kept with penalized slack
variables whose weight escalates geometrically.  Repeater transmit power is
enforced through amplitude boxes derived from the input power at the frozen
beamformers, plus a final re-projection once the beamformers are rebuilt at
the solution.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .beamforming import (
    BeamformingSolution,
    DegenerateChannelError,
    IllConditionedChannelError,
    build_beamforming,
)
from .channel import ChannelRealization, RepeaterWeights
from .convex_core import (
    ConvexProgram,
    ExpoConstraint,
    InfeasibleProgramError,
    QuadConstraint,
    find_strictly_feasible,
    solve,
)
from .performance import (
    DropPerformance,
    dl_sinr,
    evaluate_drop,
    repeater_input_power,
    ul_sinr,
)
from .scenario import LargeScaleFading, ScenarioConfig

__all__ = [
    "DlSinrModel",
    "UlSinrModel",
    "ExpansionPoint",
    "VariableLayout",
    "Subproblem",
    "OptimizerOptions",
    "IterationRecord",
    "ScaPassResult",
    "sca_pass",
    "OptimizationResult",
    "compute_alpha_bounds",
    "dl_sinr_models",
    "ul_sinr_models",
    "dl_model_sinr",
    "ul_model_sinr",
    "dl_model_residual",
    "ul_model_residual",
    "build_subproblem",
    "linearized_residual",
    "optimize",
]

TARGET_FLOOR = 1e-8     # lowest SINR target kept in the expansion point
SLACK_BOX = 1e3         # upper bound on each feasibility slack
MIN_AMPLITUDE_BOX = 1e-12
TRUST_GROWTH = 2.0      # per-iteration cap on SINR target growth
SECONDARY_BONUS = 1e-4  # weight of the per-user target reward vs the min rate


# ---------------------------------------------------------------------------
# Frozen-beamformer SINR models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DlSinrModel:
    """Downlink SINR of one user as a rational function of the amplitudes.

    With the precoders frozen, the signal power is
    ``signal_direct + signal_rep . alpha**2`` and the interference is the
    static floor plus the linear and pair-product terms of the coherent
    UL-user cross talk plus the forwarded repeater noise.  ``const_term``
    excludes the direct signal gain, which is carried separately because it
    appears both in the interference constant and in the signal tangent.
    ``cross_pair`` holds quarter-weight pair products: each ordered pair
    (l, l') contributes ``4 Re cross_pair[q, l, l'] alpha_l alpha_l'``.
    """

    signal_direct: float
    signal_rep: np.ndarray    # (L,)
    cross_pair: np.ndarray    # (K_ul, L, L) complex Hermitian
    cross_lin: np.ndarray     # (K_ul, L)
    noise_quad: np.ndarray    # (L,)
    const_term: float
    scale: float              # row normalization, positive
    alpha_upper: np.ndarray   # (L,) amplitude box the scale was derived for


@dataclass(frozen=True)
class UlSinrModel:
    """Uplink SINR of one user as a rational function of the amplitudes.

    Works in average-gain units: the signal side is
    ``signal_direct + signal_rep . alpha**2`` and the interference side
    (loopback of every DL stream through each repeater, forwarded noise,
    BS self-interference, thermal) is pre-scaled so the SINR is directly
    their ratio.  Loopback and self-interference carry the per-stream DL
    power shares, matching the evaluation model term by term.
    """

    signal_direct: float
    signal_rep: np.ndarray         # (L,)
    interference_quad: np.ndarray  # (L,)
    const_term: float
    scale: float
    alpha_upper: np.ndarray


def compute_alpha_bounds(
    real: ChannelRealization,
    bf: BeamformingSolution,
    config: ScenarioConfig,
) -> np.ndarray:
    """Per-repeater amplitude caps from the hard limit and the power budget."""
    psi = repeater_input_power(real, bf, config)
    with np.errstate(divide="ignore"):
        cap = np.sqrt(
            np.where(psi > 0.0, config.repeater_max_power / np.maximum(psi, 1e-300), np.inf)
        )
    return np.minimum(config.repeater_max_amp, cap)


def dl_sinr_models(
    real: ChannelRealization,
    bf: BeamformingSolution,
    fading: LargeScaleFading,
    config: ScenarioConfig,
    alpha_upper: np.ndarray,
) -> list:
    eta = config.power_coeffs()
    rho_dl, rho_ul = config.dl_power, config.ul_power
    noise = config.noise_power
    _, _, k_dl, k_ul, n_rep = real.dims
    ub = np.asarray(alpha_upper, dtype=float)
    ub_pair = ub[:, None] + ub[None, :]

    models = []
    for k in range(k_dl):
        factor = eta[k] * rho_dl / bf.vbar_norms[k] ** 2
        signal_direct = float(factor * fading.beta_bs_dl[k])
        signal_rep = factor * fading.beta_rep_dl[:, k] * fading.beta_bs_rep
        # path[q, l]: one UL user's signal bouncing off repeater l toward user k
        path = real.h_rep_dl[:, k][None, :] * real.h_ul_rep
        cross_pair = 0.25 * rho_ul * path[:, :, None] * path.conj()[:, None, :]
        cross_lin = 2.0 * rho_ul * np.real(real.h_cross[:, k].conj()[:, None] * path)
        cross_const = rho_ul * float(np.sum(np.abs(real.h_cross[:, k]) ** 2))
        noise_quad = noise * np.abs(real.h_rep_dl[:, k]) ** 2
        const_term = noise + cross_const - signal_direct
        scale = abs(const_term) + signal_direct + float(noise_quad @ ub**2)
        if k_ul:
            scale += float((np.abs(cross_lin) @ ub).sum())
            scale += 2.0 * float((np.abs(cross_pair.real) * ub_pair**2).sum())
        models.append(
            DlSinrModel(
                signal_direct=signal_direct,
                signal_rep=signal_rep,
                cross_pair=cross_pair,
                cross_lin=cross_lin,
                noise_quad=noise_quad,
                const_term=float(const_term),
                scale=float(scale),
                alpha_upper=ub,
            )
        )
    return models


def ul_sinr_models(
    real: ChannelRealization,
    bf: BeamformingSolution,
    fading: LargeScaleFading,
    config: ScenarioConfig,
    alpha_upper: np.ndarray,
) -> list:
    eta = config.power_coeffs()
    rho_dl, rho_ul = config.dl_power, config.ul_power
    noise = config.noise_power
    _, _, k_dl, k_ul, n_rep = real.dims
    ub = np.asarray(alpha_upper, dtype=float)
    tx_rep = real.h_bs_rep @ bf.precoders if k_dl else np.zeros((n_rep, 0), dtype=complex)

    models = []
    for q in range(k_ul):
        w = bf.combiners[:, q]
        w_rep = real.h_rep_bs @ w.conj()
        si_gain = w.conj() @ real.h_si @ bf.precoders if k_dl else np.zeros(0, dtype=complex)
        pref = bf.wbar_norms[q] ** 2 / rho_ul
        loop_dl = np.abs(w_rep) ** 2 * (np.abs(tx_rep) ** 2 @ eta)
        interference_quad = pref * (rho_dl * loop_dl + noise * np.abs(w_rep) ** 2)
        const_term = pref * (
            rho_dl * config.si_attenuation**2 * float(eta @ np.abs(si_gain) ** 2) + noise
        )
        signal_rep = fading.beta_ul_rep[q] * fading.beta_rep_bs
        models.append(
            UlSinrModel(
                signal_direct=float(fading.beta_ul_bs[q]),
                signal_rep=signal_rep,
                interference_quad=interference_quad,
                const_term=float(const_term),
                scale=float(const_term + interference_quad @ ub**2),
                alpha_upper=ub,
            )
        )
    return models


# -- exact model evaluation (used for certification and grid oracles) -------

def _dl_model_terms(model: DlSinrModel, alpha: np.ndarray) -> tuple[float, float]:
    a2 = alpha**2
    sig = model.signal_direct + float(model.signal_rep @ a2)
    interf = model.const_term + model.signal_direct + float(model.noise_quad @ a2)
    if model.cross_lin.shape[0]:
        interf += float(model.cross_lin.sum(axis=0) @ alpha)
        interf += 4.0 * float(
            np.einsum("qij,i,j->", model.cross_pair.real, alpha, alpha)
        )
    return sig, interf


def _ul_model_terms(model: UlSinrModel, alpha: np.ndarray) -> tuple[float, float]:
    a2 = alpha**2
    sig = model.signal_direct + float(model.signal_rep @ a2)
    interf = model.const_term + float(model.interference_quad @ a2)
    return sig, interf


def dl_model_sinr(model: DlSinrModel, alpha: np.ndarray) -> float:
    sig, interf = _dl_model_terms(model, np.asarray(alpha, dtype=float))
    return sig / interf


def ul_model_sinr(model: UlSinrModel, alpha: np.ndarray) -> float:
    sig, interf = _ul_model_terms(model, np.asarray(alpha, dtype=float))
    return sig / interf


def dl_model_residual(model: DlSinrModel, alpha: np.ndarray, target: float) -> float:
    """Exact normalized constraint slack ``(signal/target - interference)/scale``."""
    sig, interf = _dl_model_terms(model, np.asarray(alpha, dtype=float))
    return (sig / target - interf) / model.scale


def ul_model_residual(model: UlSinrModel, alpha: np.ndarray, target: float) -> float:
    sig, interf = _ul_model_terms(model, np.asarray(alpha, dtype=float))
    return (sig / target - interf) / model.scale


# ---------------------------------------------------------------------------
# Convex subproblem assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariableLayout:
    """Index map for the subproblem vector.

    Order: amplitudes, common DL rate, common UL rate, per-user DL SINR
    targets, per-user UL SINR targets, per-user DL slacks, per-user UL
    slacks.
    """

    num_repeaters: int
    num_dl: int
    num_ul: int

    @property
    def amplitudes(self) -> slice:
        return slice(0, self.num_repeaters)

    @property
    def rate_dl(self) -> int:
        return self.num_repeaters

    @property
    def rate_ul(self) -> int:
        return self.num_repeaters + 1

    @property
    def targets_dl(self) -> slice:
        base = self.num_repeaters + 2
        return slice(base, base + self.num_dl)

    @property
    def targets_ul(self) -> slice:
        base = self.num_repeaters + 2 + self.num_dl
        return slice(base, base + self.num_ul)

    @property
    def slacks_dl(self) -> slice:
        base = self.num_repeaters + 2 + self.num_dl + self.num_ul
        return slice(base, base + self.num_dl)

    @property
    def slacks_ul(self) -> slice:
        base = self.num_repeaters + 2 + self.num_dl + self.num_ul + self.num_dl
        return slice(base, base + self.num_ul)

    @property
    def slacks(self) -> slice:
        base = self.num_repeaters + 2 + self.num_dl + self.num_ul
        return slice(base, self.num_vars)

    @property
    def num_vars(self) -> int:
        return self.num_repeaters + 2 + 2 * (self.num_dl + self.num_ul)


@dataclass(frozen=True)
class ExpansionPoint:
    alpha: np.ndarray        # (L,)
    dl_targets: np.ndarray   # (K_dl,) positive SINR targets
    ul_targets: np.ndarray   # (K_ul,)


@dataclass(frozen=True)
class Subproblem:
    program: ConvexProgram
    layout: VariableLayout
    expansion: ExpansionPoint
    penalty: float
    target_cap: float


def _pair_upper_bound(C: np.ndarray, a0: np.ndarray):
    """Convex upper bound of ``sum_{l,l'} 4 C[l,l'] a_l a_l'`` around ``a0``.

    Each ordered pair product is split as
    ``4 a_l a_l' = (a_l + a_l')**2 - (a_l - a_l')**2`` and the half that is
    concave for the sign of ``C[l, l']`` is replaced by its tangent plane at
    ``a0``; the convex half is kept exactly.  Returns ``(Q, g, const)`` such
    that the bound is ``a' Q a + g . a + const``; it touches the true value
    at ``a0`` and the kept quadratic is positive semidefinite by diagonal
    dominance.
    """
    pos = np.where(C > 0.0, C, 0.0)
    neg = C - pos
    Q = 2.0 * C + 2.0 * np.diag(np.abs(C).sum(axis=1))
    s_plus = a0[:, None] + a0[None, :]
    s_minus = a0[:, None] - a0[None, :]
    g = 4.0 * ((neg * s_plus) - (pos * s_minus)).sum(axis=1)
    const = float((pos * s_minus**2).sum() - (neg * s_plus**2).sum())
    return Q, g, const


def _assemble_dl_row(model: DlSinrModel, a0: np.ndarray, t0: float):
    """Scaled convex restriction of one DL row: returns (Qa, ga, gT, b)."""
    n_rep = a0.size
    Qa = np.zeros((n_rep, n_rep))
    ga = np.zeros(n_rep)
    const = model.const_term + model.signal_direct
    for q in range(model.cross_lin.shape[0]):
        dQ, dg, dc = _pair_upper_bound(model.cross_pair[q].real, a0)
        Qa += dQ
        ga += dg
        const += dc
    if model.cross_lin.shape[0]:
        ga += model.cross_lin.sum(axis=0)
    Qa[np.diag_indices(n_rep)] += model.noise_quad
    # signal minorants: amplitude-squared over target, and direct over target
    r0 = a0 / t0
    ga -= 2.0 * model.signal_rep * r0
    g_target = float(model.signal_rep @ r0**2) + model.signal_direct / t0**2
    const -= 2.0 * model.signal_direct / t0
    s = model.scale
    return Qa / s, ga / s, g_target / s, -const / s


def _assemble_ul_row(model: UlSinrModel, a0: np.ndarray, t0: float):
    n_rep = a0.size
    Qa = np.diag(model.interference_quad.astype(float))
    const = model.const_term
    r0 = a0 / t0
    ga = -2.0 * model.signal_rep * r0
    g_target = float(model.signal_rep @ r0**2) + model.signal_direct / t0**2
    const -= 2.0 * model.signal_direct / t0
    s = model.scale
    return Qa / s, ga / s, g_target / s, -const / s


def build_subproblem(
    dl_models: list,
    ul_models: list,
    expansion: ExpansionPoint,
    penalty: float,
    config: ScenarioConfig,
) -> Subproblem:
    """Convex restriction of the max-min rate problem at ``expansion``.

    The common-rate epigraph couples each side's rate variable to every
    per-user SINR target through an exponential row; the SINR rows are the
    linearized constraints with a penalized slack each.
    """
    k_dl, k_ul = len(dl_models), len(ul_models)
    a0 = np.asarray(expansion.alpha, dtype=float)
    layout = VariableLayout(a0.size, k_dl, k_ul)
    n = layout.num_vars

    ub = (
        dl_models[0].alpha_upper
        if k_dl
        else (ul_models[0].alpha_upper if k_ul else np.zeros(0))
    )
    noise = config.noise_power
    ratios = [1.0]
    for m in dl_models:
        ratios.append((m.signal_direct + float(m.signal_rep @ ub**2)) / noise)
    for m in ul_models:
        floor = max(m.const_term, 1e-300)
        ratios.append((m.signal_direct + float(m.signal_rep @ ub**2)) / floor)
    target_cap = 10.0 * max(ratios)
    if k_dl and config.qos_dl >= math.log2(1.0 + target_cap):
        raise ValueError("downlink QoS floor exceeds the achievable rate cap")
    if k_ul and config.qos_ul >= math.log2(1.0 + target_cap):
        raise ValueError("uplink QoS floor exceeds the achievable rate cap")

    # Per-user trust caps: the reciprocal-target tangent is only a useful
    # minorant below twice the expansion target, so targets may at most
    # double per iteration (the QoS floor stays reachable regardless).
    def _target_caps(t0: np.ndarray, qos: float) -> np.ndarray:
        floor = (2.0**qos - 1.0) * (1.0 + 1e-9) + 1e-12 if qos > 0.0 else 0.0
        return np.minimum(target_cap, np.maximum(TRUST_GROWTH * t0, floor))

    caps_dl = _target_caps(np.asarray(expansion.dl_targets, dtype=float), config.qos_dl)
    caps_ul = _target_caps(np.asarray(expansion.ul_targets, dtype=float), config.qos_ul)

    lower = np.zeros(n)
    upper = np.empty(n)
    upper[layout.amplitudes] = np.maximum(ub, MIN_AMPLITUDE_BOX)
    if k_dl:
        lower[layout.rate_dl] = config.qos_dl
        upper[layout.rate_dl] = math.log2(1.0 + float(caps_dl.min()))
    else:
        upper[layout.rate_dl] = 1e-9
    if k_ul:
        lower[layout.rate_ul] = config.qos_ul
        upper[layout.rate_ul] = math.log2(1.0 + float(caps_ul.min()))
    else:
        upper[layout.rate_ul] = 1e-9
    upper[layout.targets_dl] = caps_dl
    upper[layout.targets_ul] = caps_ul
    upper[layout.slacks] = SLACK_BOX

    objective = np.zeros(n)
    if k_dl:
        objective[layout.rate_dl] = config.weight_dl
    if k_ul:
        objective[layout.rate_ul] = config.weight_ul
    objective[layout.slacks] = -penalty
    # Tiny per-user target reward: amplitude directions that no binding
    # min-rate row cares about then pull every user toward its own model
    # frontier instead of drifting to the barrier's analytic center.  The
    # normalization keeps each user's bonus bounded so the min rate stays
    # lexicographically first.
    if k_dl:
        objective[layout.targets_dl] = (
            SECONDARY_BONUS * config.weight_dl / np.maximum(1.0, caps_dl)
        )
    if k_ul:
        objective[layout.targets_ul] = (
            SECONDARY_BONUS * config.weight_ul / np.maximum(1.0, caps_ul)
        )

    constraints = []
    base_t_dl = layout.targets_dl.start
    base_t_ul = layout.targets_ul.start
    base_s_dl = layout.slacks_dl.start
    base_s_ul = layout.slacks_ul.start
    for k, model in enumerate(dl_models):
        Qa, ga, g_target, b = _assemble_dl_row(model, a0, float(expansion.dl_targets[k]))
        Q = np.zeros((n, n))
        Q[layout.amplitudes, layout.amplitudes] = Qa
        g = np.zeros(n)
        g[layout.amplitudes] = ga
        g[base_t_dl + k] = g_target
        g[base_s_dl + k] = -1.0
        constraints.append(QuadConstraint(Q=Q, g=g, b=b))
    for q, model in enumerate(ul_models):
        Qa, ga, g_target, b = _assemble_ul_row(model, a0, float(expansion.ul_targets[q]))
        Q = np.zeros((n, n))
        Q[layout.amplitudes, layout.amplitudes] = Qa
        g = np.zeros(n)
        g[layout.amplitudes] = ga
        g[base_t_ul + q] = g_target
        g[base_s_ul + q] = -1.0
        constraints.append(QuadConstraint(Q=Q, g=g, b=b))
    for k in range(k_dl):
        constraints.append(ExpoConstraint(exp_index=layout.rate_dl, bound_index=base_t_dl + k))
    for q in range(k_ul):
        constraints.append(ExpoConstraint(exp_index=layout.rate_ul, bound_index=base_t_ul + q))

    program = ConvexProgram(
        num_vars=n,
        objective=objective,
        constraints=constraints,
        lower=lower,
        upper=upper,
    )
    return Subproblem(
        program=program,
        layout=layout,
        expansion=expansion,
        penalty=penalty,
        target_cap=target_cap,
    )


def linearized_residual(
    sub: Subproblem, side: str, user: int, alpha: np.ndarray, target: float
) -> float:
    """Slack of one linearized SINR row at the given amplitudes and target.

    Evaluated with the slack variable at zero, so a nonnegative value means
    the restriction is satisfied without help.  By construction this never
    exceeds the exact model residual and matches it at the expansion point.
    """
    layout = sub.layout
    if side == "dl":
        row = sub.program.constraints[user]
        t_index = layout.targets_dl.start + user
    elif side == "ul":
        row = sub.program.constraints[layout.num_dl + user]
        t_index = layout.targets_ul.start + user
    else:
        raise ValueError("side must be 'dl' or 'ul'")
    x = np.zeros(layout.num_vars)
    x[layout.amplitudes] = alpha
    x[t_index] = target
    return float(row.b - (x @ row.Q @ x + row.g @ x))


# ---------------------------------------------------------------------------
# Optimization driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerOptions:
    max_iterations: int = 100       # subproblem solves per approximation pass
    rate_tol: float = 1e-5          # penalized-objective stall tolerance
    slack_tol: float = 1e-5         # residual slack allowed when converged
    penalty_init: float = 10.0
    penalty_growth: float = 1.5
    penalty_cap: float = 1e4
    num_starts: int = 1
    refresh_rounds: int = 0         # extra passes with beamformers rebuilt
    projection_rounds: int = 5      # power re-projection iterations at the end


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    penalty: float
    objective: float
    accepted: bool
    max_slack: float
    rate_dl: float
    rate_ul: float


@dataclass(frozen=True)
class OptimizationResult:
    weights: RepeaterWeights
    beamforming: BeamformingSolution
    performance: DropPerformance
    converged: bool
    iterations: int
    max_slack: float
    trace: list
    start_index: int
    model_alpha: np.ndarray        # solution before the power re-projection
    model_alpha_upper: np.ndarray  # amplitude box used by the model
    model_dl: list = field(default_factory=list)
    model_ul: list = field(default_factory=list)


@dataclass
class ScaPassResult:
    """Outcome of one approximation pass with frozen beamformers."""

    alpha: np.ndarray
    converged: bool
    max_slack: float
    iterations: int
    trace: list
    dl_models: list
    ul_models: list


def _model_targets(models, alpha, sinr_fn) -> np.ndarray:
    """Per-user model SINR at ``alpha``, floored for use as expansion targets."""
    return np.array([max(sinr_fn(m, alpha), TARGET_FLOOR) for m in models])


def _true_targets(real, weights, bf, config) -> tuple[np.ndarray, np.ndarray]:
    k_dl, k_ul = real.h_bs_dl.shape[0], real.h_ul_bs.shape[0]
    dl = np.array(
        [max(dl_sinr(k, real, weights, bf, config).sinr, TARGET_FLOOR) for k in range(k_dl)]
    )
    ul = np.array(
        [max(ul_sinr(q, real, weights, bf, config).sinr, TARGET_FLOOR) for q in range(k_ul)]
    )
    return dl, ul


def sca_pass(
    real: ChannelRealization,
    bf: BeamformingSolution,
    fading: LargeScaleFading,
    config: ScenarioConfig,
    options: OptimizerOptions,
    alpha0: np.ndarray,
    alpha_upper: np.ndarray,
) -> ScaPassResult:
    """One approximation pass with the beamformers frozen at ``bf``."""
    dl_models = dl_sinr_models(real, bf, fading, config, alpha_upper)
    ul_models = ul_sinr_models(real, bf, fading, config, alpha_upper)
    dl_t, ul_t = _true_targets(real, RepeaterWeights(alpha0.copy()), bf, config)
    # Expansion targets must stay deliverable by the model, otherwise the
    # reciprocal-target tangents degenerate and slack decouples the rate
    # variables from the amplitudes.
    dl_t = np.minimum(dl_t, _model_targets(dl_models, alpha0, dl_model_sinr))
    ul_t = np.minimum(ul_t, _model_targets(ul_models, alpha0, ul_model_sinr))

    alpha = alpha0.copy()
    penalty = options.penalty_init
    prev_rate_part = None
    prev_phi_sum = 0.0
    streak = 0
    converged_rate = False
    max_slack = math.inf
    trace = []
    iterations = 0

    for it in range(1, options.max_iterations + 1):
        iterations = it
        sub = build_subproblem(
            dl_models, ul_models, ExpansionPoint(alpha, dl_t, ul_t), penalty, config
        )
        layout = sub.layout
        try:
            x0 = find_strictly_feasible(sub.program)
            report = solve(sub.program, x0)
        except InfeasibleProgramError:
            trace.append(
                IterationRecord(it, penalty, math.nan, False, math.nan, math.nan, math.nan)
            )
            penalty = min(penalty * options.penalty_growth, options.penalty_cap)
            streak = 0
            continue
        x = report.x
        rate_dl = float(x[layout.rate_dl]) if layout.num_dl else 0.0
        rate_ul = float(x[layout.rate_ul]) if layout.num_ul else 0.0
        rate_part = config.weight_dl * rate_dl * (layout.num_dl > 0) + (
            config.weight_ul * rate_ul * (layout.num_ul > 0)
        )
        phi = x[layout.slacks]
        phi_sum = float(phi.sum())
        slack_now = float(phi.max()) if phi.size else 0.0
        p_new = rate_part - penalty * phi_sum
        if prev_rate_part is None:
            p_ref = -math.inf
        else:
            p_ref = prev_rate_part - penalty * prev_phi_sum
        accepted = p_new >= p_ref - 1e-9 * max(1.0, abs(p_ref))
        if accepted:
            delta = abs(p_new - p_ref)
            alpha = np.clip(x[layout.amplitudes], 0.0, alpha_upper)
            dl_t = np.minimum(
                np.maximum(x[layout.targets_dl], TARGET_FLOOR),
                _model_targets(dl_models, alpha, dl_model_sinr),
            )
            ul_t = np.minimum(
                np.maximum(x[layout.targets_ul], TARGET_FLOOR),
                _model_targets(ul_models, alpha, ul_model_sinr),
            )
            prev_rate_part, prev_phi_sum = rate_part, phi_sum
            max_slack = slack_now
            # While residual slack remains, a stalled objective just means the
            # penalty must keep escalating; only count the stop streak once the
            # iterate is feasible or the penalty has nowhere left to go.
            settled = slack_now <= options.slack_tol or penalty >= options.penalty_cap
            streak = streak + 1 if (delta <= options.rate_tol and settled) else 0
        else:
            streak = 0
        trace.append(
            IterationRecord(it, penalty, p_new, accepted, slack_now, rate_dl, rate_ul)
        )
        if streak >= 3:
            converged_rate = True
            break
        penalty = min(penalty * options.penalty_growth, options.penalty_cap)

    if not math.isfinite(max_slack):
        max_slack = math.inf
    converged = converged_rate and max_slack <= options.slack_tol
    return ScaPassResult(
        alpha=alpha,
        converged=converged,
        max_slack=max_slack,
        iterations=iterations,
        trace=trace,
        dl_models=dl_models,
        ul_models=ul_models,
    )


def _weighted_sum_se(perf, config):
    return config.weight_dl * float(perf.dl_se.sum()) + config.weight_ul * float(
        perf.ul_se.sum()
    )


def _prune_weights(real, fading, config, alpha, bf, perf):
    """Switch off repeaters whose amplification does not pay for itself.

    Amplitudes that no binding rate constraint cares about come back from the
    subproblem at arbitrary interior values, and each of them still forwards
    noise into every user.  A greedy sweep zeroes an amplitude whenever doing
    so lowers neither the true objective nor the aggregate weighted
    throughput, so stray noise-forwarding amplitudes are removed while
    amplification that genuinely carries some user's rate is kept even when
    that user is not the current bottleneck.  Every trial is clipped to the
    power box of its own rebuilt beamformers, so the result stays feasible
    without a separate projection.
    """
    obj = perf.objective
    total = _weighted_sum_se(perf, config)
    order = np.argsort(alpha)
    for _ in range(2):
        changed = False
        for idx in order:
            if alpha[idx] <= 0.0:
                continue
            trial = alpha.copy()
            trial[idx] = 0.0
            try:
                bf_trial = build_beamforming(real, RepeaterWeights(trial.copy()), fading)
                bound = compute_alpha_bounds(real, bf_trial, config)
                if np.any(trial > bound):
                    trial = np.minimum(trial, bound)
                    bf_trial = build_beamforming(real, RepeaterWeights(trial.copy()), fading)
            except (DegenerateChannelError, IllConditionedChannelError):
                continue
            perf_trial = evaluate_drop(real, RepeaterWeights(trial), bf_trial, config)
            total_trial = _weighted_sum_se(perf_trial, config)
            improves = perf_trial.objective > obj + 1e-12
            tie_ok = perf_trial.objective >= obj - 1e-12 and total_trial >= total - 1e-9
            if improves or tie_ok:
                alpha, bf, perf = trial, bf_trial, perf_trial
                obj = perf_trial.objective
                total = total_trial
                changed = True
        if not changed:
            break
    return alpha, bf, perf


def _grow_weights(real, fading, config, alpha, bf, perf):
    """Turn on amplification that raises throughput without costing the bottleneck.

    The subproblem has no reason to spend amplification on users above the
    minimum, so drops whose bottleneck cannot be helped come back all-off even
    when some repeater could cheaply serve a mid-rate user.  A single greedy
    sweep tries a few fractions of each idle repeater's power cap and keeps
    the largest one that leaves the true objective intact while strictly
    raising the aggregate weighted throughput.
    """
    obj = perf.objective
    sum_dl = float(perf.dl_se.sum())
    sum_ul = float(perf.ul_se.sum())

    def try_levels(idx, levels):
        nonlocal alpha, bf, perf, obj, sum_dl, sum_ul
        for level in levels:
            if level <= 0.0:
                continue
            trial = alpha.copy()
            trial[idx] = level
            try:
                bf_trial = build_beamforming(real, RepeaterWeights(trial.copy()), fading)
                bound = compute_alpha_bounds(real, bf_trial, config)
                if np.any(trial > bound):
                    trial = np.minimum(trial, bound)
                    bf_trial = build_beamforming(real, RepeaterWeights(trial.copy()), fading)
            except (DegenerateChannelError, IllConditionedChannelError):
                continue
            perf_trial = evaluate_drop(real, RepeaterWeights(trial), bf_trial, config)
            dl_trial = float(perf_trial.dl_se.sum())
            ul_trial = float(perf_trial.ul_se.sum())
            # Neither side may pay for the other's gain.
            if (
                perf_trial.objective >= obj - 1e-12
                and dl_trial >= sum_dl - 1e-9
                and ul_trial >= sum_ul - 1e-9
                and dl_trial + ul_trial > sum_dl + sum_ul + 1e-9
            ):
                alpha, bf, perf = trial, bf_trial, perf_trial
                obj = perf_trial.objective
                sum_dl, sum_ul = dl_trial, ul_trial
                return True
        return False

    # Active amplitudes sit where the bottleneck rate is flat, so backing one
    # off can trim collateral interference at no objective cost.
    for idx in np.flatnonzero(alpha > 0.0):
        try_levels(idx, (0.5 * alpha[idx], 0.75 * alpha[idx]))
    bounds = compute_alpha_bounds(real, bf, config)
    for idx in np.argsort(-bounds):
        if alpha[idx] <= 0.0:
            try_levels(idx, bounds[idx] * np.array([0.5, 0.125, 0.03125, 0.0078125]))
    return alpha, bf, perf


def _trivial_result(real, fading, config, bf=None, start_index=0) -> OptimizationResult:
    n_rep = real.dims[4]
    weights = RepeaterWeights.zeros(n_rep)
    if bf is None:
        bf = build_beamforming(real, weights, fading)
    perf = evaluate_drop(real, weights, bf, config)
    return OptimizationResult(
        weights=weights,
        beamforming=bf,
        performance=perf,
        converged=True,
        iterations=0,
        max_slack=0.0,
        trace=[],
        start_index=start_index,
        model_alpha=np.zeros(n_rep),
        model_alpha_upper=np.zeros(n_rep),
    )


def optimize(
    real: ChannelRealization,
    fading: LargeScaleFading,
    config: ScenarioConfig,
    options: OptimizerOptions | None = None,
) -> OptimizationResult:
    """Optimize the amplification weights of every repeater for one drop.

    Freezes zero-forcing beamformers at an interior starting point, runs the
    successive approximation until the penalized objective stalls, then
    rebuilds the beamformers at the solution, re-projects the amplitudes onto
    the power-feasible box, and prunes repeaters that do not improve the true
    objective.  With several starts the best final objective wins, and the
    amplification-off solution always stays in the candidate set; without
    repeaters the evaluation is immediate.
    """
    options = options or OptimizerOptions()
    _, _, k_dl, k_ul, n_rep = real.dims
    if n_rep == 0 or (k_dl + k_ul) == 0:
        return _trivial_result(real, fading, config)

    bf_zero = build_beamforming(real, RepeaterWeights.zeros(n_rep), fading)
    upper_zero = compute_alpha_bounds(real, bf_zero, config)

    best = None
    for start in range(options.num_starts):
        fraction = (start + 1) / (options.num_starts + 1)
        anchor = fraction * upper_zero
        trace = []
        iterations = 0
        run = None
        for _ in range(1 + options.refresh_rounds):
            bf = build_beamforming(real, RepeaterWeights(anchor.copy()), fading)
            alpha_upper = compute_alpha_bounds(real, bf, config)
            anchor = np.minimum(anchor, alpha_upper)
            run = sca_pass(real, bf, fading, config, options, anchor, alpha_upper)
            anchor = run.alpha
            trace.extend(run.trace)
            iterations += run.iterations

        # Re-project onto the power box under rebuilt beamformers.
        alpha_star = anchor.copy()
        bf_final = bf
        for _ in range(options.projection_rounds):
            bf_final = build_beamforming(real, RepeaterWeights(alpha_star.copy()), fading)
            bound = compute_alpha_bounds(real, bf_final, config)
            if np.all(alpha_star <= bound * (1.0 + 1e-12) + 1e-300):
                break
            alpha_star = np.minimum(alpha_star, bound)

        weights = RepeaterWeights(alpha_star)
        perf = evaluate_drop(real, weights, bf_final, config)
        if np.any(alpha_star > 0.0):
            alpha_star, bf_final, perf = _prune_weights(
                real, fading, config, alpha_star, bf_final, perf
            )
            weights = RepeaterWeights(alpha_star)
        candidate = OptimizationResult(
            weights=weights,
            beamforming=bf_final,
            performance=perf,
            converged=run.converged,
            iterations=iterations,
            max_slack=run.max_slack,
            trace=trace,
            start_index=start,
            model_alpha=anchor,
            model_alpha_upper=run.dl_models[0].alpha_upper
            if run.dl_models
            else (run.ul_models[0].alpha_upper if run.ul_models else np.zeros(n_rep)),
            model_dl=run.dl_models,
            model_ul=run.ul_models,
        )
        if best is None or candidate.performance.objective > best.performance.objective:
            best = candidate

    # The amplification-off point is stationary for the approximation, so it
    # is never rediscovered from an interior start; keep it as a candidate so
    # a drop where repeaters cannot help never degrades below passthrough off.
    fallback = _trivial_result(real, fading, config, bf=bf_zero, start_index=-1)
    if fallback.performance.objective > best.performance.objective:
        best = fallback

    # Spend whatever amplification is still free on users above the minimum.
    alpha_won = best.weights.alpha.copy()
    grown, bf_grown, perf_grown = _grow_weights(
        real, fading, config, alpha_won.copy(), best.beamforming, best.performance
    )
    if np.any(grown != alpha_won):
        best = dataclasses.replace(
            best,
            weights=RepeaterWeights(grown),
            beamforming=bf_grown,
            performance=perf_grown,
        )
    return best
