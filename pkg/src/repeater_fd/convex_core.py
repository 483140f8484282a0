"""Dense log-barrier interior-point solver for small convex programs.

Supported program form (maximization):

    maximize    c . x
    subject to  a . x <= b                  (affine)
                x'Qx + g . x <= b           (quadratic, Q symmetric PSD)
                2**x[i] - 1 <= x[j]         (exponential epigraph)
                lower <= x <= upper         (finite box)

The solver follows the textbook recipe: a phase-I slack minimization to find
a strictly feasible point, then damped Newton centering steps along the
barrier path.  Problem sizes here stay below roughly a hundred variables, so
everything is dense and deterministic (no randomized pivoting, no RNG).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AffineConstraint",
    "QuadConstraint",
    "ExpoConstraint",
    "ConvexProgram",
    "SolverReport",
    "InfeasibleProgramError",
    "find_strictly_feasible",
    "solve",
    "dump_text",
    "parse_text",
]

LN2 = math.log(2.0)

# Barrier/backtracking parameters.
BARRIER_MU = 10.0          # barrier parameter growth per outer step
GAP_TOL = 1e-8             # stop once (number of barrier terms) / t <= this
ARMIJO_C = 0.01
ARMIJO_BETA = 0.5
NEWTON_TOL = 1e-10         # half squared Newton decrement threshold
MAX_INNER = 100
FEASIBLE_MARGIN = 1e-9     # phase-I success margin


class InfeasibleProgramError(RuntimeError):
    """Phase I finished without finding a strictly feasible point."""


@dataclass(frozen=True)
class AffineConstraint:
    a: np.ndarray
    b: float


@dataclass(frozen=True)
class QuadConstraint:
    Q: np.ndarray
    g: np.ndarray
    b: float


@dataclass(frozen=True)
class ExpoConstraint:
    exp_index: int    # i in 2**x[i] - 1 <= x[j]
    bound_index: int  # j


@dataclass
class ConvexProgram:
    num_vars: int
    objective: np.ndarray                 # maximize objective . x
    constraints: list = field(default_factory=list)
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self) -> None:
        n = self.num_vars
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (n,):
            raise ValueError("objective length must match num_vars")
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must match num_vars")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("bounds must be finite")
        if np.any(self.lower >= self.upper):
            raise ValueError("lower bounds must be strictly below upper bounds")
        for con in self.constraints:
            if isinstance(con, AffineConstraint):
                if np.asarray(con.a).shape != (n,):
                    raise ValueError("affine row length mismatch")
            elif isinstance(con, QuadConstraint):
                Q = np.asarray(con.Q, dtype=float)
                if Q.shape != (n, n) or np.asarray(con.g).shape != (n,):
                    raise ValueError("quadratic row shape mismatch")
                if not np.allclose(Q, Q.T, atol=1e-10 * max(1.0, np.abs(Q).max())):
                    raise ValueError("quadratic matrix must be symmetric")
                eigs = np.linalg.eigvalsh(0.5 * (Q + Q.T))
                if eigs.size and eigs.min() < -1e-8 * max(1.0, abs(eigs).max()):
                    raise ValueError("quadratic matrix must be positive semidefinite")
            elif isinstance(con, ExpoConstraint):
                if not (0 <= con.exp_index < n and 0 <= con.bound_index < n):
                    raise ValueError("exponential constraint index out of range")
            else:
                raise ValueError(f"unknown constraint type: {type(con)!r}")


@dataclass(frozen=True)
class SolverReport:
    x: np.ndarray
    objective_value: float
    kkt_residual: float
    barrier_iterations: int
    status: str  # "optimal" or "max_iter"


# ---------------------------------------------------------------------------
# Internal engine
# ---------------------------------------------------------------------------

class _Engine:
    """Barrier minimization of -t * (c . x) - sum log(-g_i(x)).

    Bounds are folded into the affine block.  ``slack_col`` adds the phase-I
    slack column to every functional constraint.
    """

    def __init__(self, program: ConvexProgram, slack_col: bool = False):
        n = program.num_vars + (1 if slack_col else 0)
        self.n = n
        self.slack = program.num_vars if slack_col else None

        rows, rhs = [], []
        self.quads: list[tuple[np.ndarray, np.ndarray, float]] = []
        self.expos: list[tuple[int, int]] = []
        for con in program.constraints:
            if isinstance(con, AffineConstraint):
                a = np.zeros(n)
                a[: program.num_vars] = con.a
                if slack_col:
                    a[self.slack] = -1.0
                rows.append(a)
                rhs.append(con.b)
            elif isinstance(con, QuadConstraint):
                Q = np.zeros((n, n))
                Q[: program.num_vars, : program.num_vars] = 0.5 * (
                    np.asarray(con.Q) + np.asarray(con.Q).T
                )
                g = np.zeros(n)
                g[: program.num_vars] = con.g
                if slack_col:
                    g[self.slack] = -1.0
                self.quads.append((Q, g, con.b))
            else:
                self.expos.append((con.exp_index, con.bound_index))
        # Box rows: x <= upper and -x <= -lower.
        for idx in range(program.num_vars):
            a = np.zeros(n)
            a[idx] = 1.0
            rows.append(a)
            rhs.append(program.upper[idx])
            a = np.zeros(n)
            a[idx] = -1.0
            rows.append(a)
            rhs.append(-program.lower[idx])
        self.A = np.array(rows) if rows else np.zeros((0, n))
        self.b = np.array(rhs)
        # Stacked quadratic and exponential blocks for vectorized evaluation.
        self.num_quads = len(self.quads)
        self.num_expos = len(self.expos)
        if self.quads:
            self.Q3 = np.stack([q for q, _, _ in self.quads])
            self.Gq = np.stack([g for _, g, _ in self.quads])
            self.bq = np.array([b for _, _, b in self.quads])
        else:
            self.Q3 = np.zeros((0, n, n))
            self.Gq = np.zeros((0, n))
            self.bq = np.zeros(0)
        self.expo_i = np.array([i for i, _ in self.expos], dtype=int)
        self.expo_j = np.array([j for _, j in self.expos], dtype=int)
        self.num_terms = len(self.b) + self.num_quads + self.num_expos

    # -- constraint residuals ------------------------------------------------

    def margins(self, x: np.ndarray) -> np.ndarray:
        """Slack of every barrier term (positive means strictly inside)."""
        parts = []
        if self.b.size:
            parts.append(self.b - self.A @ x)
        if self.bq.size:
            # slack column (phase I) is already folded into Gq
            qx = self.Q3 @ x
            parts.append(self.bq - qx @ x - self.Gq @ x)
        if self.expo_i.size:
            # clamp the exponent so wildly infeasible trial points stay finite
            f = x[self.expo_j] + 1.0 - np.exp2(np.minimum(x[self.expo_i], 1000.0))
            if self.slack is not None:
                f = f + x[self.slack]
            parts.append(f)
        if not parts:
            return np.zeros(0)
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    def phi(self, x: np.ndarray, c: np.ndarray, t: float) -> float:
        m = self.margins(x)
        if m.size and m.min() <= 0.0:
            return math.inf
        return -t * float(c @ x) - float(np.sum(np.log(m))) if m.size else -t * float(c @ x)

    def grad_hess(self, x: np.ndarray, c: np.ndarray, t: float):
        grad = -t * c
        hess = np.zeros((self.n, self.n))
        if self.b.size:
            r = self.b - self.A @ x
            w = 1.0 / r
            grad = grad + self.A.T @ w
            hess += (self.A * (w**2)[:, None]).T @ self.A
        if self.bq.size:
            qx = self.Q3 @ x                       # (m, n)
            f = self.bq - qx @ x - self.Gq @ x
            dg = 2.0 * qx + self.Gq                # per-row gradients
            w = 1.0 / f
            grad = grad + dg.T @ w
            hess += (dg * (w**2)[:, None]).T @ dg
            hess += np.tensordot(2.0 * w, self.Q3, axes=1)
        if self.expo_i.size:
            ii, jj = self.expo_i, self.expo_j
            p = np.exp2(x[ii])
            f = x[jj] + 1.0 - p
            if self.slack is not None:
                f = f + x[self.slack]
            w = 1.0 / f
            w2 = w * w
            lp = LN2 * p
            np.add.at(grad, ii, lp * w)
            np.add.at(grad, jj, -w)
            np.add.at(hess, (ii, ii), lp**2 * w2 + LN2 * lp * w)
            np.add.at(hess, (ii, jj), -lp * w2)
            np.add.at(hess, (jj, ii), -lp * w2)
            np.add.at(hess, (jj, jj), w2)
            if self.slack is not None:
                s_col = np.full_like(ii, self.slack)
                grad[self.slack] += -float(w.sum())
                np.add.at(hess, (ii, s_col), -lp * w2)
                np.add.at(hess, (s_col, ii), -lp * w2)
                np.add.at(hess, (jj, s_col), w2)
                np.add.at(hess, (s_col, jj), w2)
                hess[self.slack, self.slack] += float(w2.sum())
        return grad, hess

    # -- Newton centering ----------------------------------------------------

    def center(self, x, c, t, stop_early=None):
        """Damped Newton until the decrement is small; returns (x, steps, stalled)."""
        steps = 0
        for _ in range(MAX_INNER):
            grad, hess = self.grad_hess(x, c, t)
            d = self._newton_direction(hess, grad)
            if d is None:
                return x, steps, True
            lam2 = float(-grad @ d)
            if lam2 / 2.0 <= NEWTON_TOL:
                return x, steps, False
            gd = float(grad @ d)
            ray = self._ray_phi(x, d, c, t)
            phi0 = ray(0.0)
            step = 1.0
            while step > 1e-18:
                # The hoisted polynomial margins can drift from the direct
                # evaluation by an ulp near the boundary, so re-check the
                # accepted point exactly before moving there.
                if ray(step) <= phi0 + ARMIJO_C * step * gd and (
                    self.margins(x + step * d).min() > 0.0
                ):
                    break
                step *= ARMIJO_BETA
            else:
                return x, steps, True
            x = x + step * d
            steps += 1
            if stop_early is not None and stop_early(x):
                return x, steps, False
        return x, steps, False

    def _ray_phi(self, x, d, c, t):
        """Barrier value along x + s*d, with margin polynomials hoisted.

        Affine margins are linear in the step length and quadratic margins are
        quadratic, so the Armijo backtracking loop can reuse precomputed
        coefficients instead of re-evaluating every constraint from scratch.
        """
        cx, cd = float(c @ x), float(c @ d)
        r0 = self.b - self.A @ x
        ra = self.A @ d
        if self.bq.size:
            qx, qd = self.Q3 @ x, self.Q3 @ d
            f0 = self.bq - qx @ x - self.Gq @ x
            f1 = 2.0 * (qd @ x) + self.Gq @ d
            f2 = qd @ d
        xi0, di = x[self.expo_i], d[self.expo_i]
        xj0, dj = x[self.expo_j], d[self.expo_j]
        if self.slack is not None and xi0.size:
            off0, doff = x[self.slack], d[self.slack]

        def value(s: float) -> float:
            logs = 0.0
            if r0.size:
                m = r0 - s * ra
                if m.min() <= 0.0:
                    return math.inf
                logs += float(np.log(m).sum())
            if self.bq.size:
                m = f0 - s * f1 - (s * s) * f2
                if m.min() <= 0.0:
                    return math.inf
                logs += float(np.log(m).sum())
            if xi0.size:
                m = xj0 + s * dj + 1.0 - np.exp2(np.minimum(xi0 + s * di, 1000.0))
                if self.slack is not None:
                    m = m + (off0 + s * doff)
                if m.min() <= 0.0:
                    return math.inf
                logs += float(np.log(m).sum())
            return -t * (cx + s * cd) - logs

        return value

    @staticmethod
    def _newton_direction(hess, grad):
        scale = max(float(np.abs(np.diag(hess)).max()), 1.0)
        for jitter in (0.0, 1e-12, 1e-9, 1e-6):
            try:
                d = np.linalg.solve(hess + jitter * scale * np.eye(hess.shape[0]), -grad)
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(d)) and float(grad @ d) < 0.0:
                return d
        return None

    def run(self, x0, c, t0=1.0, stop_early=None):
        """Barrier path; returns (x, total Newton steps, reached_gap, final t)."""
        x = np.asarray(x0, dtype=float).copy()
        t = t0
        total = 0
        while True:
            x, steps, stalled = self.center(x, c, t, stop_early)
            total += steps
            if stop_early is not None and stop_early(x):
                return x, total, True, t
            if self.num_terms / t <= GAP_TOL:
                return x, total, True, t
            if stalled:
                return x, total, False, t
            t *= BARRIER_MU


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def find_strictly_feasible(program: ConvexProgram) -> np.ndarray:
    """Phase I: return a point satisfying every constraint with margin.

    Starts from the box center; if that is already strictly inside, returns
    it immediately.  Otherwise minimizes the worst violation with a shared
    slack variable and stops as soon as the margin clears
    ``FEASIBLE_MARGIN``.  Raises :class:`InfeasibleProgramError` when the
    minimized worst violation stays nonnegative.
    """
    center = 0.5 * (program.lower + program.upper)
    plain = _Engine(program, slack_col=False)
    start_margins = plain.margins(center)
    if start_margins.size == 0 or start_margins.min() >= FEASIBLE_MARGIN:
        return center

    n = program.num_vars
    aug = _Engine(program, slack_col=True)
    s0 = float(-start_margins.min()) + 1.0  # worst violation plus headroom
    # Box rows for the slack column itself.
    row_up = np.zeros(n + 1)
    row_up[n] = 1.0
    row_dn = -row_up
    aug.A = np.vstack([aug.A, row_up, row_dn])
    aug.b = np.concatenate([aug.b, [s0 + 1.0, 10.0 * (abs(s0) + 1.0)]])
    aug.num_terms = len(aug.b) + len(aug.quads) + len(aug.expos)

    c = np.zeros(n + 1)
    c[n] = -1.0  # maximize -s, i.e. push the worst violation negative
    x = np.concatenate([center, [s0]])

    def good(z):
        return plain.margins(z[:n]).min() >= FEASIBLE_MARGIN

    x_out, _, _, _ = aug.run(x, c, stop_early=good)
    if good(x_out):
        return x_out[:n]
    raise InfeasibleProgramError("no strictly feasible point found")


def solve(program: ConvexProgram, x0: np.ndarray) -> SolverReport:
    """Maximize the program objective from a strictly feasible start."""
    engine = _Engine(program, slack_col=False)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (program.num_vars,):
        raise ValueError("x0 has the wrong length")
    if engine.margins(x0).size and engine.margins(x0).min() <= 0.0:
        raise ValueError("x0 is not strictly feasible")
    c = program.objective
    x, steps, reached, t_final = engine.run(x0, c)
    grad, _ = engine.grad_hess(x, c, t_final)
    kkt = float(np.abs(grad).max() / t_final) if t_final > 0 else math.inf
    status = "optimal" if reached else "max_iter"
    return SolverReport(
        x=x,
        objective_value=float(c @ x),
        kkt_residual=kkt,
        barrier_iterations=steps,
        status=status,
    )


# ---------------------------------------------------------------------------
# Debug dump
# ---------------------------------------------------------------------------
#
# Plain-text schema, one token stream per line:
#   convex-program v1
#   vars N
#   objective <N floats>
#   lower <N floats>
#   upper <N floats>
#   affine <b> <N floats>
#   quad <b> <N floats for g> <N*N floats for Q, row-major>
#   expo <i> <j>
#   end
# Floats are printed with repr so the round trip is exact.

def dump_text(program: ConvexProgram) -> str:
    def fmt(values):
        return " ".join(repr(float(v)) for v in np.atleast_1d(values))

    lines = [
        "convex-program v1",
        f"vars {program.num_vars}",
        f"objective {fmt(program.objective)}",
        f"lower {fmt(program.lower)}",
        f"upper {fmt(program.upper)}",
    ]
    for con in program.constraints:
        if isinstance(con, AffineConstraint):
            lines.append(f"affine {repr(float(con.b))} {fmt(con.a)}")
        elif isinstance(con, QuadConstraint):
            lines.append(
                f"quad {repr(float(con.b))} {fmt(con.g)} {fmt(np.asarray(con.Q).ravel())}"
            )
        else:
            lines.append(f"expo {con.exp_index} {con.bound_index}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> ConvexProgram:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0] != "convex-program v1":
        raise ValueError("not a convex-program dump")
    if lines[-1] != "end":
        raise ValueError("missing end marker")
    n = int(lines[1].split()[1])

    def floats(tokens):
        return np.array([float(tok) for tok in tokens])

    objective = floats(lines[2].split()[1:])
    lower = floats(lines[3].split()[1:])
    upper = floats(lines[4].split()[1:])
    constraints = []
    for ln in lines[5:-1]:
        kind, *rest = ln.split()
        if kind == "affine":
            constraints.append(AffineConstraint(a=floats(rest[1:]), b=float(rest[0])))
        elif kind == "quad":
            b = float(rest[0])
            g = floats(rest[1 : 1 + n])
            Q = floats(rest[1 + n :]).reshape(n, n)
            constraints.append(QuadConstraint(Q=Q, g=g, b=b))
        elif kind == "expo":
            constraints.append(ExpoConstraint(int(rest[0]), int(rest[1])))
        else:
            raise ValueError(f"unknown constraint line: {ln}")
    return ConvexProgram(
        num_vars=n,
        objective=objective,
        constraints=constraints,
        lower=lower,
        upper=upper,
    )
