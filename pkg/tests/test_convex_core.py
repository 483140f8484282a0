"""Interior-point solver: analytic optima, grid oracles, and serialization."""
import numpy as np
import pytest

from repeater_fd.convex_core import (
    AffineConstraint,
    ConvexProgram,
    ExpoConstraint,
    InfeasibleProgramError,
    QuadConstraint,
    dump_text,
    find_strictly_feasible,
    parse_text,
    solve,
)


def box(n, lo=-5.0, hi=5.0):
    return np.full(n, lo), np.full(n, hi)


# ---------------------------------------------------------------------------
# Analytic optima
# ---------------------------------------------------------------------------

def test_lp_vertex():
    lo, hi = box(1)
    program = ConvexProgram(
        1, np.array([1.0]), [AffineConstraint(a=np.array([1.0]), b=3.0)], lo, hi
    )
    report = solve(program, np.array([0.0]))
    assert report.status == "optimal"
    assert report.objective_value == pytest.approx(3.0, abs=1e-8)
    assert report.kkt_residual <= 1e-6


def test_circle_tangent():
    # max x1 + x2 on the disk of radius sqrt(2): optimum (1, 1), value 2.
    lo, hi = box(2)
    program = ConvexProgram(
        2,
        np.array([1.0, 1.0]),
        [QuadConstraint(Q=np.eye(2), g=np.zeros(2), b=2.0)],
        lo,
        hi,
    )
    report = solve(program, np.zeros(2))
    assert report.objective_value == pytest.approx(2.0, abs=1e-7)
    assert np.allclose(report.x, [1.0, 1.0], atol=1e-6)


def test_expo_bound():
    # max t subject to 2^t - 1 <= T and T <= 7: optimum t = 3.
    lo, hi = box(2, -10.0, 10.0)
    program = ConvexProgram(
        2,
        np.array([1.0, 0.0]),
        [
            ExpoConstraint(exp_index=0, bound_index=1),
            AffineConstraint(a=np.array([0.0, 1.0]), b=7.0),
        ],
        lo,
        hi,
    )
    report = solve(program, np.array([0.0, 1.0]))
    assert report.objective_value == pytest.approx(3.0, abs=1e-7)


def test_quadratic_interval():
    # x^2 <= 1 caps the maximizer of x at 1.
    lo, hi = box(1, -4.0, 4.0)
    program = ConvexProgram(
        1,
        np.array([1.0]),
        [QuadConstraint(Q=np.eye(1), g=np.zeros(1), b=1.0)],
        lo,
        hi,
    )
    report = solve(program, np.array([0.0]))
    assert report.objective_value == pytest.approx(1.0, abs=1e-7)


def test_unconstrained_box_corner():
    lo, hi = box(3, -1.0, 2.0)
    program = ConvexProgram(3, np.array([1.0, -1.0, 2.0]), [], lo, hi)
    report = solve(program, np.zeros(3))
    assert np.allclose(report.x, [2.0, -1.0, 2.0], atol=1e-6)
    assert report.objective_value == pytest.approx(7.0, abs=1e-6)


# ---------------------------------------------------------------------------
# Grid oracle
# ---------------------------------------------------------------------------

def test_random_qcqp_matches_grid():
    rng = np.random.default_rng(123)
    a = rng.normal(size=(2, 2))
    q = a.T @ a + 0.3 * np.eye(2)
    g = rng.normal(size=2)
    c = rng.normal(size=2)
    b = 2.5
    lo, hi = box(2, -2.0, 2.0)
    program = ConvexProgram(2, c, [QuadConstraint(Q=q, g=g, b=b)], lo, hi)

    xs = np.linspace(-2.0, 2.0, 801)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    feas = np.einsum("gi,ij,gj->g", pts, q, pts) + pts @ g <= b
    grid_best = float((pts @ c)[feas].max())

    report = solve(program, find_strictly_feasible(program))
    #

    assert report.objective_value >= grid_best - 5e-4
    q_val = report.x @ q @ report.x + g @ report.x
    assert q_val <= b + 1e-8


# ---------------------------------------------------------------------------
# Phase I
# ---------------------------------------------------------------------------

def test_feasible_point_strictly_inside():
    rng = np.random.default_rng(7)
    for _ in range(5):
        center = rng.uniform(-1.0, 1.0, size=2)
        program = ConvexProgram(
            2,
            np.array([1.0, 0.0]),
            [
                QuadConstraint(
                    Q=np.eye(2),
                    g=-2.0 * center,
                    b=0.25 - center @ center,  # ball of radius 0.5 at center
                )
            ],
            *box(2, -3.0, 3.0),
        )
        x = find_strictly_feasible(program)
        assert (x - center) @ (x - center) < 0.25
        report = solve(program, x)
        assert report.objective_value == pytest.approx(center[0] + 0.5, abs=1e-6)


def test_phase_one_detects_empty_interior():
    # x <= -4 clashes with the box lower bound of -3.
    program = ConvexProgram(
        1,
        np.array([1.0]),
        [AffineConstraint(a=np.array([1.0]), b=-4.0)],
        *box(1, -3.0, 3.0),
    )
    with pytest.raises(InfeasibleProgramError):
        find_strictly_feasible(program)


def test_solve_rejects_infeasible_start():
    program = ConvexProgram(
        1,
        np.array([1.0]),
        [AffineConstraint(a=np.array([1.0]), b=0.5)],
        *box(1),
    )
    with pytest.raises(ValueError):
        solve(program, np.array([1.0]))
    with pytest.raises(ValueError):
        solve(program, np.array([0.0, 0.0]))


# ---------------------------------------------------------------------------
# Validation, determinism, serialization
# ---------------------------------------------------------------------------

def test_program_validation():
    lo, hi = box(2)
    with pytest.raises(ValueError):
        ConvexProgram(2, np.array([1.0]), [], lo, hi)
    with pytest.raises(ValueError):
        ConvexProgram(2, np.ones(2), [], hi, lo)  # inverted bounds
    with pytest.raises(ValueError):
        ConvexProgram(
            2,
            np.ones(2),
            [QuadConstraint(Q=np.array([[0.0, 1.0], [1.0, 0.0]]), g=np.zeros(2), b=1.0)],
            lo,
            hi,
        )  # indefinite
    with pytest.raises(ValueError):
        ConvexProgram(
            2,
            np.ones(2),
            [ExpoConstraint(exp_index=0, bound_index=5)],
            lo,
            hi,
        )


def test_deterministic_solve():
    program = ConvexProgram(
        2,
        np.array([1.0, 0.5]),
        [QuadConstraint(Q=np.eye(2), g=np.zeros(2), b=2.0)],
        *box(2),
    )
    a = solve(program, np.zeros(2))
    b = solve(program, np.zeros(2))
    assert np.array_equal(a.x, b.x)
    assert a.objective_value == b.objective_value
    assert a.barrier_iterations == b.barrier_iterations


def test_dump_parse_round_trip():
    program = ConvexProgram(
        2,
        np.array([1.0, -0.25]),
        [
            AffineConstraint(a=np.array([1.0, 1.0]), b=1.5),
            QuadConstraint(Q=np.eye(2), g=np.array([0.1, -0.2]), b=2.0),
            ExpoConstraint(exp_index=0, bound_index=1),
        ],
        *box(2, -2.0, 4.0),
    )
    text = dump_text(program)
    back = parse_text(text)
    assert back.num_vars == 2
    assert np.allclose(back.objective, program.objective)
    assert np.allclose(back.lower, program.lower)
    assert np.allclose(back.upper, program.upper)
    assert len(back.constraints) == 3
    start = np.array([0.0, 1.0])  # strictly inside the expo row
    r_a = solve(program, start)
    r_b = solve(back, start)
    assert r_a.objective_value == pytest.approx(r_b.objective_value, rel=1e-12)


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_text("nonsense\n")
