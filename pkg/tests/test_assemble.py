import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from polytraj.assemble import (
    CONSTANT,
    TIME,
    TIME_SQUARED,
    acceleration_blocks,
    all_blocks,
    boundary_blocks,
    expected_row_count,
    polytope_blocks,
    velocity_blocks,
    velocity_lp_reducible,
)
from polytraj.curves import BezierCurve
from polytraj.errors import UnsupportedDegreeError
from polytraj.problem import EQUALITY, INEQUALITY, DerivativeBound, GeneratorConfig, PTProblem, generate

from instances import box, interval


def line(degree=1, vel=(), acc=(), start_velocity=None, end_velocity=None, lo=0.0, hi=1.0):
    return PTProblem(polytopes=(interval(lo, hi),), degree=degree, start=[0.0], end=[1.0],
                     start_velocity=start_velocity, end_velocity=end_velocity,
                     velocity_bounds=vel, acceleration_bounds=acc)


def test_single_polytope_block_is_per_point_halfspaces():
    poly = box([0, 0], [1, 1])
    p = PTProblem(polytopes=(poly,), degree=3, start=[0.1, 0.1], end=[0.9, 0.9])
    (block,) = polytope_blocks(p, [1.0])
    assert block.relation == INEQUALITY and block.rhs_scale == CONSTANT
    assert np.allclose(block.matrix, np.kron(np.eye(4), poly.normals))
    assert np.array_equal(block.offset, np.tile(poly.offsets, 4))
    assert block.rows == 4 * poly.n_facets


def test_polytope_block_accepts_inside_rejects_outside():
    p = PTProblem(polytopes=(box([0, 0], [1, 1]),), degree=1, start=[0.2, 0.2], end=[0.8, 0.8])
    (block,) = polytope_blocks(p, [1.0])
    inside = np.array([0.2, 0.2, 0.8, 0.8])
    outside = np.array([0.2, 0.2, 1.3, 0.8])
    assert np.all(block.matrix @ inside <= block.offset)
    assert np.any(block.matrix @ outside > block.offset)


def test_polytope_block_proportion_count_checked():
    p = generate(GeneratorConfig(seed=1, n_polytopes=3))
    with pytest.raises(ValueError):
        polytope_blocks(p, [0.5, 0.5])


def test_velocity_row_examples():
    p = line(vel=(DerivativeBound([[1.0]], [0.5]),))
    (block,) = velocity_blocks(p)
    assert block.rhs_scale == TIME
    assert np.array_equal(block.matrix, [[-1.0, 1.0]]) and np.array_equal(block.offset, [0.5])

    n = 4
    p = line(degree=n, start_velocity=[0.0])
    (rest,) = velocity_blocks(p)
    assert rest.relation == EQUALITY
    assert np.array_equal(rest.matrix, [[-n, n, 0, 0, 0]])

    p = line(degree=2, vel=(DerivativeBound.box([1.0]),))
    assert velocity_blocks(p)[0].rows == 4


def test_acceleration_row_examples():
    p = line(degree=2, acc=(DerivativeBound([[1.0]], [0.7]),))
    (block,) = acceleration_blocks(p)
    assert block.rhs_scale == TIME_SQUARED
    assert np.array_equal(block.matrix, [[2.0, -4.0, 2.0]])

    c = 0.2
    p = line(degree=2, acc=(DerivativeBound([[-1.0]], [-c]),))
    (block,) = acceleration_blocks(p)
    assert np.array_equal(block.matrix, [[-2.0, 4.0, -2.0]]) and np.array_equal(block.offset, [-c])

    p = line(degree=5, acc=(DerivativeBound([[1.0]], [1.0]),))
    assert acceleration_blocks(p)[0].rows == 4

    with pytest.raises(UnsupportedDegreeError):
        acceleration_blocks(line(degree=1, acc=(DerivativeBound([[1.0]], [1.0]),)))


def test_boundary_rows():
    p = PTProblem(polytopes=(box([0, 0], [1, 1]),), degree=3, start=[0.0, 0.0], end=[1.0, 0.5])
    b = boundary_blocks(p)
    assert b.relation == EQUALITY and b.rhs_scale == CONSTANT
    x = np.zeros(8)
    x[6:] = [1.0, 0.5]
    assert np.allclose(b.matrix @ x, b.offset)

    # 1-D, degree 1, one window: fully determined
    q = line()
    A = np.vstack([blk.matrix for blk in all_blocks(q, [1.0]) if blk.relation == EQUALITY])
    assert np.linalg.matrix_rank(A) == 2


def test_boundary_outside_polytope_warns():
    p = PTProblem(polytopes=(box([0, 0], [1, 1]),), degree=2, start=[2.0, 0.0], end=[0.5, 0.5])
    with pytest.warns(UserWarning, match="start"):
        boundary_blocks(p)


def test_stationary_curve_when_start_equals_end():
    p = PTProblem(polytopes=(box([0, 0], [1, 1]),), degree=3, start=[0.5, 0.5], end=[0.5, 0.5],
                  start_velocity=[0, 0], end_velocity=[0, 0],
                  velocity_bounds=(DerivativeBound.box([1.0, 1.0]),))
    x = np.tile([0.5, 0.5], 4)
    for blk in all_blocks(p, [1.0]):
        r = blk.matrix @ x - blk.offset * (0.0 if blk.rhs_scale != CONSTANT else 1.0)
        assert np.all(np.abs(r) <= 1e-12) if blk.relation == EQUALITY else np.all(r <= 1e-12)


def test_lp_reducibility_detection():
    free = generate(GeneratorConfig(seed=2, start_at_rest=False, end_at_rest=False))
    assert velocity_lp_reducible(free)
    assert not velocity_lp_reducible(generate(GeneratorConfig(seed=2)))
    shifted = line(vel=(DerivativeBound([[-1.0]], [-0.1]),))
    assert not velocity_lp_reducible(shifted)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(2, 10), st.sampled_from([2, 3]))
def test_row_count_formula(seed, npol, degree, dim):
    p = generate(GeneratorConfig(seed=seed, n_polytopes=npol, degree=degree, dim=dim,
                                 start_at_rest=bool(seed % 2), end_at_rest=bool(seed % 3)))
    s = np.full(npol, 1.0 / npol)
    s[-1] = 1.0 - s[:-1].sum()
    assert sum(b.rows for b in all_blocks(p, s)) == expected_row_count(p)


def _feasible_points(problem, s):
    """Any control points meeting the position rows (LP, zero objective)."""
    blocks = [boundary_blocks(problem)] + polytope_blocks(problem, s)
    eq = [b for b in blocks if b.relation == EQUALITY]
    ub = [b for b in blocks if b.relation == INEQUALITY]
    n = blocks[0].matrix.shape[1]
    res = linprog(np.zeros(n), A_ub=np.vstack([b.matrix for b in ub]),
                  b_ub=np.concatenate([b.offset for b in ub]),
                  A_eq=np.vstack([b.matrix for b in eq]), b_eq=np.concatenate([b.offset for b in eq]),
                  bounds=[(None, None)] * n, method="highs")
    return res.x if res.status == 0 else None


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(2, 10))
def test_convex_hull_sufficiency(seed, npol, degree):
    problem = generate(GeneratorConfig(seed=seed, n_polytopes=npol, degree=degree, dim=2 + seed % 2))
    raw = np.random.default_rng(seed).uniform(0.5, 1.5, npol)
    s = raw / raw.sum()
    s[-1] = 1.0 - s[:-1].sum()
    x = _feasible_points(problem, s)
    if x is None:
        return
    curve = BezierCurve(x.reshape(degree + 1, problem.dim), 1.0)
    cum = np.concatenate([[0.0], np.cumsum(s)])
    for t in np.linspace(0.0, 1.0, 1000):
        windows = [j for j in range(npol) if cum[j] - 1e-12 <= t <= cum[j + 1] + 1e-12]
        pt = curve(t)
        assert min(np.max(problem.polytopes[j].normals @ pt - problem.polytopes[j].offsets)
                   for j in windows) <= 1e-7


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 10.0))
def test_doubling_time_keeps_upper_velocity_rows(seed, T):
    problem = generate(GeneratorConfig(seed=seed, start_at_rest=False, end_at_rest=False))
    rng = np.random.default_rng(seed)
    for blk in velocity_blocks(problem):
        if blk.relation != INEQUALITY or np.any(blk.offset < 0):
            continue
        x = rng.normal(size=blk.matrix.shape[1])
        lhs = blk.matrix @ x
        ok = lhs <= blk.offset * T
        assert np.all((lhs <= blk.offset * 2 * T)[ok])

