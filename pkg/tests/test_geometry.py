"""Box arithmetic and contraction-chain invariants."""

import numpy as np
import pytest

from cac.errors import EmptySpaceError, SpaceViolationError
from cac.geometry import (
    Box,
    ContractionState,
    contract,
    intersect,
    l2_norm,
    linf_ball,
    linf_norm,
    project,
)


def test_linf_ball_interior():
    b = linf_ball([0.5, 0.5], 0.2)
    np.testing.assert_array_equal(b.lower, [0.3, 0.3])
    np.testing.assert_array_equal(b.upper, [0.7, 0.7])


def test_linf_ball_clips_to_unit_cube():
    b = linf_ball([0.05, 0.9], 0.125)
    np.testing.assert_array_equal(b.lower, [0.0, 0.775])
    np.testing.assert_array_equal(b.upper, [0.175, 1.0])


def test_linf_ball_center_on_boundary():
    b = linf_ball([0.0, 1.0], 0.1)
    np.testing.assert_array_equal(b.lower, [0.0, 0.9])
    np.testing.assert_array_equal(b.upper, [0.1, 1.0])


def test_linf_ball_rejects_bad_args():
    with pytest.raises(ValueError):
        linf_ball([0.5], -0.1)
    with pytest.raises(ValueError):
        linf_ball([1.5], 0.1)
    with pytest.raises(ValueError):
        linf_ball([-0.01, 0.5], 0.1)


def test_box_validation():
    with pytest.raises(ValueError):
        Box(np.array([0.5, 0.0]), np.array([0.4, 1.0]))
    with pytest.raises(ValueError):
        Box(np.array([0.0, 0.0]), np.array([1.0]))
    # Zero-width boxes are legal.
    b = Box(np.array([0.5]), np.array([0.5]))
    assert b.is_degenerate()
    assert b.contains([0.5])


def test_intersect_hand_values():
    a = Box(np.array([0.0, 0.0]), np.array([0.6, 0.6]))
    b = Box(np.array([0.4, 0.2]), np.array([1.0, 0.5]))
    c = intersect(a, b)
    np.testing.assert_array_equal(c.lower, [0.4, 0.2])
    np.testing.assert_array_equal(c.upper, [0.6, 0.5])


def test_intersect_disjoint_raises():
    a = Box(np.array([0.0]), np.array([0.4]))
    b = Box(np.array([0.5]), np.array([1.0]))
    with pytest.raises(EmptySpaceError):
        intersect(a, b)


def test_intersect_touching_is_degenerate_not_empty():
    a = Box(np.array([0.0]), np.array([0.5]))
    b = Box(np.array([0.5]), np.array([1.0]))
    c = intersect(a, b)
    assert c.is_degenerate()
    np.testing.assert_array_equal(c.lower, [0.5])


def test_intersect_dimension_mismatch():
    a = Box(np.array([0.0]), np.array([1.0]))
    b = Box(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        intersect(a, b)


def test_project_hand_values():
    box = Box(np.array([0.2, 0.2]), np.array([0.8, 0.4]))
    np.testing.assert_array_equal(project([0.0, 1.0], box), [0.2, 0.4])
    np.testing.assert_array_equal(project([0.5, 0.3], box), [0.5, 0.3])


def test_project_idempotent_and_minimal():
    # Clamping is the nearest point of a box in every l-p norm; check l2 and
    # l-inf against random competitors, plus idempotence.
    rng = np.random.default_rng(7)
    for _ in range(200):
        d = int(rng.integers(1, 6))
        lo = rng.uniform(0, 0.4, d)
        hi = lo + rng.uniform(0.05, 0.5, d)
        box = Box(lo, hi)
        p = rng.uniform(-0.5, 1.5, d)
        proj = project(p, box)
        assert box.contains(proj)
        np.testing.assert_array_equal(project(proj, box), proj)
        for _ in range(20):
            q = rng.uniform(lo, hi)
            assert l2_norm(proj - p) <= l2_norm(q - p) + 1e-12
            assert linf_norm(proj - p) <= linf_norm(q - p) + 1e-12


def test_norms():
    assert linf_norm([0.3, -0.8, 0.1]) == 0.8
    assert l2_norm([3.0, 4.0]) == 5.0


def test_contraction_state_initial():
    x = np.array([0.5, 0.5])
    st = ContractionState.initial(t=0.99, delta=0.125, start=x)
    assert st.rho == 0.125
    assert st.steps_taken == 0
    outer = linf_ball(x, 0.125)
    space = st.space(outer)
    np.testing.assert_array_equal(space.lower, outer.lower)
    np.testing.assert_array_equal(space.upper, outer.upper)


def test_contraction_state_validation():
    with pytest.raises(ValueError):
        ContractionState(t=1.0, rho=0.1, steps_taken=0, anchor=np.array([0.5]))
    with pytest.raises(ValueError):
        ContractionState(t=0.5, rho=-0.1, steps_taken=0, anchor=np.array([0.5]))


def test_contract_hand_values():
    # Recompute the exact float arithmetic with scalar Python operations.
    t = 0.99
    x = np.array([0.5, 0.5])
    z = np.array([0.6, 0.55])
    outer = linf_ball(x, 0.125)
    st = ContractionState.initial(t, 0.125, x)
    st2, box = contract(st, z, outer)
    rho_expect = t * max(abs(0.6 - 0.5), abs(0.55 - 0.5))
    assert st2.rho == rho_expect
    assert st2.steps_taken == 1
    np.testing.assert_array_equal(st2.anchor, z)
    np.testing.assert_array_equal(
        box.lower, [max(0.375, 0.6 - rho_expect), max(0.375, 0.55 - rho_expect)]
    )
    np.testing.assert_array_equal(
        box.upper, [min(0.625, 0.6 + rho_expect), min(0.625, 0.55 + rho_expect)]
    )


def test_contract_rejects_point_outside_space():
    x = np.array([0.5, 0.5])
    outer = linf_ball(x, 0.125)
    st = ContractionState.initial(0.99, 0.125, x)
    with pytest.raises(SpaceViolationError):
        contract(st, np.array([0.7, 0.5]), outer)


def test_contract_tolerates_one_ulp_overshoot():
    # Summing step increments can overshoot the ball face by a last-place
    # unit; contract must absorb that instead of declaring a violation, and
    # the clamped radius must still satisfy rho' <= t * rho exactly.
    x = np.array([0.5, 0.5])
    outer = linf_ball(x, 0.4)
    st = ContractionState.initial(0.99, 0.2, x)
    z = np.array([np.nextafter(0.7, 1.0), 0.5])
    assert z[0] > 0.7
    new_st, box = contract(st, z, outer)
    assert new_st.anchor[0] == 0.7
    assert new_st.rho <= 0.99 * 0.2
    assert box.contains(new_st.anchor)


def test_contract_rejects_overshoot_beyond_tolerance():
    x = np.array([0.5, 0.5])
    outer = linf_ball(x, 0.4)
    st = ContractionState.initial(0.99, 0.2, x)
    with pytest.raises(SpaceViolationError):
        contract(st, np.array([0.7 + 1e-9, 0.5]), outer)


def test_contract_chain_invariants():
    # Random chains: rho_j <= t^j * delta, every box sits inside the outer
    # space and contains its candidate, and each candidate lay in the space
    # it was drawn from.
    rng = np.random.default_rng(42)
    for run in range(25):
        d = int(rng.integers(1, 8))
        t = float(rng.uniform(0.8, 0.999))
        delta = float(rng.uniform(0.05, 0.3))
        x = rng.uniform(0.2, 0.8, d)
        outer = linf_ball(x, delta)
        st = ContractionState.initial(t, delta, x)
        space = st.space(outer)
        for j in range(1, 9):
            z = rng.uniform(space.lower, space.upper)
            st, space = contract(st, z, outer)
            assert st.rho <= t**j * delta + 1e-12
            assert np.all(space.lower >= outer.lower) and np.all(space.upper <= outer.upper)
            assert space.contains(z)
            if st.rho == 0.0:
                break


def test_contract_zero_step_gives_degenerate_space():
    x = np.array([0.5])
    outer = linf_ball(x, 0.125)
    st = ContractionState.initial(0.99, 0.125, x)
    st2, box = contract(st, x, outer)
    assert st2.rho == 0.0
    assert box.is_degenerate()
