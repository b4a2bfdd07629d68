import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ota_fedsim.geometry import (
    Box,
    L2Ball,
    as_param_vec,
    norm,
    project,
    sup_distance_to,
    sup_norm_over,
)


def test_norm_pythagorean():
    assert norm([3.0, 4.0]) == 5.0
    assert norm([0.0, 0.0, 0.0]) == 0.0
    assert norm([1.0, 1.0, 1.0, 1.0]) == 2.0


def test_param_vec_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_param_vec([1.0, np.nan])
    with pytest.raises(ValueError):
        as_param_vec([np.inf, 0.0])
    with pytest.raises(ValueError):
        as_param_vec([[1.0, 2.0]])


def test_ball_interior_identity():
    ball = L2Ball(15.0)
    np.testing.assert_array_equal(project(ball, np.zeros(3)), np.zeros(3))
    # boundary points are feasible and come back unchanged
    x = np.array([15.0, 0.0, 0.0])
    np.testing.assert_array_equal(project(ball, x), x)


def test_ball_exterior_radial_scaling():
    ball = L2Ball(15.0)
    np.testing.assert_allclose(project(ball, [30.0, 0.0, 0.0]), [15.0, 0.0, 0.0])


def test_box_componentwise_clamp():
    box = Box([-1.0, -1.0], [1.0, 1.0])
    np.testing.assert_allclose(project(box, [2.0, 0.5]), [1.0, 0.5])


def test_invalid_sets_rejected():
    with pytest.raises(ValueError):
        L2Ball(0.0)
    with pytest.raises(ValueError):
        L2Ball(-2.0)
    with pytest.raises(ValueError):
        Box([1.0, 0.0], [0.0, 1.0])


def test_dimension_mismatch_is_an_error():
    box = Box([-1.0, -1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        project(box, [0.0, 0.0, 0.0])


finite_coord = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(finite_coord, min_size=1, max_size=6),
    st.lists(finite_coord, min_size=1, max_size=6),
    st.floats(min_value=1e-3, max_value=1e3),
)
def test_ball_projection_properties(xs, ys, radius):
    dim = min(len(xs), len(ys))
    x, y = np.array(xs[:dim]), np.array(ys[:dim])
    ball = L2Ball(radius)
    px, py = project(ball, x), project(ball, y)
    # membership
    assert np.linalg.norm(px) <= radius * (1 + 1e-12)
    # idempotence
    np.testing.assert_allclose(project(ball, px), px, rtol=1e-12, atol=1e-300)
    # non-expansiveness
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(finite_coord, min_size=2, max_size=8), st.lists(finite_coord, min_size=2, max_size=8))
def test_box_projection_properties(xs, ys):
    dim = min(len(xs), len(ys))
    x, y = np.array(xs[:dim]), np.array(ys[:dim])
    box = Box(np.full(dim, -2.5), np.full(dim, 4.0))
    px, py = project(box, x), project(box, y)
    assert box.contains(px)
    np.testing.assert_array_equal(project(box, px), px)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12


def test_sampling_stays_feasible():
    rng = np.random.default_rng(3)
    ball = L2Ball(2.0)
    for _ in range(100):
        assert ball.contains(ball.sample(rng, 4))
    box = Box([-1.0, 0.0], [1.0, 3.0])
    for _ in range(100):
        assert box.contains(box.sample(rng))


def test_sup_bounds_are_exact():
    ball = L2Ball(3.0)
    assert sup_norm_over(ball) == 3.0
    assert sup_distance_to(ball, [4.0, 0.0]) == pytest.approx(7.0)
    box = Box([-1.0, -2.0], [2.0, 1.0])
    assert sup_norm_over(box) == pytest.approx(np.sqrt(4.0 + 4.0))
    # farthest corner from (3, 0) is (-1, -2)
    assert sup_distance_to(box, [3.0, 0.0]) == pytest.approx(np.sqrt(16.0 + 4.0))
    assert box.diameter() == pytest.approx(np.sqrt(9.0 + 9.0))
