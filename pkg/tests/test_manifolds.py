"""Chart model invariants: normalization, bundles, deterministic sampling."""

import numpy as np
import pytest

from lcslab.errors import DimensionError, DomainEvaluationError
from lcslab.manifolds import (Point, ScalarField, SmoothMap,
                              make_manifold, parameter_grid, sample_points)

TWO_PI = 2 * np.pi


def test_make_manifold_torus():
    t2 = make_manifold(2, 0)
    assert t2.dim == 2 and t2.circle_count == 2 and t2.line_count == 0


def test_cotangent_and_jet_bundles():
    t2 = make_manifold(2, 0)
    cot = t2.cotangent()
    assert cot.dim == 4
    assert cot.labels == ("q1", "q2", "p1", "p2")
    assert cot.circle_count == 2
    j1 = make_manifold(1, 0).jet1()
    assert j1.dim == 3 and j1.labels == ("q1", "p1", "z")


def test_zero_dimension_rejected():
    with pytest.raises(DimensionError):
        make_manifold(0, 0)
    with pytest.raises(DimensionError):
        make_manifold(-1, 2)


def test_normalization_idempotent_and_distance():
    t1 = make_manifold(1, 1)
    x = np.array([2 * TWO_PI + 0.25, 3.0])
    once = t1.normalize(x)
    assert np.allclose(once, t1.normalize(once))
    assert np.allclose(once, [0.25, 3.0])
    # shortest arc on the circle factor
    d = t1.distance(np.array([0.1, 0.0]), np.array([TWO_PI - 0.1, 0.0]))
    assert np.isclose(d, 0.2)


def test_point_normalizes_on_construction():
    t2 = make_manifold(2, 0)
    p = Point(t2, [TWO_PI + 1.0, -0.5])
    assert np.allclose(p.coords, [1.0, TWO_PI - 0.5])


def test_field_evaluation_is_normalization_invariant():
    t2 = make_manifold(2, 0)
    f = ScalarField(t2, lambda j: j[0].sin() * j[1].cos())
    x = np.array([7.3, 1.3])  # q1 outside [0, 2*pi)
    assert f.value(x) == f.value(t2.normalize(x))  # exact, by construction
    shifted = x + np.array([2 * TWO_PI, 0.0])
    assert abs(f.value(x) - f.value(shifted)) < 1e-14


def test_scalar_field_jet_examples():
    # sin(theta) at 0: value 0, gradient e_1, zero hessian diagonal
    t2 = make_manifold(2, 0)
    f = ScalarField(t2, lambda j: j[0].sin())
    jet = f.jet(np.zeros(2))
    assert np.isclose(jet.f, 0.0)
    assert np.allclose(jet.g, [1.0, 0.0])
    assert np.allclose(np.diag(jet.h), 0.0)

    # e^{q1} * p1 on T*T^1 at (0, 2): value 2, gradient (2, 1)
    cot = make_manifold(1, 0).cotangent()
    g = ScalarField(cot, lambda j: j[0].exp() * j[1])
    jet = g.jet(np.array([0.0, 2.0]))
    assert np.isclose(jet.f, 2.0)
    assert np.allclose(jet.g, [2.0, 1.0])


def test_domain_error_carries_point():
    t1 = make_manifold(0, 1)
    f = ScalarField(t1, lambda j: j[0].log())
    with pytest.raises(DomainEvaluationError) as err:
        f.value(np.array([-2.0]))
    assert err.value.point is not None


def test_smooth_map_jacobian_and_composition():
    t1 = make_manifold(1, 0)
    cot = t1.cotangent()
    emb = SmoothMap(t1, cot, lambda j: [j[0], j[0].cos()])
    J = emb.jacobian(np.array([0.5]))
    assert J.shape == (2, 1)
    assert np.allclose(J[:, 0], [1.0, -np.sin(0.5)])

    ident = SmoothMap.identity(cot)
    comp = ident.compose(emb)
    assert np.allclose(comp(np.array([0.5])), emb(np.array([0.5])))


def test_sampling_is_deterministic_and_in_range():
    cot = make_manifold(1, 0).cotangent()
    a = sample_points(cot, 64, radius=4.0, seed=0)
    b = sample_points(cot, 64, radius=4.0, seed=0)
    c = sample_points(cot, 64, radius=4.0, seed=1)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a[:, 0].min() >= 0.0 and a[:, 0].max() < TWO_PI
    assert np.abs(a[:, 1]).max() <= 4.0


def test_parameter_grid_shapes():
    t2 = make_manifold(2, 0)
    grid = parameter_grid(t2, 8)
    assert grid.shape == (8, 8, 2)
    assert grid[..., 0].max() < TWO_PI
