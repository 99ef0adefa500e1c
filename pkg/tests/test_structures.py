"""Canonical structure contracts: Euler field, flow, rescaling, gauge moves."""

import numpy as np
import pytest

from lcslab.errors import DomainEvaluationError, PreconditionError
from lcslab.forms import exterior_d, interior_product, pullback
from lcslab.manifolds import Point, ScalarField, make_manifold, sample_points
from lcslab.structures import (GaugeTransform, clamp_fiber_radius,
                               cotangent_lcs, criterion_radial_log_derivative,
                               gauge_apply, liouville_flow,
                               liouville_vector_field, rescaling_diffeo)

T1 = make_manifold(1, 0)
T2 = make_manifold(2, 0)
S1 = cotangent_lcs(T1, [1.0])       # beta = dq1
S2 = cotangent_lcs(T2, [0.0, 1.0])  # beta = dq2


def test_liouville_field_coordinates():
    Z = liouville_vector_field(S2)
    vals = Z.values(np.array([0.0, 0.0, 1.0, 2.0]))
    assert np.allclose(vals, [0.0, 0.0, 1.0, 2.0])
    # vanishes identically on the zero section
    zero = Z.values(np.array([[1.0, 2.0, 0.0, 0.0]]))
    assert np.abs(zero).max() == 0.0


def test_contraction_identity():
    Z = liouville_vector_field(S2)
    pts = sample_points(S2.total, 100)
    res = (interior_product(Z, exterior_d(S2.lam)).coefficients(pts)
           - S2.lam.coefficients(pts))
    assert np.abs(res).max() <= 1e-10


def test_flow_scales_fibers_exactly():
    x = Point(S2.total, [0.3, 0.4, 0.0, 1.0])
    y = liouville_flow(S2, x, np.log(3.0))
    assert np.allclose(y.coords, [0.3, 0.4, 0.0, 3.0])
    # time 0 is the identity, and the group law holds exactly
    assert np.array_equal(liouville_flow(S2, x, 0.0).coords, x.coords)
    a = liouville_flow(S2, liouville_flow(S2, x, 0.25), 0.5)
    b = liouville_flow(S2, x, 0.75)
    assert np.allclose(a.coords, b.coords, atol=1e-15)


def test_flow_rescales_liouville_form():
    # (Phi_t)* lambda = e^t lambda on samples
    t = 0.37
    pts = sample_points(S2.total, 100)
    moved = liouville_flow(S2, pts, t)
    lam_moved = S2.lam.coefficients(moved)
    lam_pts = S2.lam.coefficients(pts)
    # the flow fixes base coordinates, so coefficients compare directly
    assert np.abs(lam_moved - np.exp(t) * lam_pts).max() <= 1e-10


def test_rescaling_identity_and_constant_cases():
    ident = rescaling_diffeo(S2, ScalarField.constant(S2.total, 0.0))
    pts = sample_points(S2.total, 20)
    assert np.allclose(ident(pts), S2.total.normalize(pts))

    c = 0.7
    resc = rescaling_diffeo(S2, ScalarField.constant(S2.total, c))
    out = resc(pts)
    assert np.allclose(out[:, 2:], np.exp(-c) * pts[:, 2:])
    # phi* lambda = e^{-c} lambda on samples
    pb = pullback(resc, S2.lam).coefficients(pts)
    assert np.abs(pb - np.exp(-c) * S2.lam.coefficients(pts)).max() <= 1e-9


def test_rescaling_arctan_case_and_beta_preserved():
    g = ScalarField(S1.total, lambda j: j[1].arctan() * 0.5)
    # dg(Z) = p/(2(1+p^2)) <= 1/4 < 1, accepted
    phi = rescaling_diffeo(S1, g)
    pts = sample_points(S1.total, 200)
    gv = g.value(pts)
    pb = pullback(phi, S1.lam).coefficients(pts)
    ref = np.exp(-gv)[:, None] * S1.lam.coefficients(pts)
    assert np.abs(pb - ref).max() <= 1e-9
    pb_beta = pullback(phi, S1.beta).coefficients(pts)
    assert np.abs(pb_beta - S1.beta.coefficients(pts)).max() <= 1e-12
    # base coordinates preserved exactly
    assert np.array_equal(phi(pts)[:, 0], S1.total.normalize(pts)[:, 0])


def test_rescaling_precondition_rejects_steep_fields():
    g = ScalarField(S1.total, lambda j: j[1] * j[1])  # dg(Z) = 2 p^2
    with pytest.raises(PreconditionError) as err:
        rescaling_diffeo(S1, g)
    assert "worst" in str(err.value)


def test_radial_criterion_reports():
    one = ScalarField.constant(S1.total, 1.0)
    rep = criterion_radial_log_derivative(one, S1)
    assert rep.sup == 0.0 and rep.passed

    # g = exp(r^2/2): d ln g(Z) = r^2, fails once the grid reaches r >= 1
    g = ScalarField(S1.total, lambda j: (j[1] * j[1] * 0.5).exp())
    line = np.stack([np.zeros(41), np.linspace(0.0, 2.0, 41)], axis=-1)
    rep = criterion_radial_log_derivative(g, S1, samples=line)
    assert not rep.passed
    assert np.isclose(rep.sup, 4.0)  # r^2 at the grid edge r = 2

    small = np.stack([np.zeros(41), np.linspace(0.0, 0.9, 41)], axis=-1)
    rep_small = criterion_radial_log_derivative(g, S1, samples=small)
    assert rep_small.passed


def test_radial_criterion_dense_scan_oracle():
    # g = 1 + sin(p)/2 against a dense 1-d scan of the closed form
    g = ScalarField(S1.total, lambda j: j[1].sin() * 0.5 + 1.0)
    line = np.stack([np.zeros(200), np.linspace(-4, 4, 200)], axis=-1)
    rep = criterion_radial_log_derivative(g, S1, samples=line)
    p = np.linspace(-4, 4, 20001)
    dense = 0.5 * p * np.cos(p) / (1 + 0.5 * np.sin(p))
    assert abs(rep.sup - dense.max()) <= 1e-3


def test_radial_criterion_rejects_nonpositive():
    g = ScalarField(S1.total, lambda j: j[1])  # vanishes on the zero section
    with pytest.raises(DomainEvaluationError):
        criterion_radial_log_derivative(g, S1)


def test_gauge_identity_and_conformal_covariance():
    pts = sample_points(S2.total, 100)
    ident = gauge_apply(GaugeTransform(ScalarField.constant(S2.total, 0.0)), S2)
    assert np.abs(ident.lam.coefficients(pts)
                  - S2.lam.coefficients(pts)).max() <= 1e-12
    assert np.abs(ident.omega.coefficients(pts)
                  - S2.omega.coefficients(pts)).max() <= 1e-12

    # base-only g: new omega equals e^g omega on samples
    g = ScalarField(S2.total, lambda j: j[0].sin() * 0.4)
    pair = gauge_apply(GaugeTransform(g), S2)
    lhs = pair.omega.coefficients(pts)
    rhs = np.exp(g.value(pts))[:, None] * S2.omega.coefficients(pts)
    assert np.abs(lhs - rhs).max() <= 1e-9


def test_gauge_covariance_for_general_g_and_f():
    pts = sample_points(S2.total, 100)
    g = ScalarField(S2.total, lambda j: j[1].cos() * 0.3 + j[2] * 0.1)
    f = ScalarField(S2.total, lambda j: j[0].sin() * j[3] * 0.2)
    pair = gauge_apply(GaugeTransform(g, f), S2)
    # d_{beta+dg}(e^g(lambda + d_beta f)) = e^g d_beta(lambda + d_beta f)
    from lcslab.forms import field_form, lichnerowicz_d
    inner = S2.lam + lichnerowicz_d(field_form(f), S2.beta, validate=False)
    rhs = np.exp(g.value(pts))[:, None] * lichnerowicz_d(
        inner, S2.beta, validate=False).coefficients(pts)
    assert np.abs(pair.omega.coefficients(pts) - rhs).max() <= 1e-9


def test_gauge_symplectic_shift():
    # beta = 0: translating the primitive gives lambda + df
    S0 = cotangent_lcs(T1, [0.0])
    f = ScalarField(S0.total, lambda j: j[0].sin())
    pair = gauge_apply(GaugeTransform(ScalarField.constant(S0.total, 0.0), f), S0)
    pts = sample_points(S0.total, 50)
    from lcslab.forms import exterior_d as d, field_form
    ref = (S0.lam + d(field_form(f))).coefficients(pts)
    assert np.abs(pair.lam.coefficients(pts) - ref).max() <= 1e-12


def test_fiber_radius_clamp():
    g = ScalarField(S1.total, lambda j: j[1] * 0.2 + j[0].sin() * 0.1)
    h = clamp_fiber_radius(g, S1, radius=2.0, width=1.0)
    inner = np.array([[0.5, 1.0], [1.0, -1.5], [2.0, 0.0]])
    assert np.allclose(h.value(inner), g.value(inner), atol=1e-12)
    # far out, constant along each ray
    far = np.array([[0.5, 6.0], [0.5, 9.0]])
    v = h.value(far)
    assert abs(v[0] - v[1]) <= 1e-12
