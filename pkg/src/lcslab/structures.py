"""Canonical twisted structures on cotangent bundles.

The bundle T*M carries the tautological 1-form ``lambda = sum p_i dq_i`` and a
Lee form ``beta`` pulled back from the base.  Together with the twisted
2-form ``omega = d(lambda) - beta ^ lambda`` they form the structure every
other module consumes.  Also here: the fiber Euler (Liouville) vector field
and its flow, gauge transformations, the fiber-rescaling diffeomorphism
``(q, p) -> (q, e^{-g} p)`` and the radial log-derivative criterion that
controls when ``lambda/g`` is still a Liouville form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainEvaluationError, PreconditionError
from .forms import (FormExpression, SumForm, coordinate_differential,
                    exterior_d, field_form, lichnerowicz_d, zero_form)
from .jets import Jet2
from .manifolds import (ModelManifold, Point, ScalarField, SmoothMap,
                        VectorField, _coerce_coords, sample_points)

__all__ = [
    "CotangentLcsStructure", "GaugeTransform", "LcsPair", "cotangent_lcs",
    "liouville_vector_field", "liouville_flow", "rescaling_diffeo",
    "criterion_radial_log_derivative", "gauge_apply", "RadialCriterionReport",
    "structure_scene_fragment",
    "clamp_fiber_radius",
]


def _lift_base_field(base: ModelManifold, total: ModelManifold, f) -> ScalarField:
    """Read a base-coordinate field through the bundle projection."""
    if isinstance(f, ScalarField):
        if f.domain.labels == total.labels:
            return f
        if f.domain.labels != base.labels:
            raise DimensionError("coefficient field lives on the wrong chart")
        return ScalarField(total, lambda jets: f.fn(jets[:base.dim]),
                           name=f.name)
    value = float(f)
    return ScalarField.constant(total, value)


@dataclass(frozen=True)
class CotangentLcsStructure:
    """Chart model of (T*M, lambda, beta) with beta pulled back from M."""

    base: ModelManifold
    total: ModelManifold
    lam: FormExpression
    beta: FormExpression
    omega: FormExpression
    beta_base_coeffs: tuple

    @property
    def n(self) -> int:
        return self.base.dim

    def point(self, coords) -> Point:
        return Point(self.total, coords)

    def base_coords(self, coords: np.ndarray) -> np.ndarray:
        return coords[..., :self.n]

    def fiber_coords(self, coords: np.ndarray) -> np.ndarray:
        return coords[..., self.n:]

    def samples(self, count: int = 4096, fiber_radius: float = 4.0,
                seed: int = 0) -> np.ndarray:
        """Default verification grid: low-discrepancy, bounded fiber norm."""
        return sample_points(self.total, count, radius=fiber_radius, seed=seed)


def structure_scene_fragment(S: CotangentLcsStructure) -> dict:
    """Scene-file fragment describing this structure.

    Coefficient fields carry their defining expression in ``name`` when they
    were built from one (scene-compiled fields always are); hand-built
    lambdas serialize by name too, which may not re-parse.
    """
    return {
        "manifold": {"circles": S.base.circle_count,
                     "lines": S.base.line_count},
        "structure": {"beta": [c.name if isinstance(c, ScalarField)
                               else repr(float(c))
                               for c in S.beta_base_coeffs]},
    }


def cotangent_lcs(base: ModelManifold, beta_coeffs: Sequence = (),
                  validate: bool = True) -> CotangentLcsStructure:
    """Canonical structure on T*(base) with ``beta = sum c_i(q) dq_i``.

    ``beta_coeffs`` holds one coefficient per base coordinate, each a constant
    or a :class:`ScalarField` on the base; missing entries default to zero.
    """
    total = base.cotangent()
    n = base.dim
    coeffs = list(beta_coeffs) + [0.0] * (n - len(beta_coeffs))
    if len(coeffs) != n:
        raise DimensionError("more beta coefficients than base coordinates")

    lam_terms = [coordinate_differential(total, i) * total.coordinate_field(n + i)
                 for i in range(n)]
    lam = SumForm(lam_terms)

    lifted = tuple(_lift_base_field(base, total, c) for c in coeffs)
    beta_terms = [coordinate_differential(total, i) * lifted[i]
                  for i in range(n)]
    beta = SumForm(beta_terms) if beta_terms else zero_form(total, 1)

    omega = lichnerowicz_d(lam, beta, validate=validate)
    return CotangentLcsStructure(base=base, total=total, lam=lam, beta=beta,
                                 omega=omega, beta_base_coeffs=lifted)


def liouville_vector_field(S: CotangentLcsStructure) -> VectorField:
    """Fiber Euler field ``sum p_i d/dp_i``; contracts d(lambda) to lambda."""
    n = S.n

    def fn(jets):
        zero = jets[0] * 0.0
        return [zero] * n + list(jets[n:])

    return VectorField(S.total, fn, name="Z_lambda")


def liouville_flow(S: CotangentLcsStructure, x, t: float):
    """Time-t flow of the Liouville field: ``(q, p) -> (q, e^t p)``, exact."""
    if isinstance(x, Point):
        coords = x.coords
        single = True
    else:
        coords = _coerce_coords(S.total, x)
        single = not isinstance(x, np.ndarray) or np.asarray(x).ndim == 1
    out = np.array(coords, copy=True)
    out[..., S.n:] *= np.exp(t)
    if single:
        return Point(S.total, out)
    return out


def radial_log_derivative(S: CotangentLcsStructure, g: ScalarField,
                          coords: np.ndarray, log: bool = True) -> np.ndarray:
    """``d ln g (Z)`` (or ``dg(Z)`` with ``log=False``) at coords."""
    jet = g.jet(coords, order=1)
    p = S.fiber_coords(coords)
    radial = np.einsum("...i,...i->...", jet.g[..., S.n:], p)
    if not log:
        return radial
    if np.any(jet.f <= 0.0):
        bad = np.asarray(coords)[np.asarray(jet.f <= 0.0)]
        raise DomainEvaluationError("log-derivative of a nonpositive field",
                                    point=bad[0] if bad.size else None)
    return radial / jet.f


@dataclass
class RadialCriterionReport:
    sup: float
    passed: bool
    threshold: float
    worst_point: np.ndarray
    sample_count: int

    def as_dict(self) -> dict:
        return {"sup": self.sup, "passed": bool(self.passed),
                "threshold": self.threshold,
                "sample_count": self.sample_count}


def criterion_radial_log_derivative(g: ScalarField, S: CotangentLcsStructure,
                                    samples=None,
                                    threshold: float = 1.0) -> RadialCriterionReport:
    """Supremum of ``d ln g (Z)`` over samples, compared against 1.

    This is the sampled form of the bound under which ``lambda/g`` stays a
    Liouville form.
    """
    coords = S.samples() if samples is None else _coerce_coords(S.total, samples)
    vals = radial_log_derivative(S, g, coords)
    i = int(np.argmax(vals))
    sup = float(vals.flat[i] if vals.ndim else vals)
    return RadialCriterionReport(sup=sup, passed=bool(sup < threshold),
                                 threshold=threshold,
                                 worst_point=np.asarray(coords).reshape(-1, S.total.dim)[i],
                                 sample_count=int(np.asarray(vals).size))


def rescaling_diffeo(S: CotangentLcsStructure, g: ScalarField,
                     grid=None, check: bool = True) -> SmoothMap:
    """Fiber rescaling ``(q, p) -> (q, e^{-g(q,p)} p)``.

    Injectivity on fibers requires ``dg(Z) < 1`` on the verification grid;
    the worst grid point is reported when the bound fails.  The map pulls the
    canonical Liouville form back to ``e^{-g} lambda`` and fixes ``beta``.
    """
    n = S.n
    if check:
        coords = S.samples() if grid is None else _coerce_coords(S.total, grid)
        vals = radial_log_derivative(S, g, coords, log=False)
        worst = int(np.argmax(vals))
        if vals.flat[worst] >= 1.0:
            raise PreconditionError(
                "fiber rescaling not injective: dg(Z) >= 1 on the grid",
                worst_value=float(vals.flat[worst]),
                worst_point=np.array2string(
                    coords.reshape(-1, S.total.dim)[worst], precision=6))

    def fn(jets):
        scale = (-g.fn(jets)).exp()
        return list(jets[:n]) + [scale * jets[n + i] for i in range(n)]

    return SmoothMap(S.total, S.total, fn, name="fiber-rescaling")


@dataclass(frozen=True)
class GaugeTransform:
    """Acts by ``(lambda, beta) -> (e^g (lambda + d_beta f), beta + dg)``."""

    g: ScalarField
    f_shift: ScalarField | None = None


@dataclass(frozen=True)
class LcsPair:
    """A (possibly non-canonical) twisted pair with its derived 2-form."""

    total: ModelManifold
    lam: FormExpression
    beta: FormExpression
    omega: FormExpression


def gauge_apply(T: GaugeTransform, S: CotangentLcsStructure) -> LcsPair:
    """New pair under a gauge transform; the 2-form rescales by ``e^g``."""
    eg = ScalarField(S.total, lambda jets: T.g.fn(jets).exp(),
                     name=f"exp({T.g.name})")
    lam_inner = S.lam
    if T.f_shift is not None:
        lam_inner = lam_inner + lichnerowicz_d(field_form(T.f_shift), S.beta,
                                               validate=False)
    new_lam = lam_inner * eg
    new_beta = S.beta + exterior_d(field_form(T.g))
    new_omega = lichnerowicz_d(new_lam, new_beta, validate=False)
    return LcsPair(total=S.total, lam=new_lam, beta=new_beta, omega=new_omega)


def clamp_fiber_radius(g: ScalarField, S: CotangentLcsStructure,
                       radius: float, width: float = 1.0) -> ScalarField:
    """Swap ``g`` for a field equal to it inside ``|p| <= radius`` and constant
    along each fiber ray beyond ``radius + width``.

    The cutoff radius is a free parameter; callers pick it to cover the region
    they care about.  Uses a quintic blend of the radial coordinate, so the
    result is C^2 at the seams.
    """
    n = S.n

    def fn(jets):
        p = jets[n:]
        r2 = None
        for c in p:
            r2 = c * c if r2 is None else r2 + c * c
        r2_safe = Jet2.where(r2.f > 1e-16, r2, r2 + 1e-16)
        r = r2_safe.sqrt()
        # smooth clamp rho(r): r below radius, radius + width/2 asymptote
        x = (r - radius) * (1.0 / width)
        s = x * x * x * (x * (x * 6.0 - 15.0) + 10.0)  # quintic smoothstep
        inside = r.f <= radius
        beyond = r.f >= radius + width
        blend = Jet2.where(inside, r * 0.0, Jet2.where(beyond, r * 0.0 + 1.0, s))
        rho = r * (1.0 - blend) + blend * (radius + 0.5 * width)
        scale = rho / r
        clamped = jets[:n] + [scale * c for c in p]
        return g.fn(clamped)

    return ScalarField(S.total, fn, name=f"clamp({g.name})")
