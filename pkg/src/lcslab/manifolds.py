"""Coordinate models of the manifolds in play.

Every manifold here is a product of circles and lines with one global chart;
circle coordinates live in ``[0, 2*pi)``.  Cotangent bundles and 1-jet spaces
are derived by appending fiber (line) coordinates, so T*M carries coordinates
``(q_1..q_n, p_1..p_n)`` and J1(M) carries ``(q, p, z)``.

Fields are thin wrappers around jet-evaluating callables: a scalar field maps
the coordinate jets of a batch of points to one :class:`~lcslab.jets.Jet2`,
which makes every derivative used downstream exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DimensionError, DomainEvaluationError
from .jets import Jet2, constant_jet, seed_jets

TWO_PI = 2.0 * np.pi

__all__ = [
    "ModelManifold", "Point", "ScalarField", "VectorField", "SmoothMap",
    "make_manifold", "sample_points", "parameter_grid",
]


@dataclass(frozen=True)
class ModelManifold:
    """Product of circles and lines, described coordinate by coordinate."""

    is_circle: tuple
    labels: tuple

    def __post_init__(self):
        if len(self.is_circle) != len(self.labels):
            raise DimensionError("labels must match coordinate count")
        if len(self.is_circle) < 1:
            raise DimensionError("manifold must have dimension >= 1")

    @property
    def dim(self) -> int:
        return len(self.is_circle)

    @property
    def circle_count(self) -> int:
        return int(sum(self.is_circle))

    @property
    def line_count(self) -> int:
        return self.dim - self.circle_count

    @property
    def circle_mask(self) -> np.ndarray:
        return np.asarray(self.is_circle, dtype=bool)

    def cotangent(self) -> "ModelManifold":
        """T*M: base coordinates followed by one line fiber coordinate each."""
        fiber_labels = tuple(f"p{i + 1}" for i in range(self.dim))
        return ModelManifold(self.is_circle + (False,) * self.dim,
                             self.labels + fiber_labels)

    def jet1(self) -> "ModelManifold":
        """J1(M) = T*M with one extra line coordinate z."""
        cot = self.cotangent()
        return ModelManifold(cot.is_circle + (False,), cot.labels + ("z",))

    def product(self, other: "ModelManifold") -> "ModelManifold":
        labels = self.labels + tuple(
            lb if lb not in self.labels else f"{lb}'" for lb in other.labels)
        return ModelManifold(self.is_circle + other.is_circle, labels)

    # ------------------------------------------------------------ coordinates

    def normalize(self, coords: np.ndarray) -> np.ndarray:
        """Wrap circle coordinates into [0, 2*pi); idempotent."""
        coords = np.array(coords, dtype=float, copy=True)
        mask = self.circle_mask
        coords[..., mask] = np.mod(coords[..., mask], TWO_PI)
        return coords

    def difference(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Shortest representative of ``a - b`` (circle-aware)."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        mask = self.circle_mask
        d = np.array(d, copy=True)
        d[..., mask] = np.mod(d[..., mask] + np.pi, TWO_PI) - np.pi
        return d

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.difference(a, b), axis=-1)

    def coordinate_field(self, index: int) -> "ScalarField":
        if not 0 <= index < self.dim:
            raise DimensionError(f"coordinate index {index} out of range")
        return ScalarField(self, lambda jets, i=index: jets[i],
                           name=self.labels[index])

    def __repr__(self) -> str:  # pragma: no cover
        return f"ModelManifold({'x'.join('S1' if c else 'R' for c in self.is_circle)})"


def make_manifold(circle_count: int, line_count: int,
                  labels: Sequence[str] | None = None) -> ModelManifold:
    """Build the torus-times-lines model ``T^a x R^b`` (circles first)."""
    if circle_count < 0 or line_count < 0:
        raise DimensionError("coordinate counts must be nonnegative")
    if circle_count + line_count < 1:
        raise DimensionError("manifold must have dimension >= 1")
    if labels is None:
        labels = tuple(f"q{i + 1}" for i in range(circle_count + line_count))
    return ModelManifold((True,) * circle_count + (False,) * line_count,
                         tuple(labels))


@dataclass(frozen=True)
class Point:
    """A point of a model manifold; circle coordinates stored normalized."""

    manifold: ModelManifold
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        if c.shape[0] != self.manifold.dim:
            raise DimensionError(
                f"expected {self.manifold.dim} coordinates, got {c.shape[0]}")
        object.__setattr__(self, "coords", self.manifold.normalize(c))

    def distance(self, other: "Point") -> float:
        return float(self.manifold.distance(self.coords, other.coords))

    def __repr__(self) -> str:  # pragma: no cover
        vals = ", ".join(f"{x:.6g}" for x in self.coords)
        return f"Point({vals})"


def _coerce_coords(manifold: ModelManifold, points) -> np.ndarray:
    """Accept a Point, a coordinate vector or a (B, n) batch; normalize."""
    if isinstance(points, Point):
        coords = points.coords
    else:
        coords = np.asarray(points, dtype=float)
    if coords.shape[-1] != manifold.dim:
        raise DimensionError(
            f"expected {manifold.dim} coordinates, got shape {coords.shape}")
    return manifold.normalize(coords)


class ScalarField:
    """Deterministic scalar field evaluated through coordinate jets.

    ``derivative_loss`` plays the same role as for maps: fields whose
    evaluator reads derivatives of an inner field declare it so evaluation
    over-seeds accordingly.
    """

    def __init__(self, domain: ModelManifold,
                 fn: Callable[[Sequence[Jet2]], Jet2], name: str = "",
                 derivative_loss: int = 0):
        self.domain = domain
        self.fn = fn
        self.name = name
        self.derivative_loss = derivative_loss

    def jet(self, points, order: int = 2) -> Jet2:
        coords = _coerce_coords(self.domain, points)
        jets = seed_jets(coords, order=min(2, order + self.derivative_loss))
        try:
            out = self.fn(jets)
        except DomainEvaluationError as exc:
            raise DomainEvaluationError(str(exc), point=coords) from None
        if not isinstance(out, Jet2):
            out = constant_jet(out, self.domain.dim, coords.shape[:-1], order)
        return out.symmetrized()

    def value(self, points) -> np.ndarray:
        return self.jet(points, order=0).f

    def gradient(self, points) -> np.ndarray:
        return self.jet(points, order=1).g

    # small algebra, convenient when assembling derived fields
    def _lift(self, op) -> "ScalarField":
        return ScalarField(self.domain, lambda jets: op(self.fn(jets)))

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.domain,
                               lambda jets: self.fn(jets) + other.fn(jets))
        return self._lift(lambda j: j + other)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.domain,
                               lambda jets: self.fn(jets) * other.fn(jets))
        return self._lift(lambda j: j * other)

    __rmul__ = __mul__

    def __neg__(self):
        return self._lift(lambda j: -j)

    @staticmethod
    def constant(domain: ModelManifold, value: float) -> "ScalarField":
        return ScalarField(domain, lambda jets: jets[0] * 0.0 + float(value),
                           name=f"{value}")


class VectorField:
    """Vector field: one jet-valued component per coordinate."""

    def __init__(self, domain: ModelManifold,
                 fn: Callable[[Sequence[Jet2]], Sequence[Jet2]], name: str = ""):
        self.domain = domain
        self.fn = fn
        self.name = name

    def jet(self, points, order: int = 2) -> list[Jet2]:
        coords = _coerce_coords(self.domain, points)
        jets = seed_jets(coords, order=order)
        comps = [c if isinstance(c, Jet2)
                 else constant_jet(c, self.domain.dim, coords.shape[:-1], order)
                 for c in self.fn(jets)]
        if len(comps) != self.domain.dim:
            raise DimensionError("vector field component count != dimension")
        return comps

    def values(self, points) -> np.ndarray:
        return np.stack([c.f for c in self.jet(points, order=0)], axis=-1)


class SmoothMap:
    """Map between model manifolds with jets of every component.

    ``derivative_loss`` declares how many jet orders the component functions
    consume internally (1 for charts built from field gradients, e.g. graphs
    of twisted differentials); evaluation over-seeds by that amount so the
    requested order is delivered whenever the global order-2 cap allows.
    """

    def __init__(self, source: ModelManifold, target: ModelManifold,
                 fn: Callable[[Sequence[Jet2]], Sequence[Jet2]], name: str = "",
                 derivative_loss: int = 0):
        self.source = source
        self.target = target
        self.fn = fn
        self.name = name
        self.derivative_loss = derivative_loss

    def jet(self, points, order: int = 2) -> list[Jet2]:
        coords = _coerce_coords(self.source, points)
        jets = seed_jets(coords, order=min(2, order + self.derivative_loss))
        comps = [c if isinstance(c, Jet2)
                 else constant_jet(c, self.source.dim, coords.shape[:-1], order)
                 for c in self.fn(jets)]
        if len(comps) != self.target.dim:
            raise DimensionError(
                f"map produced {len(comps)} components for a "
                f"{self.target.dim}-dimensional target")
        return comps

    def __call__(self, points) -> np.ndarray:
        comps = self.jet(points, order=0)
        return self.target.normalize(np.stack([c.f for c in comps], axis=-1))

    def point(self, p: Point) -> Point:
        return Point(self.target, self(p.coords))

    def jacobian(self, points) -> np.ndarray:
        """Shape ``(..., target_dim, source_dim)``."""
        comps = self.jet(points, order=1)
        return np.stack([c.g for c in comps], axis=-2)

    def compose(self, inner: "SmoothMap") -> "SmoothMap":
        if inner.target.labels != self.source.labels:
            raise DimensionError("composition domain mismatch")

        def fn(jets):
            mids = inner.fn(jets)
            return self.fn(mids)

        return SmoothMap(inner.source, self.target, fn,
                         name=f"{self.name}*{inner.name}",
                         derivative_loss=self.derivative_loss
                         + inner.derivative_loss)

    @staticmethod
    def identity(manifold: ModelManifold) -> "SmoothMap":
        return SmoothMap(manifold, manifold, lambda jets: list(jets), name="id")


def sample_points(manifold: ModelManifold, n: int, radius: float = 4.0,
                  seed: int = 0, ranges: dict | None = None) -> np.ndarray:
    """Deterministic low-discrepancy sample of the chart, shape ``(n, dim)``.

    Circle coordinates cover ``[0, 2*pi)``; line coordinates cover
    ``[-radius, radius]`` unless overridden per index through ``ranges``.
    ``seed`` fast-forwards the Halton sequence so distinct seeds give
    distinct (still reproducible) sets.
    """
    eng = qmc.Halton(manifold.dim, scramble=False)
    eng.fast_forward(1 + seed * n)  # skip the degenerate all-zeros sample
    u = eng.random(n)
    coords = np.empty_like(u)
    for i, circ in enumerate(manifold.is_circle):
        lo, hi = (0.0, TWO_PI) if circ else (-radius, radius)
        if ranges and i in ranges:
            lo, hi = ranges[i]
        coords[:, i] = lo + (hi - lo) * u[:, i]
    return coords


def parameter_grid(manifold: ModelManifold, shape, radius: float = 4.0) -> np.ndarray:
    """Rectangular grid on the chart, shape ``shape + (dim,)``.

    Circle axes carry ``m`` equispaced nodes on ``[0, 2*pi)`` (endpoint
    excluded); line axes carry ``m`` nodes on ``[-radius, radius]``.
    """
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),) * manifold.dim
    if len(shape) != manifold.dim:
        raise DimensionError("grid shape rank != manifold dimension")
    axes = []
    for m, circ in zip(shape, manifold.is_circle):
        if circ:
            axes.append(np.linspace(0.0, TWO_PI, m, endpoint=False))
        else:
            axes.append(np.linspace(-radius, radius, m))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)
