"""First-order jet groupoid over a single-chart body in R^3.

An arrow is stored in the natural chart coordinates ``(x^i, y^j, y^j_i)``:
a source point, a target point and the invertible 3x3 matrix of first
derivatives.  Composition is the chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotComposableError, SingularJetError

DET_TOL = 1e-12

Point = tuple[float, float, float]


def as_point(X) -> Point:
    arr = np.asarray(X, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"expected a finite point in R^3, got {X!r}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


def _frozen_matrix(F) -> np.ndarray:
    arr = np.array(F, dtype=float, copy=True).reshape(3, 3)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BodyDomain:
    """Open ball ``{X : |X - center| < radius}``."""

    center: Point = (0.0, 0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError("body radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, X) -> bool:
        d = np.asarray(X, dtype=float) - np.asarray(self.center)
        return bool(np.linalg.norm(d) < self.radius)

    def distance_to_boundary(self, X) -> float:
        d = np.asarray(X, dtype=float) - np.asarray(self.center)
        return float(self.radius - np.linalg.norm(d))

    def require(self, X) -> Point:
        p = as_point(X)
        if not self.contains(p):
            raise DomainError(f"point {p} lies outside the body (radius {self.radius})")
        return p


UNIT_BALL = BodyDomain()


@dataclass(frozen=True, eq=False)
class Jet1:
    """An arrow ``j^1_{source,target}`` with derivative matrix ``F``."""

    source: Point
    target: Point
    F: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "source", as_point(self.source))
        object.__setattr__(self, "target", as_point(self.target))
        F = _frozen_matrix(self.F)
        if not np.all(np.isfinite(F)):
            raise SingularJetError("jet matrix has non-finite entries")
        if abs(np.linalg.det(F)) <= DET_TOL:
            raise SingularJetError(f"|det F| <= {DET_TOL}")
        object.__setattr__(self, "F", F)

    def isclose(self, other: "Jet1", atol: float = 1e-12) -> bool:
        return (
            self.source == other.source
            and self.target == other.target
            and bool(np.allclose(self.F, other.F, rtol=0.0, atol=atol))
        )

    def __repr__(self) -> str:
        return f"Jet1(source={self.source}, target={self.target}, F={self.F.tolist()})"


@dataclass(frozen=True, eq=False)
class LeftInvariantDirection:
    """Value of a left-invariant field at an identity: base velocity ``v``
    and jet velocity ``lam`` in gl(3)."""

    v: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float, copy=True).reshape(3)
        lam = np.array(self.lam, dtype=float, copy=True).reshape(3, 3)
        v.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lam", lam)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.lam.reshape(9)])

    @classmethod
    def from_vector(cls, w) -> "LeftInvariantDirection":
        w = np.asarray(w, dtype=float).reshape(12)
        return cls(w[:3], w[3:].reshape(3, 3))

    @classmethod
    def zero(cls) -> "LeftInvariantDirection":
        return cls(np.zeros(3), np.zeros((3, 3)))


def identity(X, body: BodyDomain = UNIT_BALL) -> Jet1:
    p = body.require(X)
    return Jet1(p, p, np.eye(3))


def compose(g: Jet1, h: Jet1) -> Jet1:
    """``g . h``: first ``h`` then ``g``.  Requires ``source(g) == target(h)``."""
    if g.source != h.target:
        raise NotComposableError(f"source(g)={g.source} != target(h)={h.target}")
    return Jet1(h.source, g.target, g.F @ h.F)


def invert(g: Jet1) -> Jet1:
    if abs(np.linalg.det(g.F)) <= DET_TOL:
        raise SingularJetError("cannot invert a numerically singular jet")
    return Jet1(g.target, g.source, np.linalg.inv(g.F))


def left_translate(g: Jet1, h: Jet1) -> Jet1:
    """L_g on the beta-fibre over ``source(g)``."""
    if h.target != g.source:
        raise NotComposableError(
            f"h is not in the beta-fibre over source(g): target(h)={h.target}"
        )
    return compose(g, h)


def anchor(g: Jet1) -> tuple[Point, Point]:
    return g.source, g.target
