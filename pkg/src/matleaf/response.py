"""Response functionals of simple elastic bodies.

A response model maps an arrow ``(X, Y, F)`` to a 3x3 matrix.  Evaluators
receive only ``(X, F)``, so independence from the target point holds by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, NonFiniteDerivative
from .jets import UNIT_BALL, BodyDomain, Jet1, LeftInvariantDirection, as_point

PROFILE_KINDS = ("constant", "monotone", "plateau", "wiggle", "user")


@dataclass(frozen=True)
class ScalarProfile:
    """Scalar profile ``f`` applied to the squared radius."""

    kind: str
    params: dict = field(default_factory=dict)
    f: Optional[Callable] = field(default=None, compare=False, repr=False)
    df: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "plateau" and not self.params.get("s", 0) > 0:
            raise ValueError("plateau profile needs s > 0")
        if self.kind == "wiggle" and "c" not in self.params:
            raise ValueError("wiggle profile needs c")
        if self.kind == "user" and (self.f is None or self.df is None):
            raise ValueError("user profile must supply f and df")

    @classmethod
    def constant(cls):
        return cls("constant")

    @classmethod
    def monotone(cls):
        return cls("monotone")

    @classmethod
    def plateau(cls, s=0.5):
        return cls("plateau", {"s": float(s)})

    @classmethod
    def wiggle(cls, c=0.125):
        return cls("wiggle", {"c": float(c)})

    @classmethod
    def user(cls, f, df):
        return cls("user", {}, f, df)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.ones_like(t)
        if self.kind == "monotone":
            return 1.0 + t
        if self.kind == "plateau":
            d = t - self.params["s"] ** 2
            with np.errstate(divide="ignore", over="ignore"):
                bump = np.where(d > 0, np.exp(-1.0 / np.where(d > 0, d, 1.0)), 0.0)
            return 1.0 + bump
        if self.kind == "wiggle":
            return (t - self.params["c"]) ** 2 + 1.0
        return np.asarray(self.f(t), dtype=float)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(t)
        if self.kind == "monotone":
            return np.ones_like(t)
        if self.kind == "plateau":
            d = t - self.params["s"] ** 2
            safe = np.where(d > 0, d, 1.0)
            with np.errstate(divide="ignore", over="ignore", under="ignore"):
                out = np.exp(-1.0 / safe) / safe**2
            return np.where(d > 0, out, 0.0)
        if self.kind == "wiggle":
            return 2.0 * (t - self.params["c"])
        return np.asarray(self.df(t), dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def _sym_products(F: np.ndarray) -> np.ndarray:
    """d/dLam of F (Lam + Lam^T) F^T, shape (..., 9, 9) acting on vec(Lam)."""
    # column (a,b): F[:, a] F[:, b]^T + F[:, b] F[:, a]^T
    outer = np.einsum("...ia,...jb->...ijab", F, F)
    cols = outer + np.swapaxes(outer, -1, -2)
    return cols.reshape(F.shape[:-2] + (9, 9))


@dataclass(frozen=True)
class ResponseModel:
    """Response functional ``W(X, F)`` valued in 3x3 matrices.

    ``evaluator(X, F)`` must accept a single point and a single matrix.
    ``analytic_derivative(X, F, direction)`` is optional; without it the
    directional derivative falls back to central differences.
    """

    body: BodyDomain
    evaluator: Callable
    analytic_derivative: Optional[Callable] = None
    fd_step: float = 1e-5
    profile: Optional[ScalarProfile] = None
    batch_evaluator: Optional[Callable] = field(default=None, repr=False)
    batch_jacobian: Optional[Callable] = field(default=None, repr=False)
    points_jacobian: Optional[Callable] = field(default=None, repr=False)

    @property
    def has_analytic(self) -> bool:
        return self.analytic_derivative is not None

    @property
    def is_radial(self) -> bool:
        return self.profile is not None

    def without_analytic(self) -> "ResponseModel":
        """Same functional, derivatives by finite differences only."""
        return replace(self, analytic_derivative=None, batch_jacobian=None, points_jacobian=None)

    def evaluate(self, g: Jet1) -> np.ndarray:
        if not self.body.contains(g.source):
            raise DomainError(f"source {g.source} outside body")
        return np.asarray(self.evaluator(np.asarray(g.source), np.asarray(g.F)), dtype=float)

    def evaluate_many(self, X, Fs) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Fs = np.asarray(Fs, dtype=float)
        if self.batch_evaluator is not None:
            return self.batch_evaluator(X, Fs)
        return np.stack([np.asarray(self.evaluator(X, F), dtype=float) for F in Fs])

    def directional_derivative(self, g: Jet1, direction: LeftInvariantDirection) -> np.ndarray:
        """Rate of change of W along ``t -> g . phi_t(eps(source g))``."""
        X = np.asarray(g.source)
        F = np.asarray(g.F)
        if self.analytic_derivative is not None:
            out = np.asarray(self.analytic_derivative(X, F, direction), dtype=float)
        else:
            h = self.fd_step
            v, lam = direction.v, direction.lam
            plus = self.evaluator(X + h * v, F @ (np.eye(3) + h * lam))
            minus = self.evaluator(X - h * v, F @ (np.eye(3) - h * lam))
            out = (np.asarray(plus) - np.asarray(minus)) / (2.0 * h)
        if not np.all(np.isfinite(out)):
            raise NonFiniteDerivative(f"non-finite derivative at {g!r}")
        return out

    def jacobian(self, X, Fs) -> np.ndarray:
        """Matrix of the linear map (v, Lam) -> TW for each F; shape (k, 9, 12)."""
        X = np.asarray(X, dtype=float)
        Fs = np.asarray(Fs, dtype=float).reshape(-1, 3, 3)
        if self.batch_jacobian is not None:
            J = self.batch_jacobian(X, Fs)
        elif self.analytic_derivative is not None:
            J = np.empty((len(Fs), 9, 12))
            for i in range(12):
                d = LeftInvariantDirection.from_vector(np.eye(12)[i])
                for k, F in enumerate(Fs):
                    J[k, :, i] = np.asarray(self.analytic_derivative(X, F, d)).reshape(9)
        else:
            J = self._fd_jacobian(X, Fs)
        if not np.all(np.isfinite(J)):
            raise NonFiniteDerivative(f"non-finite derivative at {tuple(X)}")
        return J

    def jacobian_at(self, Xs, Fs) -> np.ndarray:
        """``jacobian`` at several points; shape (m, k, 9, 12)."""
        Xs = np.asarray(Xs, dtype=float).reshape(-1, 3)
        Fs = np.asarray(Fs, dtype=float).reshape(-1, 3, 3)
        if self.points_jacobian is None:
            return np.stack([self.jacobian(X, Fs) for X in Xs])
        J = self.points_jacobian(Xs, Fs)
        if not np.all(np.isfinite(J)):
            raise NonFiniteDerivative("non-finite derivative in batched jacobian")
        return J

    def _fd_jacobian(self, X, Fs) -> np.ndarray:
        h = self.fd_step
        eye = np.eye(12)
        J = np.empty((len(Fs), 9, 12))
        for i in range(12):
            v, lam = eye[i, :3], eye[i, 3:].reshape(3, 3)
            Fp = Fs @ (np.eye(3) + h * lam)
            Fm = Fs @ (np.eye(3) - h * lam)
            plus = self.evaluate_many(X + h * v, Fp)
            minus = self.evaluate_many(X - h * v, Fm)
            J[:, :, i] = ((plus - minus) / (2.0 * h)).reshape(len(Fs), 9)
        return J


def radial_model(
    profile: ScalarProfile, body: BodyDomain = UNIT_BALL, fd_step: float = 1e-5
) -> ResponseModel:
    """``W(X, F) = f(|X|^2) (F F^T - I)`` with its exact differential."""
    I3 = np.eye(3)

    def w(X, F):
        X = np.asarray(X, dtype=float)
        F = np.asarray(F, dtype=float)
        return float(profile.value(X @ X)) * (F @ F.T - I3)

    def w_many(X, Fs):
        return float(profile.value(X @ X)) * (Fs @ np.swapaxes(Fs, -1, -2) - I3)

    def dw(X, F, direction):
        X = np.asarray(X, dtype=float)
        F = np.asarray(F, dtype=float)
        t = X @ X
        lam = direction.lam
        return float(profile.derivative(t)) * 2.0 * float(X @ direction.v) * (
            F @ F.T - I3
        ) + float(profile.value(t)) * (F @ (lam + lam.T) @ F.T)

    def jac(X, Fs):
        t = X @ X
        fv = float(profile.value(t))
        dfv = float(profile.derivative(t))
        k = len(Fs)
        M = (Fs @ np.swapaxes(Fs, -1, -2) - I3).reshape(k, 9)
        J = np.empty((k, 9, 12))
        J[:, :, :3] = dfv * 2.0 * M[:, :, None] * X[None, None, :]
        J[:, :, 3:] = fv * _sym_products(Fs)
        return J

    def jac_pts(Xs, Fs):
        t = np.sum(Xs**2, axis=1)
        fv = profile.value(t)
        dfv = profile.derivative(t)
        k = len(Fs)
        M = (Fs @ np.swapaxes(Fs, -1, -2) - I3).reshape(k, 9)
        J = np.empty((len(Xs), k, 9, 12))
        J[..., :3] = 2.0 * dfv[:, None, None, None] * M[None, :, :, None] * Xs[:, None, None, :]
        J[..., 3:] = fv[:, None, None, None] * _sym_products(Fs)[None]
        return J

    return ResponseModel(
        body=body,
        evaluator=w,
        analytic_derivative=dw,
        fd_step=fd_step,
        profile=profile,
        batch_evaluator=w_many,
        batch_jacobian=jac,
        points_jacobian=jac_pts,
    )


def evaluate(model: ResponseModel, g: Jet1) -> np.ndarray:
    return model.evaluate(g)


def directional_derivative(model: ResponseModel, g: Jet1, direction) -> np.ndarray:
    return model.directional_derivative(g, direction)


def check_translation_invariance(model, n_samples: int = 100, seed: int = 0) -> dict:
    """Compare W at arrows sharing source and matrix but differing in target.

    Works on anything exposing ``evaluate(jet)`` and ``body``, so it can catch
    wrappers that read the target point.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    body = model.body
    worst = 0.0
    for _ in range(n_samples):
        X, Y, Z = (_random_point(rng, body) for _ in range(3))
        F = _random_invertible(rng)
        a = model.evaluate(Jet1(X, Y, F))
        b = model.evaluate(Jet1(X, Z, F))
        worst = max(worst, float(np.max(np.abs(a - b))))
    return {"passed": worst == 0.0, "max_deviation": worst, "n_samples": n_samples}


def _random_point(rng, body: BodyDomain):
    while True:
        u = rng.uniform(-1.0, 1.0, size=3)
        if u @ u < 0.81:
            return as_point(np.asarray(body.center) + body.radius * u)


def _random_invertible(rng):
    while True:
        F = rng.uniform(-1.0, 1.0, size=(3, 3))
        if abs(np.linalg.det(F)) >= 0.1:
            return F
