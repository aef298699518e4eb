"""Material isomorphisms, material symmetries and uniformity verdicts.

Membership in the material groupoid is quantified over every deformation
gradient.  Here that quantifier is replaced by a seeded finite sample of
gradients, so a positive answer is evidence, and a negative one a genuine
counterexample.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .grid import GridSpec
from .jets import Jet1, as_point
from .response import ResponseModel


@dataclass(frozen=True)
class FSampler:
    """Seeded invertible deformation gradients, entries uniform in [-1, 1],
    ``|det F| >= 0.1``.  A larger ``count`` with the same seed extends the
    smaller sample (prefix property)."""

    count: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.count < 4:
            raise ValueError("FSampler needs count >= 4")

    @cached_property
    def samples(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        out = []
        while len(out) < self.count:
            F = rng.uniform(-1.0, 1.0, size=(3, 3))
            if abs(np.linalg.det(F)) >= 0.1:
                out.append(F)
        arr = np.array(out)
        arr.flags.writeable = False
        return arr

    def doubled(self) -> "FSampler":
        return FSampler(2 * self.count, self.seed)


@dataclass(frozen=True)
class IsoOptions:
    accept_tol: float = 1e-6
    n_random_starts: int = 4
    max_iter: int = 200
    seed: int = 0


@dataclass
class MaterialIsoResult:
    found: bool
    P: np.ndarray
    residual: float
    iterations: int
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "P": np.asarray(self.P).tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "note": self.note,
        }


def _mismatch(model: ResponseModel, X, Y, P, Fs) -> np.ndarray:
    """Per-sample ``W(X, F P) - W(Y, F)``, shape (k, 3, 3)."""
    return model.evaluate_many(X, Fs @ P) - model.evaluate_many(Y, Fs)


def iso_residual(model: ResponseModel, X, Y, P, sampler: FSampler) -> float:
    d = _mismatch(model, np.asarray(X, float), np.asarray(Y, float), np.asarray(P, float), sampler.samples)
    return float(np.max(np.linalg.norm(d.reshape(len(d), 9), axis=1)))


def is_material_isomorphism(model: ResponseModel, P: Jet1, sampler: FSampler, tol: float = 1e-6):
    """Return ``(accepted, residual)`` for the arrow ``P`` on the sampled gradients."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    res = iso_residual(model, P.source, P.target, P.F, sampler)
    return res <= tol, res


def symmetry_check(model: ResponseModel, X, Q, sampler: FSampler, tol: float = 1e-6) -> bool:
    X = as_point(X)
    ok, _ = is_material_isomorphism(model, Jet1(X, X, Q), sampler, tol)
    return ok


def _axis_rotation(axis: int) -> np.ndarray:
    R = np.eye(3)
    i, j = [a for a in range(3) if a != axis]
    R[i, i] = R[j, j] = 0.0
    R[i, j], R[j, i] = -1.0, 1.0
    return R


def _random_orthogonal(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    return q * np.sign(np.diag(r))


def starting_points(opts: IsoOptions) -> list[np.ndarray]:
    rng = np.random.default_rng(opts.seed)
    starts = [np.eye(3)] + [_axis_rotation(a) for a in range(3)]
    starts += [_random_orthogonal(rng) for _ in range(opts.n_random_starts)]
    return starts


def _p_jacobian(model, X, P, Fs) -> np.ndarray:
    """d vec(W(X, F P)) / d vec(P) stacked over samples; shape (9k, 9)."""
    Pinv = np.linalg.inv(P)
    J = model.jacobian(X, Fs @ P)[:, :, 3:]  # (k, 9, 9) w.r.t. Lam
    # perturbing P by E_ab equals perturbing F P along Lam = P^{-1} E_ab
    T = np.kron(Pinv, np.eye(3))
    return (J @ T).reshape(-1, 9)


def _levenberg_marquardt(model, X, Y, P0, Fs, max_iter):
    P = P0.copy()
    target = model.evaluate_many(Y, Fs)
    r = (model.evaluate_many(X, Fs @ P) - target).reshape(-1)
    cost = r @ r
    lam = 1e-3
    it = 0
    for it in range(1, max_iter + 1):
        if cost < 1e-30:
            break
        if abs(np.linalg.det(P)) < 1e-8:
            break
        J = _p_jacobian(model, X, P, Fs)
        g = J.T @ r
        H = J.T @ J
        improved = False
        while lam < 1e12:
            step = np.linalg.solve(H + lam * np.diag(np.diag(H) + 1e-12), -g)
            P_new = P + step.reshape(3, 3)
            r_new = (model.evaluate_many(X, Fs @ P_new) - target).reshape(-1)
            cost_new = r_new @ r_new
            if cost_new < cost:
                improved = True
                break
            lam *= 10.0
        if not improved:
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        P, r, cost = P_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if np.linalg.norm(step) < 1e-14 * (1 + np.linalg.norm(P)) or rel < 1e-14:
            break
    return P, it


def find_material_isomorphism(
    model: ResponseModel, X, Y, sampler: FSampler, opts: IsoOptions = IsoOptions()
) -> MaterialIsoResult:
    """Multi-start damped Gauss-Newton search for ``P`` with
    ``W(X, F P) = W(Y, F)`` on the sampled gradients."""
    X = np.asarray(model.body.require(X), float)
    Y = np.asarray(model.body.require(Y), float)
    Fs = np.asarray(sampler.samples)
    best = None
    total_iter = 0
    n_singular = 0
    for P0 in starting_points(opts):
        P, it = _levenberg_marquardt(model, X, Y, P0, Fs, opts.max_iter)
        total_iter += it
        if abs(np.linalg.det(P)) < 1e-8:
            n_singular += 1
            continue
        res = iso_residual(model, X, Y, P, sampler)
        found = res <= opts.accept_tol
        key = (not found, np.linalg.norm(P - np.eye(3)) if found else res)
        if best is None or key < best[0]:
            best = (key, P, res, found)
        if found and np.array_equal(P, np.eye(3)):
            break  # cannot be beaten under the tie-break
    if best is None:
        return MaterialIsoResult(False, np.full((3, 3), np.nan), float("inf"), total_iter,
                                 note="SingularCandidate: every start collapsed")
    _, P, res, found = best
    note = f"{n_singular} singular starts discarded" if n_singular else ""
    return MaterialIsoResult(bool(found), P, float(res), total_iter, note)


@dataclass
class UniformityReport:
    uniform: bool
    n_points: int
    n_pairs_checked: int
    witness: dict | None = None
    points: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "uniform": self.uniform,
            "n_points": self.n_points,
            "n_pairs_checked": self.n_pairs_checked,
            "witness": self.witness,
        }


def uniformity_report(
    model: ResponseModel,
    grid: GridSpec = GridSpec(n=5),
    sampler: FSampler = FSampler(),
    opts: IsoOptions = IsoOptions(),
) -> UniformityReport:
    """Transitivity check over every pair of grid points; stops at the first
    pair without an accepted isomorphism and reports it as the witness."""
    pts = grid.points(model.body)
    checked = 0
    for i, j in itertools.combinations(range(len(pts)), 2):
        checked += 1
        res = find_material_isomorphism(model, pts[i], pts[j], sampler, opts)
        if not res.found:
            witness = {"X": pts[i].tolist(), "Y": pts[j].tolist(), "best_residual": res.residual}
            return UniformityReport(False, len(pts), checked, witness, pts.tolist())
    return UniformityReport(True, len(pts), checked, None, pts.tolist())
