"""Material distribution fibres as kernels of TW over left-invariant directions.

Directions are 12-vectors ``(v, Lam)``: a base velocity in R^3 followed by
a row-major jet velocity in gl(3).  The two blocks carry different units,
so ranks are decided block by block:

* ``Lam``-only kernel: ``ker A_Lam`` (isotropy part);
* base projection: ``ker (P_perp A_v)``, where ``P_perp`` projects onto the
  orthogonal complement of ``range A_Lam``, thresholded relative to
  ``|A_v|``.

This keeps the decision invariant under rescaling of either block, which
matters for profiles whose derivative is tiny but non-zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy import ndimage

from .errors import AnsatzTooSmall, RankUnstable
from .grid import GridSpec
from .jets import as_point
from .material import FSampler
from .response import ResponseModel
from .subspace import SubspaceBasis, nullspace, orthonormal_span

ANALYTIC_TOL = 1e-8
FD_TOL = 1e-4
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class GermAnsatz:
    """Polynomial coefficient fields of ``degree`` in ``(x - X) / eta``,
    constrained at ``n_points`` seeded points of the ball of radius ``eta``
    (``eta`` given as a fraction of the body radius)."""

    degree: int = 1
    neighborhood: float = 0.05
    n_points: int = 20
    seed: int = 12345

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise ValueError("ansatz degree must be 0, 1 or 2")
        if not self.neighborhood > 0:
            raise ValueError("neighborhood radius must be positive")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")

    def offsets(self) -> np.ndarray:
        """Fixed points of the open unit ball."""
        return _ball_offsets(self.n_points, self.seed)


@lru_cache(maxsize=32)
def _ball_offsets(n_points: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_points:
        u = rng.uniform(-1.0, 1.0, size=3)
        if u @ u < 1.0:
            out.append(u)
    arr = np.array(out)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DistributionParams:
    sampler: FSampler = FSampler()
    ansatz: GermAnsatz = GermAnsatz()
    tol: float | None = None
    check_stability: bool = True


@dataclass(frozen=True, eq=False)
class DistributionFiber:
    point: tuple
    full: SubspaceBasis
    base: SubspaceBasis
    mode: str

    @property
    def full_dim(self) -> int:
        return self.full.dim

    @property
    def base_dim(self) -> int:
        return self.base.dim

    @property
    def isotropy_dim(self) -> int:
        return self.full.dim - self.base.dim

    def to_dict(self) -> dict:
        return {
            "point": list(self.point),
            "mode": self.mode,
            "full_dim": self.full_dim,
            "base_dim": self.base_dim,
            "full": self.full.basis.tolist(),
            "base": self.base.basis.tolist(),
        }


def default_tol(model: ResponseModel) -> float:
    return ANALYTIC_TOL if model.has_analytic else FD_TOL


def constraint_matrix(model: ResponseModel, X, Fs) -> np.ndarray:
    """Stacked TW equations at ``(X, X, F)`` for every F; shape (9k, 12).

    Rows of each F are scaled by ``1 / (1 + |F|_F^2)``.
    """
    Fs = np.asarray(Fs, dtype=float).reshape(-1, 3, 3)
    J = model.jacobian(X, Fs)
    w = 1.0 / (1.0 + np.sum(Fs**2, axis=(1, 2)))
    return (J * w[:, None, None]).reshape(-1, 12)


def _fd_floor(model: ResponseModel, X, Fs) -> float:
    if model.has_analytic:
        return 0.0
    wmax = float(np.max(np.abs(model.evaluate_many(np.asarray(X, float), Fs))))
    return 1e4 * _EPS * max(wmax, 1.0) / model.fd_step


def block_kernel(A: np.ndarray, tol: float, floor: float = 0.0):
    """Kernel of ``A`` (n x 12) decided block-wise.

    Returns ``(full, base, iso, svals)``: orthonormal columns spanning the
    kernel (12 x d), its base projection (3 x d_b), its Lam-only part
    (9 x d_i), and the singular values used.
    """
    A = np.asarray(A, dtype=float)
    Av, Al = A[:, :3], A[:, 3:]
    U, s, Vt = np.linalg.svd(Al, full_matrices=False)
    smax = s[0] if s.size else 0.0
    r = int(np.sum(s > max(tol * smax, floor))) if smax > 0 else 0
    ker_l = Vt[r:].T
    Ur = U[:, :r]
    R = Av - Ur @ (Ur.T @ Av)
    ref_v = np.linalg.norm(Av, 2)
    if ref_v > 0:
        _, sr, vtr = np.linalg.svd(R, full_matrices=True)
        rv = int(np.sum(sr > max(tol * ref_v, floor)))
        base = vtr[rv:].T
    else:
        sr = np.zeros(3)
        base = np.eye(3)
    # particular jet velocity carrying each base direction
    pinv = Vt[:r].T @ (Ur.T / s[:r, None]) if r else np.zeros((9, A.shape[0]))
    lam_b = -pinv @ (Av @ base)
    cols = [np.vstack([base, lam_b]), np.vstack([np.zeros((3, ker_l.shape[1])), ker_l])]
    M = np.hstack(cols)
    full = np.linalg.qr(M)[0] if M.shape[1] else np.zeros((12, 0))
    return full, base, ker_l, np.concatenate([s, sr])


def _fiber_from(point, full, base, mode, tol, svals) -> DistributionFiber:
    return DistributionFiber(
        point=point,
        full=SubspaceBasis(12, full.T, tol, tuple(float(x) for x in svals)),
        base=SubspaceBasis(3, base.T, tol, ()),
        mode=mode,
    )


def _pointwise(model, X, Fs, tol):
    A = constraint_matrix(model, X, Fs)
    return block_kernel(A, tol, _fd_floor(model, X, Fs))


def pointwise_kernel(
    model: ResponseModel, X, sampler: FSampler = FSampler(), tol: float | None = None,
    check_stability: bool = True,
) -> DistributionFiber:
    """Fibre of the pointwise kernel of TW at the identity over ``X``."""
    X = model.body.require(X)
    tol = default_tol(model) if tol is None else tol
    full, base, _, s = _pointwise(model, np.asarray(X), sampler.samples, tol)
    if check_stability:
        full2, base2, _, _ = _pointwise(model, np.asarray(X), sampler.doubled().samples, tol)
        if (full.shape[1], base.shape[1]) != (full2.shape[1], base2.shape[1]):
            raise RankUnstable(X, [(full.shape[1], base.shape[1]), (full2.shape[1], base2.shape[1])])
    return _fiber_from(X, full, base, "pointwise", tol, s)


def monomial_exponents(degree: int) -> list[tuple[int, int, int]]:
    exps = [(0, 0, 0)]
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(range(3), d):
            e = [0, 0, 0]
            for c in combo:
                e[c] += 1
            exps.append(tuple(e))
    return exps


def monomials(u: np.ndarray, degree: int) -> np.ndarray:
    u = np.atleast_2d(u)
    cols = [np.prod(u ** np.array(e), axis=1) for e in monomial_exponents(degree)]
    return np.stack(cols, axis=1)


@dataclass(eq=False)
class GermSolution:
    """Admissible polynomial fields around ``center``.

    ``fields`` holds coefficient vectors as columns, laid out as
    ``(n_monomials, 12)`` row-major.
    """

    center: np.ndarray
    eta: float
    degree: int
    fields: np.ndarray
    sample_points: np.ndarray
    sample_base_dims: np.ndarray
    fiber: DistributionFiber
    tol: float = ANALYTIC_TOL

    @property
    def n_monomials(self) -> int:
        return len(monomial_exponents(self.degree))

    def evaluate(self, coeffs: np.ndarray, x) -> np.ndarray:
        u = (np.asarray(x, float) - self.center) / self.eta
        return monomials(u, self.degree)[0] @ np.asarray(coeffs).reshape(self.n_monomials, 12)

    def restricted(self, base_motion: bool = True, jet_motion: bool = True) -> np.ndarray:
        """Orthonormal admissible fields with the v-part or Lam-part forced to 0."""
        if base_motion and jet_motion:
            return self.fields
        if not base_motion and not jet_motion:
            return np.zeros((self.fields.shape[0], 0))
        nm = self.n_monomials
        idx = np.arange(nm * 12).reshape(nm, 12)
        zero_cols = idx[:, :3] if not base_motion else idx[:, 3:]
        # fields in span(K) whose zeroed coordinates vanish
        sub = self.fields[zero_cols.reshape(-1)]
        null, _ = nullspace(sub, self.tol, ref=1.0) if sub.size else (np.eye(self.fields.shape[1]), None)
        out = self.fields @ null
        return np.linalg.qr(out)[0] if out.shape[1] else out

    def base_fields(self) -> np.ndarray:
        """Orthonormal basis of the v-parts of admissible fields, as full
        12-component coefficient vectors with the Lam-part kept."""
        nm = self.n_monomials
        vpart = self.fields.reshape(nm, 12, -1)[:, :3, :].reshape(nm * 3, -1)
        u, s, vt = np.linalg.svd(vpart, full_matrices=False)
        rank = int(np.sum(s > 100 * self.tol))
        return self.fields @ vt[:rank].T

    def value_fields(self) -> np.ndarray:
        """Admissible fields whose values at the centre are an orthonormal
        basis of the base fibre; minimal coefficient norm among such fields."""
        v0 = self.fields[:3]  # constant monomial carries the value at center
        _, s, vt = np.linalg.svd(v0, full_matrices=False)
        rank = int(np.sum(s > 100 * self.tol))
        return self.fields @ (vt[:rank].T / s[:rank])


def effective_eta(model: ResponseModel, X, ansatz: GermAnsatz) -> float:
    eta = ansatz.neighborhood * model.body.radius
    return min(eta, 0.5 * model.body.distance_to_boundary(X))


def _batched_pointwise(model, pts, Fs, tol):
    """Block kernels at several points at once.

    Returns ``(Q, dims, base_dims)`` where the first ``dims[j]`` columns of
    ``Q[j]`` span the kernel at point ``j`` (zero padded to 12 columns).
    """
    Fs = np.asarray(Fs, dtype=float).reshape(-1, 3, 3)
    w = 1.0 / (1.0 + np.sum(Fs**2, axis=(1, 2)))
    A = (model.jacobian_at(pts, Fs) * w[None, :, None, None]).reshape(len(pts), -1, 12)
    floors = np.array([_fd_floor(model, p, Fs) for p in pts])
    Av, Al = A[:, :, :3], A[:, :, 3:]
    U, s, Vt = np.linalg.svd(Al, full_matrices=False)
    smax = s[:, :1]
    r = np.where(smax[:, 0] > 0, np.sum(s > np.maximum(tol * smax, floors[:, None]), axis=1), 0)
    mask = np.arange(9)[None, :] < r[:, None]
    Um = U * mask[:, None, :]
    R = Av - Um @ (np.swapaxes(Um, 1, 2) @ Av)
    ref_v = np.linalg.svd(Av, compute_uv=False)[:, 0]
    _, sr, vtr = np.linalg.svd(R, full_matrices=False)
    rv = np.sum(sr > np.maximum(tol * ref_v, floors)[:, None], axis=1)
    rv = np.where(ref_v > 0, rv, 0)
    m = len(pts)
    Q = np.zeros((m, 12, 12))
    dims = np.zeros(m, dtype=int)
    for j in range(m):
        rj, rvj = r[j], rv[j]
        base = vtr[j, rvj:].T if ref_v[j] > 0 else np.eye(3)
        ker_l = Vt[j, rj:].T
        pinv = Vt[j, :rj].T @ (U[j, :, :rj].T / s[j, :rj, None])
        lam_b = -pinv @ (Av[j] @ base)
        nb, nl = base.shape[1], ker_l.shape[1]
        Q[j, :3, :nb] = base
        Q[j, 3:, :nb] = lam_b
        Q[j, 3:, nb:nb + nl] = ker_l
        dims[j] = nb + nl
    return Q, dims, 3 - rv


def germ_solve(
    model: ResponseModel, X, ansatz: GermAnsatz = GermAnsatz(), sampler: FSampler = FSampler(),
    tol: float | None = None,
) -> GermSolution:
    X = np.asarray(model.body.require(X), float)
    tol = default_tol(model) if tol is None else tol
    eta = effective_eta(model, X, ansatz)
    U = ansatz.offsets()
    pts = X + eta * U
    Fs = sampler.samples
    Q, dims, base_dims = _batched_pointwise(model, pts, Fs, tol)
    mono = monomials(U, ansatz.degree)
    nm = mono.shape[1]
    # complements of the pointwise kernels; Q[j] has well-conditioned
    # full column rank dims[j], so the small eigenvectors of Q Q^T suffice
    Uq = np.linalg.eigh(Q @ np.swapaxes(Q, 1, 2))[1][:, :, ::-1]
    rows = []
    for j in range(len(pts)):
        comp = Uq[j][:, dims[j]:]
        if comp.shape[1]:
            rows.append(np.einsum("m,qc->qmc", mono[j], comp.T).reshape(comp.shape[1], nm * 12))
    G = np.vstack(rows) if rows else np.zeros((0, nm * 12))
    if G.shape[0] > G.shape[1]:
        G = np.linalg.qr(G, mode="r")  # same right singular vectors, smaller SVD
    K, svals = nullspace(G, tol)
    values = K[:12]  # monomial (0,0,0) is the value at X
    atol = 100 * tol
    full = orthonormal_span(values, atol)
    base = orthonormal_span(full[:3], atol)
    fiber = _fiber_from(as_point(X), full, base, "germ", tol, svals)
    return GermSolution(X, eta, ansatz.degree, K, pts, base_dims, fiber, tol)


def germ_fiber(
    model: ResponseModel, X, ansatz: GermAnsatz = GermAnsatz(), sampler: FSampler = FSampler(),
    tol: float | None = None, check_stability: bool = True, check_ansatz: bool = False,
) -> DistributionFiber:
    """Span at ``X`` of the values of admissible polynomial fields."""
    fib = germ_solve(model, X, ansatz, sampler, tol).fiber
    dims = (fib.full_dim, fib.base_dim)
    if check_stability:
        f2 = germ_solve(model, X, ansatz, sampler.doubled(), tol).fiber
        if (f2.full_dim, f2.base_dim) != dims:
            raise RankUnstable(fib.point, [dims, (f2.full_dim, f2.base_dim)])
    if check_ansatz and ansatz.degree == 1:
        f3 = germ_solve(model, X, replace(ansatz, degree=2), sampler, tol).fiber
        if (f3.full_dim, f3.base_dim) != dims:
            warnings.warn(
                f"fibre at {fib.point} changes from {dims} to {(f3.full_dim, f3.base_dim)} at degree 2",
                AnsatzTooSmall,
                stacklevel=2,
            )
    return fib


def fiber(model: ResponseModel, X, mode: str = "germ", params: DistributionParams = DistributionParams()):
    if mode == "pointwise":
        return pointwise_kernel(model, X, params.sampler, params.tol, params.check_stability)
    if mode == "germ":
        return germ_fiber(model, X, params.ansatz, params.sampler, params.tol, params.check_stability)
    raise ValueError(f"unknown mode {mode!r}")


def isotropy_algebra(
    model: ResponseModel, X, mode: str = "germ", params: DistributionParams = DistributionParams()
) -> SubspaceBasis:
    """Jet velocities ``Lam`` with ``(0, Lam)`` in the fibre (ambient 9)."""
    fib = fiber(model, X, mode, params)
    B = fib.full.basis.T
    tol = default_tol(model) if params.tol is None else params.tol
    if B.shape[1] == 0:
        return SubspaceBasis(9, np.zeros((0, 9)), tol)
    null, _ = nullspace(B[:3], 100 * tol, ref=1.0)
    lam = orthonormal_span(B[3:] @ null, 100 * tol)
    return SubspaceBasis(9, lam.T, tol)


@dataclass
class RankMap:
    grid: GridSpec
    mode: str
    points: list
    full_dims: list
    base_dims: list
    errors: list
    strata: list = field(default_factory=list)

    @property
    def n_unstable(self) -> int:
        return sum(1 for e in self.errors if e)

    def to_rows(self) -> list[tuple]:
        return [(*p, f, b) for p, f, b in zip(self.points, self.full_dims, self.base_dims)]

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "grid": self.grid.to_dict(),
            "n_points": len(self.points),
            "n_unstable": self.n_unstable,
            "strata": self.strata,
            "base_dims": sorted({b for b in self.base_dims if b >= 0}),
        }


def rank_map(
    model: ResponseModel, grid: GridSpec = GridSpec(), mode: str = "germ",
    params: DistributionParams = DistributionParams(),
) -> RankMap:
    """Fibre dimensions over a grid, plus connected strata of constant base rank."""
    idx_pts = grid.indexed_points(model.body)
    pts, fulls, bases, errs = [], [], [], []
    vol = np.full((grid.n,) * 3, -1, dtype=int)
    for idx, p in idx_pts:
        try:
            fib = fiber(model, p, mode, params)
            fd, bd, err = fib.full_dim, fib.base_dim, ""
        except RankUnstable as exc:
            fd, bd, err = -1, -1, str(exc)
        pts.append([float(c) for c in p])
        fulls.append(fd)
        bases.append(bd)
        errs.append(err)
        vol[idx] = bd
    return RankMap(grid, mode, pts, fulls, bases, errs, _strata(vol))


def _strata(vol: np.ndarray) -> list[dict]:
    out = []
    for d in sorted(set(np.unique(vol)) - {-1}):
        labels, n = ndimage.label(vol == d)
        for k in range(1, n + 1):
            out.append({"base_dim": int(d), "n_points": int(np.sum(labels == k))})
    return out
