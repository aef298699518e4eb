"""Leaves of the characteristic foliations, traced by composed flows.

Base leaves are orbits of admissible base fields: at every step the fibre
at the current point is recomputed, a seeded random unit combination of its
basis is drawn, and one classical Runge-Kutta step is taken along it.
Characteristic leaves in the arrow space follow the same recipe on the
state ``(x, F)`` with ``x' = v(x)``, ``F' = F Lam(x)``; the target point
is never touched, so every traced jet stays in one beta-fibre exactly.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .distribution import (
    DistributionParams,
    GermSolution,
    default_tol,
    germ_solve,
    pointwise_kernel,
)
from .errors import AssignmentConflict, FiberCollapse, NotComposableError, StepOutsideBody
from .grid import GridSpec
from .jets import Jet1, as_point, compose
from .material import IsoOptions, find_material_isomorphism, uniformity_report
from .response import ResponseModel


@dataclass(frozen=True)
class TraceParams:
    mode: str = "germ"
    step: float = 1e-2
    n_steps: int = 2000
    seed: int = 0
    max_rejections: int = 100
    knn: int = 15
    dim_rtol: float = 1e-3
    dist: DistributionParams = DistributionParams()

    def __post_init__(self):
        if self.mode not in ("germ", "pointwise"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.step > 0:
            raise ValueError("flow step must be positive")
        if self.n_steps < 0 or self.max_rejections < 1 or self.knn < 2:
            raise ValueError("n_steps >= 0, max_rejections >= 1 and knn >= 2 required")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "step": self.step,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "max_rejections": self.max_rejections,
            "knn": self.knn,
            "dim_rtol": self.dim_rtol,
        }


@dataclass(eq=False)
class Leaf:
    seed: tuple
    est_dim: int
    cloud: np.ndarray
    invariant_label: float | None = None
    controls: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": list(self.seed),
            "est_dim": self.est_dim,
            "invariant_label": self.invariant_label,
            "n_points": int(len(self.cloud)),
            "controls": self.controls,
        }


def estimate_dim(cloud: np.ndarray, knn: int = 15, rtol: float = 1e-3, n_probe: int = 200, seed: int = 0) -> int:
    """Most common local PCA rank over probe points of the cloud."""
    pts = np.unique(np.asarray(cloud, float).reshape(-1, 3), axis=0)
    if len(pts) < 2:
        return 0
    k = min(knn, len(pts))
    tree = cKDTree(pts)
    rng = np.random.default_rng(seed)
    probes = pts if len(pts) <= n_probe else pts[rng.choice(len(pts), n_probe, replace=False)]
    _, nbr = tree.query(probes, k=k)
    nb = pts[nbr]
    nb = nb - nb.mean(axis=1, keepdims=True)
    ev = np.linalg.eigvalsh(np.swapaxes(nb, 1, 2) @ nb)
    ranks = np.sum(ev > rtol * ev[:, -1:], axis=1)
    ranks[ev[:, -1] <= 0] = 0
    return int(Counter(ranks.tolist()).most_common(1)[0][0])


def _radial_label(model: ResponseModel, cloud: np.ndarray) -> float | None:
    if not model.is_radial:
        return None
    return float(np.mean(np.linalg.norm(cloud - np.asarray(model.body.center), axis=1)))


def _rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


class _BaseStepper:
    """Fibre bookkeeping shared by the two modes."""

    def __init__(self, model: ResponseModel, params: TraceParams):
        self.model = model
        self.params = params
        self.dist = params.dist

    def state(self, x):
        if self.params.mode == "germ":
            return germ_solve(self.model, x, self.dist.ansatz, self.dist.sampler, self.dist.tol)
        return pointwise_kernel(self.model, x, self.dist.sampler, self.dist.tol, check_stability=False)

    @staticmethod
    def base_dim(state) -> int:
        return state.fiber.base_dim if isinstance(state, GermSolution) else state.base_dim

    @staticmethod
    def violations(state, dim: int) -> int:
        """Germ samples whose pointwise rank is below ``dim``."""
        if isinstance(state, GermSolution):
            return int(np.sum(state.sample_base_dims < dim))
        return 0

    def admissible(self, state, dim: int, prev=None) -> bool:
        """Same base rank, and no more low-rank germ samples than at ``prev``
        (none at all when ``prev`` is not given)."""
        if self.base_dim(state) != dim:
            return False
        allowed = 0 if prev is None else self.violations(prev, dim)
        return self.violations(state, dim) <= allowed

    def field(self, state, xi):
        """Unit-speed base field at the state's point, or None if degenerate."""
        if isinstance(state, GermSolution):
            c = state.value_fields() @ xi  # unit value at the current point
            return lambda x: state.evaluate(c, x)[:3]
        w = state.base.basis.T @ xi
        if np.linalg.norm(w) < 1e-8:
            return None

        def f(x):
            fib = pointwise_kernel(self.model, x, self.dist.sampler, self.dist.tol, check_stability=False)
            return fib.base.project(w)

        return f

    def n_controls(self, state) -> int:
        if isinstance(state, GermSolution):
            return state.value_fields().shape[1]
        return state.base_dim


def _draw(rng, n):
    xi = rng.standard_normal(n)
    return xi / np.linalg.norm(xi)


def leaf_trace(model: ResponseModel, X0, params: TraceParams = TraceParams()) -> Leaf:
    """Trace the base leaf through ``X0`` by composed flows of admissible fields."""
    x = np.asarray(model.body.require(X0), float)
    stepper = _BaseStepper(model, params)
    state = stepper.state(x)
    dim = stepper.base_dim(state)
    controls = {"seed": params.seed, "step": params.step, "mode": params.mode, "n_draws": 0, "n_rejected": 0}
    if dim == 0:
        warnings.warn(f"base fibre vanishes at {as_point(x)}; point leaf", FiberCollapse, stacklevel=2)
        return Leaf(as_point(x), 0, x[None, :].copy(), _radial_label(model, x[None, :]), controls)
    rng = np.random.default_rng(params.seed)
    cloud = [x]
    rejected = 0
    while len(cloud) <= params.n_steps:
        xi = _draw(rng, stepper.n_controls(state))
        controls["n_draws"] += 1
        f = stepper.field(state, xi)
        new_state = None
        if f is not None:
            x_new = _rk4(f, x, params.step)
            if np.all(np.isfinite(x_new)) and model.body.contains(x_new):
                new_state = stepper.state(x_new)
                if not stepper.admissible(new_state, dim, state):
                    new_state = None
        if new_state is None:
            rejected += 1
            controls["n_rejected"] += 1
            if rejected >= params.max_rejections:
                raise StepOutsideBody(
                    f"{rejected} consecutive rejected steps at {as_point(x)} after {len(cloud) - 1} steps"
                )
            continue
        rejected = 0
        x, state = x_new, new_state
        cloud.append(x)
    cloud = np.array(cloud)
    est = estimate_dim(cloud, params.knn, params.dim_rtol, seed=params.seed)
    return Leaf(as_point(cloud[0]), est, cloud, _radial_label(model, cloud), controls)


@dataclass(frozen=True)
class CharParams:
    """Characteristic trace settings; either motion may be switched off."""

    trace: TraceParams = TraceParams(n_steps=200)
    base_motion: bool = True
    jet_motion: bool = True


@dataclass(eq=False)
class CharLeaf:
    seed: Jet1
    cloud: list
    target_point: tuple
    controls: list = field(default_factory=list)

    def sources(self) -> np.ndarray:
        return np.array([g.source for g in self.cloud])

    def matrices(self) -> np.ndarray:
        return np.array([g.F for g in self.cloud])

    def to_dict(self) -> dict:
        return {
            "seed": {"source": list(self.seed.source), "target": list(self.seed.target), "F": self.seed.F.tolist()},
            "target_point": list(self.target_point),
            "n_jets": len(self.cloud),
            "n_controls": len(self.controls),
        }


def _value_normalized(fields: np.ndarray, tol: float) -> np.ndarray:
    """Recombine coefficient columns so their values at the centre are orthonormal."""
    if fields.shape[1] == 0:
        return fields
    _, s, vt = np.linalg.svd(fields[:12], full_matrices=False)
    rank = int(np.sum(s > 100 * tol))
    return fields @ (vt[:rank].T / s[:rank])


def char_leaf_trace(
    model: ResponseModel, g0: Jet1, params: CharParams = CharParams(), controls=None
) -> CharLeaf:
    """Trace the characteristic leaf through ``g0``.

    ``controls`` replays a recorded sequence of field combinations instead
    of drawing new ones; the trace stops when the sequence is exhausted.
    """
    tp = params.trace
    dist = tp.dist
    x = np.asarray(model.body.require(g0.source), float)
    F = np.array(g0.F)
    target = g0.target
    tol = default_tol(model) if dist.tol is None else dist.tol

    def solve(p):
        return germ_solve(model, p, dist.ansatz, dist.sampler, dist.tol)

    sol = solve(x)
    base_dim = sol.fiber.base_dim
    fields = _value_normalized(sol.restricted(params.base_motion, params.jet_motion), tol)
    cloud = [g0]
    used = []
    if fields.shape[1] == 0:
        return CharLeaf(g0, cloud, target, used)
    # switched-off blocks are zeroed exactly, not just to rounding level
    nm = sol.n_monomials
    mask = np.ones((nm, 12))
    if not params.base_motion:
        mask[:, :3] = 0.0
    if not params.jet_motion:
        mask[:, 3:] = 0.0
    mask = mask.reshape(-1)
    rng = np.random.default_rng(tp.seed)
    replay = None if controls is None else iter(controls)
    stepper = _BaseStepper(model, tp)
    rejected = 0
    while len(cloud) <= tp.n_steps:
        if replay is None:
            xi = _draw(rng, fields.shape[1])
        else:
            try:
                xi = np.asarray(next(replay), float)
            except StopIteration:
                break
        used.append(xi.tolist())
        c = (fields @ xi) * mask

        def rhs(state, c=c, sol=sol):
            val = sol.evaluate(c, state[:3])
            Fs = state[3:].reshape(3, 3)
            return np.concatenate([val[:3], (Fs @ val[3:].reshape(3, 3)).reshape(9)])

        z = _rk4(rhs, np.concatenate([x, F.reshape(9)]), tp.step)
        x_new, F_new = z[:3], z[3:].reshape(3, 3)
        ok = bool(np.all(np.isfinite(z))) and model.body.contains(x_new)
        new_sol = sol
        if ok and params.base_motion:
            new_sol = solve(x_new)
            ok = stepper.admissible(new_sol, base_dim, sol)
        if not ok:
            rejected += 1
            if rejected >= tp.max_rejections:
                raise StepOutsideBody(f"{rejected} consecutive rejected steps at {as_point(x)}")
            continue
        rejected = 0
        if new_sol is not sol:
            sol = new_sol
            fields = _value_normalized(sol.restricted(params.base_motion, params.jet_motion), tol)
            if fields.shape[1] == 0:
                break
        x, F = x_new, F_new
        cloud.append(Jet1(x, target, F))
    return CharLeaf(g0, cloud, target, used)


def left_translate_leaf(g: Jet1, leaf: CharLeaf) -> CharLeaf:
    """Apply ``compose(g, .)`` to every jet of the leaf."""
    if leaf.target_point != g.source:
        raise NotComposableError(
            f"leaf lies over {leaf.target_point}, translation starts at {g.source}"
        )
    cloud = [compose(g, h) for h in leaf.cloud]
    return CharLeaf(compose(g, leaf.seed), cloud, g.target, list(leaf.controls))


@dataclass(frozen=True)
class DecomposeParams:
    grid: GridSpec = GridSpec(n=7)
    trace: TraceParams = TraceParams(n_steps=200)
    leaf_tol: float = 5e-3
    merge_tol: float = 2e-2
    n_pairs: int = 5
    n_rank_probes: int = 8
    seed: int = 0
    iso: IsoOptions = IsoOptions()
    uniformity_grid: GridSpec = GridSpec(n=5)

    def __post_init__(self):
        if not (self.leaf_tol > 0 and self.merge_tol > 0):
            raise ValueError("leaf_tol and merge_tol must be positive")

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "trace": self.trace.to_dict(),
            "leaf_tol": self.leaf_tol,
            "merge_tol": self.merge_tol,
            "n_pairs": self.n_pairs,
            "n_rank_probes": self.n_rank_probes,
            "seed": self.seed,
            "accept_tol": self.iso.accept_tol,
            "uniformity_grid": self.uniformity_grid.to_dict(),
        }


@dataclass
class LeafSummary:
    leaf_id: int
    seed: tuple
    est_dim: int
    base_dim: int
    label: float | None
    isotropy_dim: int
    groupoid_dim: int
    n_assigned: int = 0
    smoothly_uniform: bool = False
    uniformity_detail: dict = field(default_factory=dict)
    beta_fibre: dict | None = None

    def to_dict(self) -> dict:
        return {
            "leaf_id": self.leaf_id,
            "seed": list(self.seed),
            "est_dim": self.est_dim,
            "base_dim": self.base_dim,
            "label": self.label,
            "isotropy_dim": self.isotropy_dim,
            "groupoid_dim": self.groupoid_dim,
            "n_assigned": self.n_assigned,
            "smoothly_uniform": self.smoothly_uniform,
            "uniformity_detail": self.uniformity_detail,
            "beta_fibre": self.beta_fibre,
        }


@dataclass
class DecompositionReport:
    leaves: list
    uniform: bool
    smoothly_uniform_leaves: list
    notes: list
    points: np.ndarray
    assignment: list
    clouds: list
    uniform_witness: dict | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "leaves": [leaf.to_dict() for leaf in self.leaves],
            "uniform": self.uniform,
            "uniform_witness": self.uniform_witness,
            "smoothly_uniform_leaves": list(self.smoothly_uniform_leaves),
            "notes": list(self.notes),
            "assignment": [[*map(float, p), int(a)] for p, a in zip(self.points, self.assignment)],
            "params": self.params,
        }

    def cloud_rows(self) -> list[tuple]:
        return [(*map(float, p), i) for i, c in enumerate(self.clouds) for p in c]


class _LeafRecord:
    def __init__(self, leaf: Leaf, base_dim: int):
        self.leaf = leaf
        self.base_dim = base_dim
        self.members: list[np.ndarray] = []
        self._tree = None

    def nearest(self, p):
        if self._tree is None or self._tree.n != len(self.leaf.cloud) + len(self.members):
            pts = np.vstack([self.leaf.cloud] + [m[None, :] for m in self.members])
            self._tree = cKDTree(pts)
        d, i = self._tree.query(p)
        return float(d), self._tree.data[i]


def _segment_admissible(model, params: TraceParams, p, q, dim) -> bool:
    """Pointwise base rank equals ``dim`` at every sample of the segment p-q."""
    n = max(2, int(np.ceil(np.linalg.norm(q - p) / (5 * params.step))) + 1)
    dist = params.dist
    for t in np.linspace(0.0, 1.0, n):
        x = (1 - t) * p + t * q
        if not model.body.contains(x):
            return False
        if pointwise_kernel(model, x, dist.sampler, dist.tol, check_stability=False).base_dim != dim:
            return False
    return True


def _match(model, rec: _LeafRecord, p, dp: DecomposeParams, stepper: _BaseStepper):
    """Return a distance-like score if ``p`` belongs to the leaf, else None."""
    leaf = rec.leaf
    if leaf.invariant_label is not None and leaf.est_dim in (1, 2):
        d = abs(float(np.linalg.norm(p - np.asarray(model.body.center))) - leaf.invariant_label)
        return d if d <= dp.leaf_tol else None
    d, q = rec.nearest(p)
    if d <= dp.merge_tol:
        return d
    if leaf.est_dim == 3 and rec.base_dim == 3:
        # open leaf: joined by a straight path through full-rank points
        if stepper.base_dim(stepper.state(p)) == 3 and _segment_admissible(model, dp.trace, p, q, 3):
            return d
    return None


def _smooth_uniformity(model, rec: _LeafRecord, dp: DecomposeParams, stepper: _BaseStepper) -> tuple[bool, dict]:
    pool = np.vstack([rec.leaf.cloud] + [m[None, :] for m in rec.members])
    rng = np.random.default_rng(dp.seed)
    if len(pool) < 2:
        return True, {"rank_probes": 1, "pairs": 0}
    probes = pool[rng.choice(len(pool), min(dp.n_rank_probes, len(pool)), replace=False)]
    ranks = sorted({stepper.base_dim(stepper.state(x)) for x in probes})
    sampler = dp.trace.dist.sampler
    worst = 0.0
    ok_pairs = True
    for _ in range(dp.n_pairs):
        i, j = rng.choice(len(pool), 2, replace=False)
        res = find_material_isomorphism(model, pool[i], pool[j], sampler, dp.iso)
        worst = max(worst, res.residual)
        ok_pairs &= res.found
    ok = ranks == [rec.base_dim] and ok_pairs
    return bool(ok), {"ranks": ranks, "pairs": dp.n_pairs, "worst_residual": worst}


def _beta_fibre_sample(model, rec: _LeafRecord, dp: DecomposeParams, pts, assigned) -> dict:
    """Sample points reachable from the seed by a material isomorphism.

    Reported next to the traced leaf on boundary strata; the two sets need
    not agree, so no verdict is drawn.
    """
    seed = np.asarray(rec.leaf.seed, dtype=float)
    hits = [
        i for i, y in enumerate(pts)
        if find_material_isomorphism(model, seed, y, dp.trace.dist.sampler, dp.iso).found
    ]
    return {
        "n_probes": int(len(pts)),
        "n_members": len(hits),
        "n_outside_traced_leaf": sum(1 for i in hits if not assigned[i]),
        "members": [list(as_point(pts[i])) for i in hits],
    }


def decompose(model: ResponseModel, params: DecomposeParams = DecomposeParams()) -> DecompositionReport:
    """Cover the grid sample of the body by traced leaves."""
    pts = params.grid.points(model.body)
    pts = pts[np.lexsort(pts.T[::-1])]
    stepper = _BaseStepper(model, params.trace)
    records: list[_LeafRecord] = []
    assignment = []
    notes = []
    if params.grid.core > 0:
        notes.append(
            f"grid excludes |X - c| < {params.grid.core} r; degenerate centre points are not assigned"
        )
    for p in pts:
        scores = []
        for lid, rec in enumerate(records):
            sc = _match(model, rec, p, params, stepper)
            if sc is not None:
                scores.append((sc, lid))
        if len(scores) > 1:
            msg = f"point {as_point(p)} matches leaves {[lid for _, lid in scores]}; assigned to nearest"
            warnings.warn(msg, AssignmentConflict, stacklevel=2)
            notes.append(msg)
        if scores:
            lid = min(scores)[1]
            records[lid].members.append(p)
            assignment.append(lid)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FiberCollapse)
            leaf = leaf_trace(model, p, params.trace)
        state = stepper.state(p)
        records.append(_LeafRecord(leaf, stepper.base_dim(state)))
        records[-1].members.append(p)
        assignment.append(len(records) - 1)
    summaries = []
    # a leaf lies on a boundary stratum when the base rank is not constant
    boundary = len({rec.base_dim for rec in records}) > 1
    for lid, rec in enumerate(records):
        fib = germ_solve(model, rec.leaf.seed, params.trace.dist.ansatz, params.trace.dist.sampler,
                         params.trace.dist.tol).fiber
        iso = fib.isotropy_dim
        smooth, detail = _smooth_uniformity(model, rec, params, stepper)
        if rec.leaf.est_dim != rec.base_dim:
            notes.append(f"leaf {lid}: estimated dimension {rec.leaf.est_dim} differs from base rank {rec.base_dim}")
        summaries.append(LeafSummary(
            leaf_id=lid,
            seed=rec.leaf.seed,
            est_dim=rec.leaf.est_dim,
            base_dim=rec.base_dim,
            label=rec.leaf.invariant_label,
            isotropy_dim=iso,
            groupoid_dim=2 * rec.leaf.est_dim + iso,
            n_assigned=len(rec.members),
            smoothly_uniform=smooth,
            uniformity_detail=detail,
            beta_fibre=_beta_fibre_sample(model, rec, params, pts, [a == lid for a in assignment]) if boundary else None,
        ))
    ur = uniformity_report(model, params.uniformity_grid, params.trace.dist.sampler, params.iso)
    return DecompositionReport(
        leaves=summaries,
        uniform=ur.uniform,
        smoothly_uniform_leaves=[s.smoothly_uniform for s in summaries],
        notes=notes,
        points=pts,
        assignment=assignment,
        clouds=[rec.leaf.cloud for rec in records],
        uniform_witness=ur.witness,
        params=params.to_dict(),
    )
