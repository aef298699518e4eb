"""Seeded invariant suite: every structural property checked with its
measured residual and the first counterexample found."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .distribution import (
    DistributionParams,
    block_kernel,
    constraint_matrix,
    germ_solve,
    pointwise_kernel,
)
from .foliation import CharParams, TraceParams, char_leaf_trace, leaf_trace, left_translate_leaf
from .jets import Jet1, LeftInvariantDirection as D, compose, identity, invert, left_translate
from .material import (
    FSampler,
    IsoOptions,
    find_material_isomorphism,
    is_material_isomorphism,
    iso_residual,
    symmetry_check,
)
from .response import ResponseModel, check_translation_invariance
from .subspace import principal_angles


@dataclass
class PropertyResult:
    name: str
    passed: bool
    residual: float
    bound: float
    counterexample: dict | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "residual": self.residual,
            "bound": self.bound,
            "counterexample": self.counterexample,
        }


@dataclass(frozen=True)
class VerifyParams:
    seed: int = 0
    sampler: FSampler = FSampler()
    tol: float | None = None
    n_groupoid: int = 1000
    n_points: int = 20
    n_pairs: int = 10
    equivariance_steps: int = 20
    conservation_steps: int = 2000
    flow_step: float = 1e-2
    drift_bound: float = 1e-4
    accept_tol: float = 1e-6


def analytic_kernel(model: ResponseModel, X) -> np.ndarray:
    """Closed-form kernel for radial models: columns spanning
    ``{(v, Lam): f'(|X|^2) <X, v> = 0, Lam skew}``."""
    X = np.asarray(X, float) - np.asarray(model.body.center)
    t = float(X @ X)
    dfv = float(model.profile.derivative(t))
    if dfv != 0.0 and t > 0:
        n = X / np.sqrt(t)
        base = np.linalg.svd(n[None, :])[2][1:].T
    else:
        base = np.eye(3)
    skew = []
    for a, b in ((0, 1), (0, 2), (1, 2)):
        E = np.zeros((3, 3))
        E[a, b], E[b, a] = 1.0, -1.0
        skew.append(E.reshape(9) / np.sqrt(2))
    cols = [np.concatenate([v, np.zeros(9)]) for v in base.T]
    cols += [np.concatenate([np.zeros(3), s]) for s in skew]
    return np.array(cols).T


def _random_point(rng, model, rmin=0.05, rmax=0.95):
    c = np.asarray(model.body.center)
    while True:
        u = rng.uniform(-1, 1, 3)
        if rmin**2 <= u @ u <= rmax**2:
            return c + model.body.radius * u


def _random_matrix(rng):
    while True:
        F = rng.uniform(-1, 1, (3, 3))
        if abs(np.linalg.det(F)) >= 0.1:
            return F


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _random_jet(rng, model, source=None, target=None):
    s = _random_point(rng, model) if source is None else source
    t = _random_point(rng, model) if target is None else target
    return Jet1(s, t, _random_matrix(rng))


def _result(name, residual, bound, counter=None, passed=None):
    ok = residual <= bound if passed is None else passed
    return PropertyResult(name, bool(ok), float(residual), float(bound), None if ok else counter)


# groupoid laws


def check_groupoid_laws(model, vp: VerifyParams) -> list[PropertyResult]:
    rng = np.random.default_rng(vp.seed)
    worst = {"associativity": 0.0, "source_target": 0.0, "identity_inverse": 0.0, "left_translation": 0.0}
    counter = {}
    for _ in range(vp.n_groupoid):
        k = _random_jet(rng, model)
        h = _random_jet(rng, model, source=k.target)
        g = _random_jet(rng, model, source=h.target)
        a = compose(g, compose(h, k))
        b = compose(compose(g, h), k)
        d = float(np.max(np.abs(a.F - b.F)) / max(1.0, np.max(np.abs(a.F))))
        if a.source != b.source or a.target != b.target:
            d = np.inf
        if d > worst["associativity"]:
            worst["associativity"], counter["associativity"] = d, {"g": repr(g), "h": repr(h), "k": repr(k)}
        gh = compose(g, h)
        ok = gh.source == h.source and gh.target == g.target
        if not ok:
            worst["source_target"], counter["source_target"] = np.inf, {"g": repr(g), "h": repr(h)}
        e_t, e_s = identity(g.target, model.body), identity(g.source, model.body)
        gi = invert(g)
        devs = [
            np.max(np.abs(compose(e_t, g).F - g.F)),
            np.max(np.abs(compose(g, e_s).F - g.F)),
            np.max(np.abs(compose(g, gi).F - np.eye(3))),
            np.max(np.abs(compose(gi, g).F - np.eye(3))),
        ]
        ends = compose(g, gi).source == g.target and compose(gi, g).source == g.source
        d = float(max(devs)) if ends else np.inf
        if d > worst["identity_inverse"]:
            worst["identity_inverse"], counter["identity_inverse"] = d, {"g": repr(g)}
        back = left_translate(gi, left_translate(g, h))
        d = float(np.max(np.abs(back.F - h.F))) if back.target == h.target else np.inf
        if d > worst["left_translation"]:
            worst["left_translation"], counter["left_translation"] = d, {"g": repr(g), "h": repr(h)}
    return [_result(f"groupoid.{k}", v, 1e-12, counter.get(k)) for k, v in worst.items()]


# response


def check_response(model, vp: VerifyParams) -> list[PropertyResult]:
    rng = np.random.default_rng(vp.seed + 1)
    fd = model.without_analytic()
    worst_fd, worst_lin, worst_id = 0.0, 0.0, 0.0
    c_fd = c_lin = c_id = None
    for _ in range(100):
        X = _random_point(rng, model)
        g = Jet1(X, _random_point(rng, model), _random_matrix(rng))
        d1 = D(rng.standard_normal(3), rng.standard_normal((3, 3)))
        d2 = D(rng.standard_normal(3), rng.standard_normal((3, 3)))
        a = model.directional_derivative(g, d1)
        f = fd.directional_derivative(g, d1)
        r = float(np.max(np.abs(a - f)) / (1 + np.max(np.abs(a))))
        if r > worst_fd:
            worst_fd, c_fd = r, {"jet": repr(g)}
        al, be = rng.standard_normal(2)
        comb = D.from_vector(al * d1.as_vector() + be * d2.as_vector())
        lhs = model.directional_derivative(g, comb)
        rhs = al * a + be * model.directional_derivative(g, d2)
        r = float(np.max(np.abs(lhs - rhs)) / max(1e-300, np.max(np.abs(lhs)) + np.max(np.abs(rhs))))
        if r > worst_lin:
            worst_lin, c_lin = r, {"jet": repr(g)}
        r = float(np.max(np.abs(model.evaluate(identity(X, model.body)))))
        if r > worst_id:
            worst_id, c_id = r, {"X": list(map(float, X))}
    ti = check_translation_invariance(model, 100, vp.seed)
    return [
        _result("response.analytic_vs_fd", worst_fd, 1e-6, c_fd),
        _result("response.linearity", worst_lin, 1e-8, c_lin),
        _result("response.identity_zero", worst_id, 0.0, c_id),
        _result("response.target_independence", ti["max_deviation"], 0.0, {"n_samples": ti["n_samples"]}),
    ]


# material


def check_material(model, vp: VerifyParams) -> list[PropertyResult]:
    rng = np.random.default_rng(vp.seed + 2)
    tau = vp.accept_tol
    opts = IsoOptions(accept_tol=tau, seed=vp.seed)
    sampler = vp.sampler
    c = np.asarray(model.body.center)
    worst_cl = worst_inv = worst_sym = 0.0
    ok_cl = ok_inv = ok_mono = True
    c_cl = c_inv = c_sym = c_mono = None
    for _ in range(3):
        # three points on one sphere, where radial models admit rotations
        X = _random_point(rng, model, 0.1, 0.9)
        r = np.linalg.norm(X - c)
        Y, Z = (c + r * _random_rotation(rng) @ ((X - c) / r) for _ in range(2))
        P = find_material_isomorphism(model, X, Y, sampler, opts)
        R = find_material_isomorphism(model, Y, Z, sampler, opts)
        if P.found and R.found:
            RP = compose(Jet1(Y, Z, R.P), Jet1(X, Y, P.P))
            acc, res = is_material_isomorphism(model, RP, sampler, 2 * tau)
            worst_cl = max(worst_cl, res)
            if not acc:
                ok_cl, c_cl = False, {"X": X.tolist(), "Y": Y.tolist(), "Z": Z.tolist()}
            acc, res = is_material_isomorphism(model, invert(Jet1(X, Y, P.P)), sampler, tau)
            worst_inv = max(worst_inv, res)
            if not acc:
                ok_inv, c_inv = False, {"X": X.tolist(), "Y": Y.tolist()}
    for _ in range(50):
        X = _random_point(rng, model)
        Q = _random_rotation(rng) * (1 if rng.random() < 0.5 else -1)
        res = iso_residual(model, X, X, Q, sampler)
        if not symmetry_check(model, X, Q, sampler, tau) or res > worst_sym:
            worst_sym = max(worst_sym, res)
            c_sym = {"X": X.tolist(), "Q": Q.tolist()}
    worst_drop = 0.0
    for _ in range(20):
        X, Y = _random_point(rng, model), _random_point(rng, model)
        P = _random_matrix(rng)
        small = iso_residual(model, X, Y, P, sampler)
        big = iso_residual(model, X, Y, P, sampler.doubled())
        if big < small:
            ok_mono = False
            worst_drop = max(worst_drop, small - big)
            c_mono = {"X": X.tolist(), "Y": Y.tolist(), "P": P.tolist()}
    return [
        _result("material.composition_closure", worst_cl, 2 * tau, c_cl, ok_cl),
        _result("material.inverse_closure", worst_inv, tau, c_inv, ok_inv),
        _result("material.rotations_are_symmetries", worst_sym, tau, c_sym),
        _result("material.residual_monotonicity", worst_drop, 0.0, c_mono, ok_mono),
    ]


# distribution


def _angle(A, B) -> float:
    if A.shape[1] != B.shape[1]:
        return np.inf
    ang = principal_angles(A, B)
    return float(np.max(ang)) if ang.size else 0.0


def check_distribution(model, vp: VerifyParams) -> list[PropertyResult]:
    rng = np.random.default_rng(vp.seed + 3)
    dp = DistributionParams(sampler=vp.sampler, tol=vp.tol)
    worst = {"oracle": 0.0, "coherence": 0.0, "projection": 0.0}
    ok = {"germ_subset": True, "stability": True}
    counter = {}
    for _ in range(vp.n_points):
        X = _random_point(rng, model)
        pw = pointwise_kernel(model, X, vp.sampler, vp.tol, check_stability=False)
        if model.is_radial:
            a = _angle(pw.full.basis.T, analytic_kernel(model, X))
            if a > worst["oracle"]:
                worst["oracle"], counter["oracle"] = a, {"X": X.tolist()}
        F0 = _random_matrix(rng)
        tol = pw.full.tol_used
        k1 = block_kernel(constraint_matrix(model, X, vp.sampler.samples), tol)[0]
        k2 = block_kernel(constraint_matrix(model, X, F0 @ vp.sampler.samples), tol)[0]
        a = _angle(k1, k2)
        if a > worst["coherence"]:
            worst["coherence"], counter["coherence"] = a, {"X": X.tolist(), "F0": F0.tolist()}
        full = pw.full.basis
        r = float(np.linalg.norm(full[:, :3].T - pw.base.projector() @ full[:, :3].T))
        rank_v = np.linalg.matrix_rank(full[:, :3], tol=1e-8) if full.size else 0
        if rank_v != pw.base_dim:
            r = np.inf
        if r > worst["projection"]:
            worst["projection"], counter["projection"] = r, {"X": X.tolist()}
        sol = germ_solve(model, X, dp.ansatz, vp.sampler, vp.tol)
        g = sol.fiber
        inside = bool(np.all(sol.sample_base_dims == pw.base_dim))
        if g.full_dim > pw.full_dim or (inside and g.full_dim != pw.full_dim):
            ok["germ_subset"] = False
            counter["germ_subset"] = {"X": X.tolist(), "germ": g.full_dim, "pointwise": pw.full_dim}
        pw2 = pointwise_kernel(model, X, vp.sampler.doubled(), vp.tol, check_stability=False)
        if (pw2.full_dim, pw2.base_dim) != (pw.full_dim, pw.base_dim):
            ok["stability"] = False
            counter["stability"] = {"X": X.tolist()}
    out = []
    if model.is_radial:
        out.append(_result("distribution.analytic_kernel", worst["oracle"], 1e-6, counter.get("oracle")))
    out += [
        _result("distribution.left_invariance_coherence", worst["coherence"], 1e-8, counter.get("coherence")),
        _result("distribution.germ_within_pointwise", 0.0, 0.0, counter.get("germ_subset"), ok["germ_subset"]),
        _result("distribution.base_projection", worst["projection"], 1e-10, counter.get("projection")),
        _result("distribution.sampler_stability", 0.0, 0.0, counter.get("stability"), ok["stability"]),
    ]
    return out


# foliation


def check_foliation(model, vp: VerifyParams) -> list[PropertyResult]:
    rng = np.random.default_rng(vp.seed + 4)
    dist = DistributionParams(sampler=vp.sampler, tol=vp.tol)
    tp = TraceParams(n_steps=vp.equivariance_steps, seed=vp.seed, step=vp.flow_step, dist=dist)
    cp = CharParams(trace=tp)
    worst_eq = 0.0
    beta_ok = True
    c_eq = c_beta = None
    for i in range(vp.n_pairs):
        X = _random_point(rng, model, 0.1, 0.85)
        h = Jet1(X, _random_point(rng, model), _random_matrix(rng))
        g = Jet1(h.target, _random_point(rng, model), _random_matrix(rng))
        lh = char_leaf_trace(model, h, replace(cp, trace=replace(tp, seed=vp.seed + i)))
        lgh = char_leaf_trace(model, compose(g, h), cp, controls=lh.controls)
        moved = left_translate_leaf(g, lh)
        for leaf in (lh, lgh):
            if any(j.target != leaf.target_point for j in leaf.cloud):
                beta_ok, c_beta = False, {"seed": repr(leaf.seed)}
        if len(moved.cloud) != len(lgh.cloud):
            worst_eq, c_eq = np.inf, {"g": repr(g), "h": repr(h)}
            continue
        for a, b in zip(moved.cloud, lgh.cloud):
            d = max(np.max(np.abs(np.subtract(a.source, b.source))), np.max(np.abs(a.F - b.F)))
            if a.target != b.target:
                d = np.inf
            if d > worst_eq:
                worst_eq, c_eq = float(d), {"g": repr(g), "h": repr(h)}
    out = [
        _result("foliation.beta_constancy", 0.0, 0.0, c_beta, beta_ok),
        _result("foliation.equivariance", worst_eq, 1e-6, c_eq),
    ]
    # isotropy jets at one point
    X = _random_point(rng, model, 0.2, 0.8)
    iso = char_leaf_trace(
        model, identity(X, model.body),
        CharParams(trace=replace(tp, n_steps=100), base_motion=False),
    )
    Fs = iso.matrices()
    drift = float(np.max(np.linalg.norm(Fs @ np.swapaxes(Fs, 1, 2) - np.eye(3), axis=(1, 2))))
    worst_iso = 0.0
    for _ in range(50):
        i, j = rng.integers(len(Fs), size=2)
        for M in (Fs[i] @ Fs[j], np.linalg.inv(Fs[i])):
            worst_iso = max(worst_iso, float(np.linalg.norm(M @ M.T - np.eye(3))))
    same_point = all(g.source == g.target == iso.target_point for g in iso.cloud)
    out.append(_result("foliation.orthogonality_drift", drift, vp.drift_bound, {"X": X.tolist()}))
    out.append(_result("foliation.isotropy_closure", worst_iso, 2 * vp.drift_bound, {"X": X.tolist()},
                       worst_iso <= 2 * vp.drift_bound and same_point))
    # long base flow: radial conservation and leaf/stratum consistency
    X = _random_point(rng, model, 0.3, 0.8)
    long = leaf_trace(model, X, replace(tp, mode="pointwise", n_steps=vp.conservation_steps))
    seed_dim = pointwise_kernel(model, X, vp.sampler, vp.tol, check_stability=False).base_dim
    out.append(_result("foliation.leaf_in_stratum", abs(long.est_dim - seed_dim), 0.0,
                       {"X": X.tolist(), "est_dim": long.est_dim, "base_dim": seed_dim}))
    if model.is_radial:
        c = np.asarray(model.body.center)
        r = np.linalg.norm(long.cloud - c, axis=1)
        t = r**2
        moving = np.abs(model.profile.derivative(t)) > 0
        dev = float(np.max(np.abs(r[moving] - r[0]))) if np.all(moving) else 0.0
        out.append(_result("foliation.radial_conservation", dev, 1e-3, {"X": X.tolist()}))
    return out


SECTIONS = (
    ("groupoid", check_groupoid_laws),
    ("response", check_response),
    ("material", check_material),
    ("distribution", check_distribution),
    ("foliation", check_foliation),
)


def run_suite(model: ResponseModel, vp: VerifyParams = VerifyParams(), extra=()) -> list[PropertyResult]:
    results = []
    for _, fn in SECTIONS:
        results.extend(fn(model, vp))
    for fn in extra:
        results.extend(fn())
    return results


def report(results: list[PropertyResult]) -> dict:
    first = next((r for r in results if not r.passed), None)
    return {
        "all_passed": first is None,
        "first_failure": None if first is None else first.to_dict(),
        "properties": [r.to_dict() for r in results],
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)
