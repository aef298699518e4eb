import numpy as np
import pytest

from conftest import random_invertible
from matleaf.errors import AssignmentConflict, FiberCollapse, NotComposableError, StepOutsideBody
from matleaf.foliation import (
    CharParams,
    DecomposeParams,
    TraceParams,
    char_leaf_trace,
    decompose,
    estimate_dim,
    leaf_trace,
    left_translate_leaf,
)
from matleaf.grid import GridSpec
from matleaf.jets import Jet1, compose, identity

SHORT = TraceParams(n_steps=150)


def test_estimate_dim_synthetic_clouds():
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 1, 400)
    line = np.stack([t, 2 * t, -t], axis=1)
    plane = np.stack([rng.uniform(0, 1, 400), rng.uniform(0, 1, 400), np.zeros(400)], axis=1)
    ball = rng.uniform(-1, 1, (400, 3))
    assert estimate_dim(line) == 1
    assert estimate_dim(plane) == 2
    assert estimate_dim(ball) == 3
    assert estimate_dim(np.zeros((5, 3))) == 0


def test_monotone_leaf_stays_on_sphere(models):
    leaf = leaf_trace(models["monotone"], (0.3, 0.4, 0.0), SHORT)
    r = np.linalg.norm(leaf.cloud, axis=1)
    assert leaf.est_dim == 2
    assert np.max(np.abs(r - 0.5)) <= 1e-6
    assert leaf.invariant_label == pytest.approx(0.5, abs=1e-6)
    assert tuple(leaf.cloud[0]) == leaf.seed


def test_leaf_trace_deterministic(models):
    a = leaf_trace(models["wiggle"], (0.6, 0, 0), TraceParams(n_steps=40, seed=3))
    b = leaf_trace(models["wiggle"], (0.6, 0, 0), TraceParams(n_steps=40, seed=3))
    c = leaf_trace(models["wiggle"], (0.6, 0, 0), TraceParams(n_steps=40, seed=4))
    assert np.array_equal(a.cloud, b.cloud)
    assert not np.array_equal(a.cloud, c.cloud)


def test_pointwise_mode_agrees_on_leaf_type(models):
    leaf = leaf_trace(models["monotone"], (0.0, 0.7, 0.0), TraceParams(mode="pointwise", n_steps=200))
    assert leaf.est_dim == 2
    assert np.max(np.abs(np.linalg.norm(leaf.cloud, axis=1) - 0.7)) <= 1e-6


def test_plateau_ball_leaf_stays_inside(models):
    leaf = leaf_trace(models["plateau"], (0.3, 0.0, 0.0), TraceParams(n_steps=300))
    assert leaf.est_dim == 3
    assert np.max(np.linalg.norm(leaf.cloud, axis=1)) < 0.5 + 1e-3


def test_fiber_collapse_gives_point_leaf(models):
    with pytest.warns(FiberCollapse):
        leaf = leaf_trace(models["monotone"], (0.0, 0.0, 0.0), SHORT)
    assert leaf.est_dim == 0
    assert leaf.cloud.shape == (1, 3)


def test_rejections_abort(models):
    # on the boundary sphere of the plateau no neighbour has the seed's rank
    with pytest.raises(StepOutsideBody):
        leaf_trace(models["plateau"], (0.5, 0, 0), TraceParams(n_steps=10, max_rejections=5))


def test_trace_params_validation():
    with pytest.raises(ValueError):
        TraceParams(mode="exact")
    with pytest.raises(ValueError):
        TraceParams(step=0.0)


def test_char_leaf_beta_constant_and_orthogonal(models):
    X = (0.5, 0.0, 0.0)
    leaf = char_leaf_trace(models["monotone"], identity(X), CharParams(TraceParams(n_steps=200)))
    assert len(leaf.cloud) == 201
    assert all(g.target == X for g in leaf.cloud)
    assert np.max(np.abs(np.linalg.norm(leaf.sources(), axis=1) - 0.5)) <= 1e-6
    F = leaf.matrices()
    assert np.max(np.linalg.norm(F @ np.swapaxes(F, 1, 2) - np.eye(3), axis=(1, 2))) <= 1e-4


def test_char_leaf_without_motion_is_seed(models):
    g0 = identity((0.2, 0.1, 0.0))
    leaf = char_leaf_trace(models["constant"], g0, CharParams(base_motion=False, jet_motion=False))
    assert leaf.cloud == [g0]


def test_isotropy_trace_closed_under_products(models):
    X = (0.4, 0.0, 0.3)
    leaf = char_leaf_trace(models["wiggle"], identity(X), CharParams(TraceParams(n_steps=80), base_motion=False))
    assert all(g.source == g.target == X for g in leaf.cloud)
    F = leaf.matrices()
    drift = np.max(np.linalg.norm(F @ np.swapaxes(F, 1, 2) - np.eye(3), axis=(1, 2)))
    rng = np.random.default_rng(0)
    for _ in range(30):
        i, j = rng.integers(len(F), size=2)
        for M in (F[i] @ F[j], np.linalg.inv(F[i])):
            assert np.linalg.norm(M @ M.T - np.eye(3)) <= 2 * max(drift, 1e-12) + 1e-12


def test_translation_by_identity_is_trivial(models):
    h = Jet1((0.3, 0.1, 0.0), (0.0, 0.2, 0.1), np.diag([1.5, 0.8, 1.0]))
    leaf = char_leaf_trace(models["monotone"], h, CharParams(TraceParams(n_steps=20)))
    moved = left_translate_leaf(identity(leaf.target_point), leaf)
    assert all(a.isclose(b, 0.0) for a, b in zip(moved.cloud, leaf.cloud))


def test_translation_equivariance_with_replay(models):
    rng = np.random.default_rng(11)
    h = Jet1((0.2, 0.4, 0.1), (0.1, 0.1, 0.1), random_invertible(rng))
    g = Jet1(h.target, (-0.3, 0.2, 0.0), random_invertible(rng))
    params = CharParams(TraceParams(n_steps=25, seed=2))
    lh = char_leaf_trace(models["plateau"], h, params)
    lgh = char_leaf_trace(models["plateau"], compose(g, h), params, controls=lh.controls)
    moved = left_translate_leaf(g, lh)
    assert moved.target_point == g.target == lgh.target_point
    for a, b in zip(moved.cloud, lgh.cloud):
        assert a.source == b.source
        assert np.max(np.abs(a.F - b.F)) <= 1e-6


def test_translation_anchor_mismatch(models):
    leaf = char_leaf_trace(models["constant"], identity((0.1, 0, 0)), CharParams(TraceParams(n_steps=3)))
    with pytest.raises(NotComposableError):
        left_translate_leaf(identity((0.2, 0, 0)), leaf)


def test_decompose_monotone_spheres(models):
    rep = decompose(models["monotone"], DecomposeParams(grid=GridSpec(n=5), trace=TraceParams(n_steps=80)))
    assert len(rep.assignment) == len(rep.points)
    labels = sorted(leaf.label for leaf in rep.leaves)
    radii = sorted({round(float(np.linalg.norm(p)), 6) for p in rep.points})
    assert np.allclose(labels, radii, atol=1e-6)
    for leaf in rep.leaves:
        assert (leaf.est_dim, leaf.isotropy_dim, leaf.groupoid_dim) == (2, 3, 7)
        assert leaf.groupoid_dim == 2 * leaf.est_dim + leaf.isotropy_dim
    assert not rep.uniform
    assert all(rep.smoothly_uniform_leaves)


def test_decompose_constant_single_leaf(models):
    rep = decompose(models["constant"], DecomposeParams(grid=GridSpec(n=5), trace=TraceParams(n_steps=80)))
    assert len(rep.leaves) == 1 and rep.leaves[0].est_dim == 3
    assert rep.uniform and rep.smoothly_uniform_leaves == [True]
    assert set(rep.assignment) == {0}


def test_decompose_reports_conflicts(models):
    params = DecomposeParams(trace=TraceParams(n_steps=20), leaf_tol=0.08)
    with pytest.warns(AssignmentConflict):
        rep = decompose(models["monotone"], params)
    assert any("matches leaves" in n for n in rep.notes)
    assert len(rep.assignment) == len(rep.points)


def test_decompose_report_serialises(models):
    rep = decompose(models["constant"], DecomposeParams(grid=GridSpec(n=4), trace=TraceParams(n_steps=10)))
    d = rep.to_dict()
    assert set(d) >= {"leaves", "uniform", "smoothly_uniform_leaves", "notes", "assignment"}
    assert all(len(r) == 4 for r in rep.cloud_rows())


def test_beta_fibre_sample_on_boundary_strata(models):
    rep = decompose(models["plateau"], DecomposeParams(trace=TraceParams(n_steps=40)))
    assert len({leaf.base_dim for leaf in rep.leaves}) == 2
    for leaf in rep.leaves:
        fib = leaf.beta_fibre
        assert fib is not None and fib["n_probes"] == len(rep.points)
        # the seed is always reachable from itself
        assert fib["n_members"] >= 1
    mono = decompose(models["monotone"], DecomposeParams(grid=GridSpec(n=4), trace=TraceParams(n_steps=20)))
    assert all(leaf.beta_fibre is None for leaf in mono.leaves)
