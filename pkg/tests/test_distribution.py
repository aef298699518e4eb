import warnings

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from conftest import random_invertible, seeded_points
from matleaf.distribution import (
    DistributionParams,
    GermAnsatz,
    block_kernel,
    constraint_matrix,
    fiber,
    germ_fiber,
    germ_solve,
    isotropy_algebra,
    pointwise_kernel,
    rank_map,
)
from matleaf.errors import AnsatzTooSmall, RankUnstable
from matleaf.grid import GridSpec
from matleaf.material import FSampler


def _is_skew(lam, atol=1e-10):
    L = np.asarray(lam).reshape(3, 3)
    return np.max(np.abs(L + L.T)) <= atol


def test_monotone_pointwise_structure(models):
    X = np.array([0.5, 0.2, -0.1])
    f = pointwise_kernel(models["monotone"], X)
    assert (f.full_dim, f.base_dim) == (5, 2)
    assert np.max(np.abs(f.base.basis @ X)) < 1e-12
    for w in f.full.basis:
        assert abs(w[:3] @ X) < 1e-12
        assert _is_skew(w[3:])


def test_constant_profile_full_rank(models):
    f = pointwise_kernel(models["constant"], (0.1, 0.7, 0.2))
    assert (f.full_dim, f.base_dim) == (6, 3)


def test_isotropy_is_rotation_algebra(models):
    iso = isotropy_algebra(models["monotone"], (0.5, 0, 0))
    assert iso.dim == 3
    for lam in iso.basis:
        assert _is_skew(lam)


def test_left_invariance_coherence(models):
    rng = np.random.default_rng(4)
    Fs = FSampler().samples
    for m in models.values():
        for X in seeded_points(3, 10, 0.05, 0.95):
            F0 = random_invertible(rng)
            k1 = block_kernel(constraint_matrix(m, X, Fs), 1e-8)[0]
            k2 = block_kernel(constraint_matrix(m, X, F0 @ Fs), 1e-8)[0]
            assert k1.shape == k2.shape
            assert np.max(subspace_angles(k1, k2)) <= 1e-8


def test_base_projection_consistency(models):
    for m in models.values():
        for X in seeded_points(5, 10, 0.05, 0.95):
            f = pointwise_kernel(m, X)
            V = f.full.basis[:, :3].T
            assert np.linalg.norm(V - f.base.projector() @ V) <= 1e-10
            assert np.linalg.matrix_rank(V, tol=1e-8) == f.base_dim


def test_block_threshold_ignores_block_scaling():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((54, 12))
    # base block of rank one, outside the range of the jet block
    A[:, :3] = np.outer(rng.standard_normal(54), [1.0, 0.0, 0.0])
    for scale in (1.0, 1e-12, 1e-25):
        B = A.copy()
        B[:, :3] *= scale
        full, base, _, _ = block_kernel(B, 1e-8)
        assert base.shape[1] == 2


def test_germ_within_pointwise(models):
    for m in models.values():
        for X in seeded_points(6, 10, 0.05, 0.95):
            g = germ_fiber(m, X)
            p = pointwise_kernel(m, X)
            assert g.full_dim <= p.full_dim
            assert (g.full_dim, g.base_dim) == (p.full_dim, p.base_dim)


def test_germ_detects_degenerate_centre(models):
    # every direction is admissible at the centre, but no field extends it
    assert pointwise_kernel(models["monotone"], (0, 0, 0)).base_dim == 3
    g = germ_fiber(models["monotone"], (0, 0, 0))
    assert (g.full_dim, g.base_dim) == (3, 0)


def test_germ_value_fields_are_orthonormal_at_centre(models):
    sol = germ_solve(models["monotone"], (0.4, 0.1, 0.0))
    V = sol.value_fields()[:3]
    assert np.allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-10)
    assert V.shape[1] == 2


def test_germ_fields_are_admissible_nearby(models):
    m = models["monotone"]
    sol = germ_solve(m, (0.4, 0.1, 0.0))
    for x in sol.sample_points[:5]:
        f = pointwise_kernel(m, x)
        for c in sol.fields.T:
            w = sol.evaluate(c, x)
            assert np.linalg.norm(w - f.full.project(w)) <= 1e-8 * (1 + np.linalg.norm(w))


def test_ansatz_warning_on_stratum_boundary(models):
    with pytest.warns(AnsatzTooSmall):
        germ_fiber(models["plateau"], (0.5, 0, 0), check_stability=False, check_ansatz=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        germ_fiber(models["plateau"], (0.2, 0, 0), check_ansatz=True)


def test_sampler_stability_detects_unresolved_derivative(models):
    # finite differences cannot decide the rank where the plateau profile
    # barely starts to grow
    fd = models["plateau"].without_analytic()
    with pytest.raises(RankUnstable):
        pointwise_kernel(fd, (0.546, 0, 0))


def test_sampler_doubling_keeps_dimensions(models):
    for m in models.values():
        for X in seeded_points(7, 10, 0.05, 0.95):
            a = pointwise_kernel(m, X, FSampler(6), check_stability=False)
            b = pointwise_kernel(m, X, FSampler(12), check_stability=False)
            assert (a.full_dim, a.base_dim) == (b.full_dim, b.base_dim)


def test_rank_map_monotone_single_stratum(models):
    rm = rank_map(models["monotone"], GridSpec(n=5), "pointwise")
    assert set(rm.base_dims) == {2}
    assert rm.strata == [{"base_dim": 2, "n_points": len(rm.points)}]
    assert rm.to_rows()[0][3:] == (5, 2)


def test_fiber_mode_validation(models):
    with pytest.raises(ValueError):
        fiber(models["constant"], (0, 0, 0), "global")
    assert fiber(models["constant"], (0.1, 0, 0), "pointwise", DistributionParams()).mode == "pointwise"


def test_ansatz_offsets():
    a = GermAnsatz()
    u = a.offsets()
    assert u.shape == (20, 3) and np.all(np.sum(u**2, axis=1) < 1)
    assert np.array_equal(u, GermAnsatz().offsets())
    with pytest.raises(ValueError):
        GermAnsatz(degree=3)
