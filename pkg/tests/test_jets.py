import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matleaf.errors import DomainError, NotComposableError, SingularJetError
from matleaf.jets import (
    UNIT_BALL,
    BodyDomain,
    Jet1,
    LeftInvariantDirection,
    anchor,
    compose,
    identity,
    invert,
    left_translate,
)

coord = st.floats(-0.55, 0.55, allow_nan=False)
points = st.tuples(coord, coord, coord)
entries = st.lists(st.floats(-2, 2, allow_nan=False), min_size=9, max_size=9)


def _matrix(vals):
    F = np.array(vals).reshape(3, 3)
    # keep away from singular matrices
    return F + 3.0 * np.eye(3)


@st.composite
def composable_triple(draw):
    a, b, c, d = (draw(points) for _ in range(4))
    return (
        Jet1(c, d, _matrix(draw(entries))),
        Jet1(b, c, _matrix(draw(entries))),
        Jet1(a, b, _matrix(draw(entries))),
    )


@settings(max_examples=200, deadline=None)
@given(composable_triple())
def test_associativity(triple):
    g, h, k = triple
    left, right = compose(g, compose(h, k)), compose(compose(g, h), k)
    assert (left.source, left.target) == (right.source, right.target)
    assert np.max(np.abs(left.F - right.F)) <= 1e-12 * max(1.0, np.max(np.abs(left.F)))


@settings(max_examples=200, deadline=None)
@given(composable_triple())
def test_source_target_laws(triple):
    g, h, _ = triple
    gh = compose(g, h)
    assert gh.source == h.source
    assert gh.target == g.target
    assert anchor(gh) == (h.source, g.target)


@settings(max_examples=200, deadline=None)
@given(composable_triple())
def test_identity_and_inverse(triple):
    g = triple[0]
    assert compose(identity(g.target), g).isclose(g, 1e-12)
    assert compose(g, identity(g.source)).isclose(g, 1e-12)
    gi = invert(g)
    assert (gi.source, gi.target) == (g.target, g.source)
    assert compose(g, gi).isclose(identity(g.target), 1e-12)
    assert compose(gi, g).isclose(identity(g.source), 1e-12)


@settings(max_examples=100, deadline=None)
@given(composable_triple())
def test_left_translation_is_bijective(triple):
    g, h, _ = triple
    back = left_translate(invert(g), left_translate(g, h))
    assert back.isclose(h, 1e-12)


def test_composition_uses_chain_rule_order():
    A = np.diag([2.0, 1.0, 1.0])
    B = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    g = Jet1((0.1, 0, 0), (0.2, 0, 0), A)
    h = Jet1((0, 0, 0), (0.1, 0, 0), B)
    assert np.array_equal(compose(g, h).F, A @ B)


def test_not_composable_is_exact():
    g = Jet1((0.1, 0, 0), (0.2, 0, 0), np.eye(3))
    h = Jet1((0, 0, 0), (0.1 + 1e-15, 0, 0), np.eye(3))
    with pytest.raises(NotComposableError):
        compose(g, h)
    with pytest.raises(NotComposableError):
        left_translate(g, h)


def test_singular_and_non_finite_jets_rejected():
    with pytest.raises(SingularJetError):
        Jet1((0, 0, 0), (0, 0, 0), np.zeros((3, 3)))
    with pytest.raises(SingularJetError):
        Jet1((0, 0, 0), (0, 0, 0), np.full((3, 3), np.nan))


def test_jet_matrix_is_read_only():
    F = np.eye(3)
    g = Jet1((0, 0, 0), (0, 0, 0), F)
    F[0, 0] = 5.0
    assert g.F[0, 0] == 1.0
    with pytest.raises(ValueError):
        g.F[0, 0] = 2.0


def test_identity_requires_body_point():
    with pytest.raises(DomainError):
        identity((1.0, 0.0, 0.0))
    small = BodyDomain((1.0, 0.0, 0.0), 0.5)
    assert identity((1.2, 0, 0), small).source == (1.2, 0.0, 0.0)


def test_body_domain_geometry():
    assert UNIT_BALL.contains((0.5, 0.5, 0.5))
    assert not UNIT_BALL.contains((0.6, 0.6, 0.6))
    assert UNIT_BALL.distance_to_boundary((0.5, 0, 0)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        BodyDomain((0, 0, 0), 0.0)


def test_direction_vector_roundtrip():
    w = np.arange(12.0)
    d = LeftInvariantDirection.from_vector(w)
    assert np.array_equal(d.as_vector(), w)
    assert np.array_equal(d.lam, w[3:].reshape(3, 3))
    assert not np.any(LeftInvariantDirection.zero().as_vector())
