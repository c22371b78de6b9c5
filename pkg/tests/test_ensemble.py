import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from projmeas import (
    EnsembleError,
    MatrixEnsemble,
    NotInvariant,
    ProjectivePoint,
    Subspace,
    act_projective,
    angular_distance,
    distance_to_subspace,
    dump_ensemble,
    load_ensemble,
    restrict_quotient,
    sample_word,
)
from projmeas.ensemble import WordSample, canonicalize
from projmeas.gallery import build
from projmeas.rng import split_key, stream

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def invertible(d):
    return arrays(float, (d, d), elements=finite).filter(
        lambda a: np.linalg.svd(a, compute_uv=False)[-1] > 1e-3 * max(1.0, np.linalg.norm(a, 2)))


def nonzero_vec(d):
    return arrays(float, (d,), elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_create_rejects_bad_weights():
    with pytest.raises(EnsembleError, match="sum"):
        MatrixEnsemble.create([np.eye(2), np.eye(2)], [0.5, 0.4])
    with pytest.raises(EnsembleError, match="nonnegative"):
        MatrixEnsemble.create([np.eye(2), np.eye(2)], [1.5, -0.5])
    with pytest.raises(EnsembleError, match="expected 2 weights"):
        MatrixEnsemble.create([np.eye(2), np.eye(2)], [1.0])


def test_create_rejects_singular_and_ragged():
    with pytest.raises(EnsembleError, match="singular"):
        MatrixEnsemble.create([[[1, 2], [2, 4]]], mode="rational")
    with pytest.raises(EnsembleError, match="singular"):
        MatrixEnsemble.create([np.array([[1.0, 2.0], [2.0, 4.0]])])
    with pytest.raises((EnsembleError, ValueError)):
        MatrixEnsemble.create([np.eye(2), np.eye(3)])
    with pytest.raises(EnsembleError):
        MatrixEnsemble.create([])


def test_rational_mode_keeps_exact_atoms():
    E = MatrixEnsemble.create([[["1/2", 1], [0, 2]]])
    assert E.mode == "rational" and E.is_exact
    assert E.exact_atoms[0][0, 0] == Fraction(1, 2)
    assert E.atoms[0][0, 0] == 0.5


def test_dump_load_roundtrip(tmp_path):
    for name in ("fkh_example", "proximal_sl2", "torus"):
        E = build(name)
        p = tmp_path / f"{name}.json"
        dump_ensemble(E, p)
        F = load_ensemble(p)
        assert F.mode == E.mode and np.array_equal(F.atoms, E.atoms) and np.array_equal(F.weights, E.weights)
        if E.is_exact:
            assert all(np.array_equal(a, b) for a, b in zip(E.exact_atoms, F.exact_atoms))


def test_load_rejects_wrong_shape(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"dim": 2, "atoms": [[[1, 0, 0], [0, 1, 0]]]}))
    with pytest.raises(EnsembleError, match="shape"):
        load_ensemble(p)


def test_canonicalize_sign_and_norm():
    v = canonicalize([-3.0, 4.0])
    assert np.allclose(v, [0.6, -0.8])
    with pytest.raises(ValueError):
        canonicalize([0.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(invertible(3), invertible(3), nonzero_vec(3))
def test_act_composition(g, h, x):
    lhs = act_projective(g, act_projective(h, x))
    rhs = act_projective(g @ h, x)
    assert angular_distance(lhs, rhs) <= 1e-6


@settings(max_examples=80, deadline=None)
@given(nonzero_vec(3), nonzero_vec(3), nonzero_vec(3))
def test_angular_distance_is_a_metric(x, y, z):
    dxy, dyz, dxz = angular_distance(x, y), angular_distance(y, z), angular_distance(x, z)
    assert 0 <= dxy <= math.pi / 2 + 1e-12
    assert abs(dxy - angular_distance(y, x)) <= 1e-12
    assert dxz <= dxy + dyz + 1e-9
    assert angular_distance(x, -2.5 * x) <= 1e-7


@settings(max_examples=40, deadline=None)
@given(nonzero_vec(3), st.integers(0, 2**31))
def test_orthogonal_maps_preserve_angles(x, seed):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    y = np.array([1.0, 0.3, -0.2])
    assert abs(angular_distance(Q @ x, Q @ y) - angular_distance(x, y)) <= 1e-7


def test_projective_point_equality_ignores_scale():
    assert ProjectivePoint.of([1, 2]) == ProjectivePoint.of([-2, -4])
    assert ProjectivePoint.of([1, 2]) != ProjectivePoint.of([2, 1])


def test_distance_to_subspace():
    W = Subspace.coordinate(3, [0, 1])
    assert distance_to_subspace([1, 1, 0], W) == 0
    assert abs(distance_to_subspace([0, 0, 1], W) - math.pi / 2) < 1e-15
    assert abs(distance_to_subspace([1, 0, 1], W) - math.pi / 4) < 1e-15


def test_subspace_operations_exact():
    A = Subspace.coordinate(3, [0, 1])
    B = Subspace.span(np.array([[Fraction(0)], [Fraction(1)], [Fraction(1)]], dtype=object))
    assert A.intersect(B).dim == 0
    assert A.plus(B).dim == 3
    C = Subspace.coordinate(3, [1, 2])
    assert A.intersect(C).same_as(Subspace.coordinate(3, [1]))
    assert A.complement().same_as(Subspace.coordinate(3, [2]))
    assert A.contains(Subspace.coordinate(3, [1])) and not A.contains(C)


def test_max_angle_is_accurate_for_tiny_angles():
    eps = 1e-10
    A = Subspace.span(np.array([[1.0], [0.0]]))
    B = Subspace.span(np.array([[1.0], [eps]]))
    assert abs(A.max_angle(B) - eps) < 1e-14
    assert not A.same_as(B, tol=1e-12)


def test_sample_word_is_seeded_and_ordered():
    E = build("unipotent")
    a, b = sample_word(E, 50, 3), sample_word(E, 50, 3)
    assert np.array_equal(a.indices, b.indices)
    assert not np.array_equal(a.indices, sample_word(E, 50, 4).indices)
    rev = a.reversed()
    assert rev.direction == "backward" and np.array_equal(rev.indices, a.indices[::-1])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=12))
def test_palindromic_words_agree_in_both_orders(half):
    E = build("triangular_pm", "float")
    idx = np.array(half + half[::-1], dtype=np.int64)
    Mf, lf = WordSample(idx, "forward").evaluate(E)
    Mb, lb = WordSample(idx, "backward").evaluate(E)
    assert np.allclose(Mf, Mb, atol=1e-12) and abs(lf - lb) < 1e-9


def test_word_evaluate_matches_direct_product():
    E = build("triangular_pm", "float")
    idx = np.array([0, 1, 1, 0, 1], dtype=np.int64)
    M, ls = WordSample(idx, "forward").evaluate(E)
    direct = np.eye(2)
    for i in idx:
        direct = E.atoms[i] @ direct
    assert np.allclose(np.exp(ls) * M, direct)
    M, ls = WordSample(idx, "backward").evaluate(E)
    direct = np.eye(2)
    for i in idx:
        direct = direct @ E.atoms[i]
    assert np.allclose(np.exp(ls) * M, direct)


def test_restrict_and_quotient_exact():
    E = build("fkh_example")
    W = Subspace.coordinate(2, [0])
    R = restrict_quotient(E, W, "restrict")
    Q = restrict_quotient(E, W, "quotient")
    assert R.is_exact and R.exact_atoms[0][0, 0] == Fraction(1, 2)
    assert Q.exact_atoms[0][0, 0] == 2


def test_restrict_rejects_non_invariant():
    E = build("fkh_example")
    with pytest.raises(NotInvariant):
        restrict_quotient(E, Subspace.coordinate(2, [1]), "restrict")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31))
def test_restrict_quotient_dims_and_determinants(k, seed):
    rng = np.random.default_rng(seed)
    d = 4
    atoms = []
    for _ in range(2):
        g = np.triu(rng.normal(size=(d, d)))
        g[np.diag_indices(d)] = rng.choice([-2.0, -1.0, 1.0, 2.0], size=d)
        atoms.append(g)
    E = MatrixEnsemble.create(atoms)
    W = Subspace.coordinate(d, list(range(k)))
    R, Q = restrict_quotient(E, W, "restrict"), restrict_quotient(E, W, "quotient")
    assert R.dim == k and Q.dim == d - k
    # block triangular: det g = det(g|W) det(g on V/W)
    assert np.allclose(np.linalg.det(E.atoms), np.linalg.det(R.atoms) * np.linalg.det(Q.atoms))


def test_conjugate_preserves_spectrum_of_atoms():
    E = build("proximal_sl2")
    Q = np.array([[2.0, 1.0], [1.0, 1.0]])
    F = E.conjugate(Q)
    for a, b in zip(E.atoms, F.atoms):
        assert np.allclose(sorted(np.linalg.eigvals(a).real), sorted(np.linalg.eigvals(b).real))


def test_streams_are_independent_of_creation_order():
    a1 = stream(5, "x", 1).random(3)
    stream(5, "y").random(10)
    a2 = stream(5, "x", 1).random(3)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, stream(5, "x", 2).random(3))
    assert split_key("x", 1) == split_key("x", 1)
