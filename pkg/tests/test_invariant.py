from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from projmeas import (
    MatrixEnsemble,
    NoComplement,
    NotInvariant,
    Subspace,
    algebra_closure,
    complete_reducibility_certificate,
    fkh_filtration,
    invariant_subspace_lattice,
    solve_complement,
)
from projmeas.gallery import build
from projmeas.invariant import spin


@pytest.mark.parametrize("name,dim", [("unipotent", 2), ("diag", 2), ("proximal_sl2", 4), ("identity", 1),
                                      ("torus", 4), ("o2", 4)])
def test_algebra_dimension(name, dim):
    assert algebra_closure(build(name)).dimension == dim


def test_spin_exact():
    E = build("fkh_example")
    S = spin(E.generators(), np.array([[Fraction(1)], [Fraction(0)]], dtype=object), True)
    assert Subspace.span(S).dim == 1
    S = spin(E.generators(), np.array([[Fraction(1)], [Fraction(1)]], dtype=object), True)
    assert Subspace.span(S).dim == 2


@pytest.mark.parametrize("mode", ["rational", "float"])
def test_torus_lattice(mode):
    lat = invariant_subspace_lattice(build("torus", mode))
    dims = sorted(U.dim for U in lat.subspaces)
    assert dims == [0, 2, 2, 4] and lat.complete
    planes = [U for U in lat.subspaces if U.dim == 2]
    assert any(U.same_as(Subspace.coordinate(4, [0, 1])) for U in planes)
    assert any(U.same_as(Subspace.coordinate(4, [2, 3])) for U in planes)
    assert lat.factor_dims == [2, 2]


def test_identity_lattice_is_infinite():
    lat = invariant_subspace_lattice(build("identity"))
    assert not lat.complete
    assert all(U.dim in (0, 1, 2) for U in lat.subspaces)


def test_rotation_is_irreducible():
    lat = invariant_subspace_lattice(build("rotation"))
    assert [U.dim for U in lat.subspaces] == [0, 2] and lat.complete


@pytest.mark.parametrize("seed", range(4))
def test_jordan_holder_factors_independent_of_seed(seed):
    E = build("torus")
    assert sorted(invariant_subspace_lattice(E, seed=seed).factor_dims) == [2, 2]
    F = MatrixEnsemble.create([[[1, 1, 0], [0, 2, 1], [0, 0, 3]], [[2, 0, 1], [0, 1, 0], [0, 0, 1]]])
    assert sorted(invariant_subspace_lattice(F, seed=seed).factor_dims) == [1, 1, 1]


def test_every_lattice_member_is_invariant():
    for name in ("torus", "triangular", "commuting_diag", "affine_contracting", "fkh_example"):
        E = build(name)
        for U in invariant_subspace_lattice(E).subspaces:
            if 0 < U.dim < E.dim:
                cols = [[x for x in row] for row in U.exact]
                assert oracles.is_invariant([a.tolist() for a in E.exact_atoms], cols), (name, U)


def test_complement_exact_and_float_agree():
    for mode in ("rational", "float"):
        E = build("triangular", mode)
        wit = solve_complement(E, Subspace.coordinate(2, [0]))
        assert wit.residual <= 1e-12
        assert wit.complement.same_as(Subspace.span(np.array([[-2.0], [3.0]])), tol=1e-8)


def test_complement_infeasible():
    for mode in ("rational", "float"):
        with pytest.raises(NoComplement):
            solve_complement(build("unipotent", mode), Subspace.coordinate(2, [0]))


def test_complement_requires_invariance():
    with pytest.raises(NotInvariant):
        solve_complement(build("fkh_example"), Subspace.coordinate(2, [1]))


rational = st.fractions(min_value=-3, max_value=3, max_denominator=4)
nonzero = st.sampled_from([Fraction(v) for v in ("1", "2", "-1", "1/2", "3")])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(rational, rational, rational, nonzero, nonzero, nonzero), min_size=1, max_size=2))
def test_complement_residual_is_zero_when_feasible(entries):
    atoms = [[[p, a, b], [0, q, c], [0, 0, r]] for a, b, c, p, q, r in entries]
    E = MatrixEnsemble.create(atoms, mode="rational")
    W = Subspace.coordinate(3, [0])
    try:
        wit = solve_complement(E, W)
    except NoComplement:
        assert oracles.sylvester_complement(atoms, 1) is None
        return
    assert wit.residual == 0
    cols = [[v for v in row] for row in wit.complement.exact]
    assert oracles.is_invariant(atoms, cols)
    assert W.plus(wit.complement).dim == 3


@pytest.mark.parametrize("name,verdict", [("torus", "PASS"), ("unipotent", "FAIL"), ("diag", "PASS"),
                                          ("triangular_pm", "FAIL"), ("rotation", "PASS"), ("o2", "PASS")])
def test_reducibility_verdicts(name, verdict):
    cert = complete_reducibility_certificate(build(name))
    assert cert.verdict == verdict
    if verdict == "PASS":
        assert sum(U.dim for U in cert.decomposition) == build(name).dim
    else:
        assert cert.failures


def test_reducibility_float_mode_agrees():
    assert complete_reducibility_certificate(build("torus", "float")).verdict == "PASS"
    assert complete_reducibility_certificate(build("unipotent", "float")).verdict == "FAIL"


def test_filtration_fkh_example():
    f = fkh_filtration(build("fkh_example"))
    assert f.dims == [2, 1] and not f.critical
    assert f.spaces[1].same_as(Subspace.coordinate(2, [0]))
    d = f.to_dict()
    assert d["dims"] == [2, 1] and "tie_rule" in d


def test_filtration_critical_examples():
    for name in ("torus", "unipotent", "triangular_pm", "rotation"):
        assert fkh_filtration(build(name), n_steps=20_000).critical, name
