"""Pin the independent oracles to hand-derived closed forms before use."""

import math

import sympy as sp

import oracles


def test_single_atom_exponents_diag():
    assert oracles.single_atom_exponents([[2, 0], [0, sp.Rational(1, 2)]]) == [math.log(2), -math.log(2)]


def test_single_atom_exponents_jordan_block_ignores_offdiagonal():
    vals = oracles.single_atom_exponents([[sp.Rational(1, 2), 1], [0, 2]])
    assert vals == [math.log(2), -math.log(2)]


def test_single_atom_exponents_rotation_is_zero():
    vals = oracles.single_atom_exponents([[sp.Rational(3, 5), -sp.Rational(4, 5)], [sp.Rational(4, 5), sp.Rational(3, 5)]])
    assert max(abs(v) for v in vals) < 1e-15


def test_affine_variance_contracting_half():
    assert oracles.affine_chart_variance("1/2", [1, -1], ["1/2", "1/2"]) == sp.Rational(4, 3)


def test_affine_variance_general_formula():
    # Var = Var(s) / (1 - a^2) for a centered or uncentered shift law
    v = oracles.affine_chart_variance("1/3", [0, 3], ["1/3", "2/3"])
    var_s = sp.Rational(2, 3) * 9 - (sp.Rational(2, 3) * 3) ** 2
    assert v == var_s / (1 - sp.Rational(1, 9))


def test_sign_return_mean_closed_form():
    assert oracles.sign_return_mean("1/2") == 2
    p = sp.Rational(1, 3)
    assert oracles.sign_return_mean(p) == (1 - p) + p * (1 + 1 / p)


def test_sign_return_mean_brute_force_agrees():
    partial = oracles.enumerate_sign_return_mean(16)
    assert 0 < 2 - partial < sp.Rational(1, 500)


def test_sylvester_oracle_feasible_and_infeasible():
    # distinct diagonal entries: a complement exists
    X = oracles.sylvester_complement([[[2, 1], [0, 1]]], 1)
    assert X is not None
    assert X[0, 0] == -1
    assert oracles.is_invariant([[[2, 1], [0, 1]]], [[X[0, 0]], [1]])
    assert not oracles.is_invariant([[[2, 1], [0, 1]]], [[1], [1]])
    # a unipotent block has no invariant complement
    assert oracles.sylvester_complement([[[1, 1], [0, 1]]], 1) is None
