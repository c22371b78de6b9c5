import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from projmeas import (
    ClassifierInconsistent,
    EmpiricalMeasure,
    MatrixEnsemble,
    Subspace,
    TimeoutNoReturn,
    backward_limit_measure,
    cesaro_measure,
    escape_mass_profile,
    measure_distance,
    resample_component,
    stationarity_residual,
)
from projmeas.gallery import build
from projmeas.stationary import (
    _escape_verdict,
    block_permutation_classifier,
    chart_values,
    orthogonal_classifier,
    project_quotient,
    pushforward,
    sign_det_classifier,
    support_diameter,
)

clouds = arrays(float, st.tuples(st.integers(1, 30), st.just(3)), elements=st.floats(-5, 5)).filter(
    lambda P: np.all(np.linalg.norm(P, axis=1) > 1e-3))


@settings(max_examples=50, deadline=None)
@given(clouds, st.integers(1, 20))
def test_measure_has_unit_mass(P, cap):
    w = np.arange(1, P.shape[0] + 1, dtype=float)
    nu = EmpiricalMeasure.create(P, w, cap=cap)
    assert abs(nu.mass - 1.0) < 1e-12
    assert nu.size == min(P.shape[0], cap)
    assert np.allclose(np.linalg.norm(nu.points, axis=1), 1.0)


@settings(max_examples=40, deadline=None)
@given(clouds, clouds, clouds)
def test_distance_triangle_and_symmetry(A, B, C):
    a, b, c = (EmpiricalMeasure.create(X) for X in (A, B, C))
    ab, bc, ac = measure_distance(a, b), measure_distance(b, c), measure_distance(a, c)
    assert abs(ab - measure_distance(b, a)) < 1e-12
    assert ac <= ab + bc + 1e-9
    assert measure_distance(a, a) < 1e-12


@settings(max_examples=25, deadline=None)
@given(clouds, clouds, st.integers(0, 2**31))
def test_distance_invariant_under_sign_flips(A, B, seed):
    # projective points: x and -x are the same atom
    flips = np.random.default_rng(seed).choice([-1.0, 1.0], size=(A.shape[0], 1))
    a, b = EmpiricalMeasure.create(A), EmpiricalMeasure.create(B)
    assert abs(measure_distance(EmpiricalMeasure.create(A * flips), b) - measure_distance(a, b)) < 1e-12


def test_span_estimate_of_line_and_plane():
    assert EmpiricalMeasure.dirac([1.0, 0.0]).span_estimate.same_as(Subspace.coordinate(2, [0]))
    P = np.random.default_rng(0).normal(size=(100, 3))
    P[:, 2] = 0
    assert EmpiricalMeasure.create(P).span_estimate.same_as(Subspace.coordinate(3, [0, 1]), tol=1e-10)


def test_capping_is_seeded():
    P = np.random.default_rng(1).normal(size=(500, 2))
    a = EmpiricalMeasure.create(P, cap=64, seed=2)
    b = EmpiricalMeasure.create(P, cap=64, seed=2)
    assert np.array_equal(a.points, b.points) and a.provenance["resampled_from"] == 500


def test_invalid_measures():
    with pytest.raises(ValueError):
        EmpiricalMeasure.create([[1.0, 0.0]], [0.0])
    with pytest.raises(ValueError):
        EmpiricalMeasure.create([[1.0, 0.0], [0.0, 1.0]], [1.0, -1.0])


def test_cesaro_argument_checks_and_provenance():
    E = build("proximal_sl2")
    with pytest.raises(ValueError):
        cesaro_measure(E, n=10, burn_in=20)
    nu = cesaro_measure(E, n=500, burn_in=100, thinning=2, seed=4)
    assert nu.size == 200 and nu.provenance["kind"] == "cesaro"
    assert np.array_equal(nu.points, cesaro_measure(E, n=500, burn_in=100, thinning=2, seed=4).points)


def test_dirac_fixed_point_is_stationary():
    E = build("fkh_example", "float")
    assert stationarity_residual(E, EmpiricalMeasure.dirac([1.0, 0.0])) < 1e-12
    assert stationarity_residual(E, EmpiricalMeasure.dirac([1.0, 1.0])) > 0.01


def test_pushforward_mass_and_atoms():
    E = build("triangular_pm", "float")
    nu = EmpiricalMeasure.create([[1.0, 0.0], [0.0, 1.0]])
    mu_nu = pushforward(E, nu)
    assert mu_nu.size == 4 and abs(mu_nu.mass - 1) < 1e-12


def test_rotation_invariant_measure():
    # uniform measure on P^1 is invariant under rotations
    th = np.linspace(0, np.pi, 4096, endpoint=False)
    nu = EmpiricalMeasure.create(np.stack([np.cos(th), np.sin(th)], axis=1))
    assert stationarity_residual(build("rotation", "float"), nu) < 2e-3


def test_backward_limit_collapses_for_proximal():
    d = support_diameter(backward_limit_measure(build("proximal_sl2"), 200, seed=5))
    assert d <= 1e-8
    assert support_diameter(backward_limit_measure(build("rotation", "float"), 200, seed=5)) > 1.0


def test_chart_values_require_plane():
    nu = EmpiricalMeasure.create([[1.0, 2.0], [3.0, -1.0]])
    assert np.allclose(sorted(chart_values(nu)), [-3.0, 0.5])
    with pytest.raises(ValueError):
        chart_values(EmpiricalMeasure.create([[1.0, 0.0, 0.0]]))


def test_project_quotient_drops_mass_on_w():
    W = Subspace.coordinate(2, [0])
    nu = EmpiricalMeasure.create([[1.0, 0.0], [1.0, 1.0]])
    q = project_quotient(nu, W)
    assert q.size == 1 and q.dim == 1
    with pytest.raises(ValueError):
        project_quotient(EmpiricalMeasure.dirac([1.0, 0.0]), W)


def test_escape_verdict_rules():
    assert _escape_verdict([0.2, 0.5, 0.8, 0.95]) == "ESCAPING"
    assert _escape_verdict([0.3, 0.1, 0.1, 0.1]) == "TIGHT"
    assert _escape_verdict([0.3, 0.5, 0.7, 0.85]) == "UNDECIDED"
    assert _escape_verdict([0.3, 0.6, 0.4, 0.4]) == "UNDECIDED"


def test_escape_profiles():
    e1 = Subspace.coordinate(2, [0])
    prof = escape_mass_profile(build("affine_expanding"), e1, schedule=(100, 1000, 10_000))
    assert prof.verdict == "ESCAPING"
    assert prof.mass_at(10_000) > 0.9
    prof = escape_mass_profile(build("affine_contracting"), e1, schedule=(100, 1000, 10_000))
    assert prof.verdict == "TIGHT"
    with pytest.raises(ValueError):
        escape_mass_profile(build("affine_contracting"), e1, x0=[1.0, 0.0])
    with pytest.raises(KeyError):
        prof.mass_at(7)


def test_escape_chains_average():
    e1 = Subspace.coordinate(2, [0])
    E = build("unipotent")
    one = escape_mass_profile(E, e1, delta=0.1, schedule=(100, 1000), n_chains=1, seed=3)
    many = escape_mass_profile(E, e1, delta=0.1, schedule=(100, 1000), n_chains=4, seed=3)
    assert many.n_chains == 4 and one.masses != many.masses


def test_resample_sign_det_small():
    s = resample_component(build("signed_det"), sign_det_classifier, n_samples=4000, seed=1)
    assert abs(s.mean_tau - 2) <= 4 * s.tau_stderr
    assert np.all(np.linalg.det(s.products) > 0)


def test_resample_orthogonal_classifier():
    E = build("o2", "float")
    s = resample_component(E, sign_det_classifier, n_samples=500)
    assert np.all(np.linalg.det(s.products) > 0)
    assert orthogonal_classifier(E.atoms[0]) == "orthogonal"


def test_block_permutation_classifier():
    swap = np.block([[np.zeros((2, 2)), np.eye(2)], [2 * np.eye(2), np.zeros((2, 2))]])
    stay = np.diag([1.0, 2.0, 3.0, 4.0])
    cls = block_permutation_classifier([2, 2])
    assert cls(swap) == (1, 0) and cls(stay) == (0, 1)
    s = resample_component(MatrixEnsemble.create([swap, stay]), cls, n_samples=2000, seed=2)
    assert abs(s.mean_tau - 2) <= 4 * s.tau_stderr


def test_inconsistent_classifier_detected():
    # "g00 > 1" is not determined by the labels of the factors: 2 * 1/2 vs 4 * 1/2
    E = build("commuting_diag", "float")
    with pytest.raises(ClassifierInconsistent):
        resample_component(E, lambda g: "a" if g[0, 0] > 1 else "b", n_samples=10)


def test_timeout_when_identity_label_unreachable():
    E = MatrixEnsemble.create([np.diag([-1.0, 1.0]), np.diag([-2.0, 1.0])])
    # both atoms flip the sign; a positive product needs an even count, always reached at step 2
    s = resample_component(E, sign_det_classifier, n_samples=50)
    assert np.all(s.taus == 2)
    F = MatrixEnsemble.create([np.diag([2.0, 1.0])])
    with pytest.raises(TimeoutNoReturn):
        resample_component(F, lambda g: "big" if g[0, 0] > 1.5 else "small", n_samples=1, max_tau=50,
                           check_pairs=0)
