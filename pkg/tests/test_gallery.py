"""Gallery examples against their recorded truth table, in both arithmetic modes where possible."""

import pytest

from projmeas import (
    Subspace,
    complete_reducibility_certificate,
    critical_semisimplicity_check,
    decide_lift_existence,
    escape_mass_profile,
    find_stationary_measures,
    fkh_filtration,
    invariant_subspace_lattice,
)
from projmeas.gallery import GALLERY, TRUTH, build, names

CASES = [(name, mode) for name in sorted(TRUTH) for mode in ("rational", "float")]


def test_every_gallery_entry_builds():
    for name in names():
        E = build(name)
        assert E.dim >= 1 and abs(E.weights.sum() - 1) < 1e-12
    with pytest.raises(KeyError):
        build("nope")
    with pytest.raises(ValueError):
        build("proximal_sl2", "rational")
    assert set(TRUTH) <= set(GALLERY)


@pytest.mark.parametrize("name,mode", CASES)
def test_structure_truth(name, mode):
    truth, E = TRUTH[name], build(name, mode)
    lat = invariant_subspace_lattice(E)
    filt = fkh_filtration(E, n_steps=20_000, lattice=lat)
    assert filt.critical == truth["critical"]
    assert filt.dims == truth["filtration"]
    if "lines" in truth:
        assert sum(U.dim == 1 for U in lat.subspaces) == truth["lines"]
    if "semisimple" in truth:
        assert complete_reducibility_certificate(E, lattice=lat).verdict == truth["semisimple"]


def _w(name, key):
    d = build(name).dim
    return Subspace.coordinate(d, [0] if key.endswith("e1") else [0, 1])


@pytest.mark.parametrize("name,key", [(n, k) for n in sorted(TRUTH) for k in TRUTH[n] if k.startswith("escape_")])
def test_escape_truth(name, key):
    # null-recurrent escape is slow: average 10 chains out to 10^6 steps
    prof = escape_mass_profile(build(name), _w(name, key), delta=0.1, n_chains=10,
                               schedule=(100, 1000, 10_000, 100_000, 1_000_000))
    assert prof.verdict == TRUTH[name][key]


@pytest.mark.parametrize("name,key", [(n, k) for n in sorted(TRUTH) for k in TRUTH[n] if k.startswith("lift_")])
def test_lift_truth(name, key):
    assert decide_lift_existence(build(name), _w(name, key), corroborate=False).answer == TRUTH[name][key]


@pytest.mark.parametrize("name", [n for n in sorted(TRUTH) if "support" in TRUTH[n]])
def test_support_truth(name):
    E = build(name)
    found, _ = find_stationary_measures(E, n=5000)
    assert found
    assert critical_semisimplicity_check(E, [f.measure for f in found]).verdict == TRUTH[name]["support"]
