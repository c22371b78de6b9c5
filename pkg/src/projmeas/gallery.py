"""Named example ensembles with independently known answers.

``TRUTH`` records the verdicts each example must produce; the regression
tests and the shipped scenarios check against it.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .ensemble import MatrixEnsemble

__all__ = ["GALLERY", "TRUTH", "build", "names"]


def _q(x):
    return Fraction(x)


def _rot_q(c, s):
    return [[c, -s], [s, c]]


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _blockdiag(a, b):
    a, b = np.asarray(a, dtype=object), np.asarray(b, dtype=object)
    n, m = a.shape[0], b.shape[0]
    out = np.empty((n + m, n + m), dtype=object)
    out[...] = Fraction(0) if a.dtype == object and isinstance(a.flat[0], Fraction) else 0.0
    out[:n, :n] = a
    out[n:, n:] = b
    return out


def _proximal_atoms():
    D = np.diag([3.0, 1.0 / 3.0])
    R = _rot(1.0)
    return [D, R @ D @ R.T]


# (atoms, weights or None, mode)
GALLERY = {
    "diag": lambda: ([[[2, 0], [0, _q("1/2")]]], None, "rational"),
    "triangular": lambda: ([[[2, 1], [0, _q("1/2")]]], None, "rational"),
    "triangular_pm": lambda: ([[[2, 1], [0, _q("1/2")]], [[2, -1], [0, _q("1/2")]]], None, "rational"),
    "fkh_example": lambda: ([[[_q("1/2"), 1], [0, 2]]], None, "rational"),
    "unipotent": lambda: ([[[1, 1], [0, 1]], [[1, -1], [0, 1]]], None, "rational"),
    "affine_expanding": lambda: ([[[2, 1], [0, 1]], [[2, -1], [0, 1]]], None, "rational"),
    "affine_contracting": lambda: ([[[_q("1/2"), 1], [0, 1]], [[_q("1/2"), -1], [0, 1]]], None, "rational"),
    "torus": lambda: ([
        _blockdiag(_rot_q(_q("3/5"), _q("4/5")), _rot_q(_q("5/13"), _q("12/13"))),
        _blockdiag(_rot_q(_q("8/17"), _q("15/17")), _rot_q(_q("7/25"), _q("24/25"))),
    ], None, "rational"),
    "rotation": lambda: ([_rot_q(_q("3/5"), _q("4/5")), _rot_q(_q("5/13"), _q("12/13"))], None, "rational"),
    "proximal_sl2": lambda: (_proximal_atoms(), None, "float"),
    "sl2_dual": lambda: ([np.block([[g, np.zeros((2, 2))], [np.zeros((2, 2)), np.linalg.inv(g).T]])
                          for g in _proximal_atoms()], None, "float"),
    "rotation_double": lambda: ([np.block([[_rot(t), np.zeros((2, 2))], [np.zeros((2, 2)), _rot(2 * t)]])
                                 for t in (1.0, 2.3)], None, "float"),
    "signed_det": lambda: ([[[2, 0], [0, 1]], [[-1, 0], [0, 2]]], None, "rational"),
    "o2": lambda: ([_rot_q(_q("3/5"), _q("4/5")), [[1, 0], [0, -1]]], None, "rational"),
    "identity": lambda: ([[[1, 0], [0, 1]]], None, "rational"),
    "commuting_diag": lambda: ([[[2, 0], [0, _q("1/2")]], [[_q("1/2"), 0], [0, 2]]], None, "rational"),
}


def names():
    return sorted(GALLERY)


def build(name: str, mode: str | None = None) -> MatrixEnsemble:
    """Gallery ensemble ``name``; ``mode="float"`` drops the exact atoms."""
    if name not in GALLERY:
        raise KeyError(f"unknown gallery ensemble {name!r}; known: {', '.join(names())}")
    atoms, weights, native = GALLERY[name]()
    mode = mode or native
    if mode == "rational" and native == "float":
        raise ValueError(f"{name} has irrational entries; rational mode unavailable")
    if mode == "float":
        atoms = [np.asarray(a, dtype=object).astype(float) for a in atoms]
    return MatrixEnsemble.create(atoms, weights, mode, name)


# Verdicts implied by the classification results for each example.  Keys:
#   critical      -- filtration has a single step
#   filtration    -- dims of the filtration chain
#   lines         -- number of invariant lines
#   escape_e1     -- escape profile toward span(e1)
#   escape_first_plane -- escape profile toward the first coordinate plane
#   lift_e1 / lift_first_plane -- lift decision for that W (quotient measure on all of V/W)
#   semisimple    -- complete reducibility of V
#   support       -- verdict of the support-span check on the measures found
TRUTH = {
    "diag": {"critical": False, "filtration": [2, 1], "semisimple": "PASS"},
    "triangular": {"critical": False, "filtration": [2, 1], "lines": 2, "semisimple": "PASS"},
    "triangular_pm": {"critical": True, "filtration": [2], "lines": 1, "semisimple": "FAIL", "support": "PASS"},
    "fkh_example": {"critical": False, "filtration": [2, 1], "lines": 2},
    "unipotent": {"critical": True, "filtration": [2], "lines": 1, "semisimple": "FAIL", "escape_e1": "ESCAPING",
                  "support": "PASS"},
    "affine_expanding": {"critical": True, "filtration": [2], "lines": 1, "escape_e1": "ESCAPING",
                         "lift_e1": "NOT_EXISTS"},
    "affine_contracting": {"critical": False, "filtration": [2, 1], "lines": 1, "escape_e1": "TIGHT",
                           "lift_e1": "EXISTS"},
    "torus": {"critical": True, "filtration": [4], "semisimple": "PASS", "escape_first_plane": "TIGHT",
              "lift_first_plane": "EXISTS", "support": "PASS"},
    "rotation": {"critical": True, "filtration": [2], "lines": 0, "semisimple": "PASS"},
    "commuting_diag": {"critical": True, "filtration": [2], "lines": 2, "semisimple": "PASS"},
}
