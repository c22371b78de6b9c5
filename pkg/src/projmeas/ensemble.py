"""Matrix ensembles, projective points, subspaces and words.

A :class:`MatrixEnsemble` is a finitely supported probability measure on
invertible ``d x d`` real matrices.  Points of the projective space are unit
vectors with a canonical sign (first coordinate above 1e-12 in modulus is
positive), so a point and its negation compare and hash alike.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import linalg
from .errors import EnsembleError, NotInvariant
from .rng import stream

FORMAT_TAG = "projmeas-ensemble/1"
SIGN_TOL = 1e-12
INVARIANCE_TOL = 1e-8

__all__ = [
    "FORMAT_TAG",
    "MatrixEnsemble",
    "ProjectivePoint",
    "Subspace",
    "WordSample",
    "canonicalize",
    "sample_word",
    "act_projective",
    "restrict_quotient",
    "invariance_residual",
    "angular_distance",
    "distance_to_subspace",
    "load_ensemble",
    "dump_ensemble",
    "ensemble_from_dict",
    "ensemble_to_dict",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def canonicalize(v) -> np.ndarray:
    """Unit vector with first significant coordinate positive.

    Works row-wise on a 2-D array of vectors.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return canonicalize(v[None, :])[0]
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero vector has no projective class")
    u = v / norms[:, None]
    first = np.argmax(np.abs(u) > SIGN_TOL, axis=1)
    signs = np.sign(u[np.arange(len(u)), first])
    signs[signs == 0] = 1.0
    return u * signs[:, None]


@dataclass(frozen=True, eq=False)
class MatrixEnsemble:
    """Finitely supported probability measure on GL(d, R).

    Use :meth:`create` rather than the raw constructor; it validates and
    converts inputs.  ``exact_atoms`` is populated in ``"rational"`` mode and
    holds ``Fraction`` object arrays; ``atoms`` always holds float64 copies.
    """

    atoms: np.ndarray
    weights: np.ndarray
    mode: str = "float"
    exact_atoms: tuple | None = None
    name: str = ""

    @classmethod
    def create(cls, atoms, weights=None, mode=None, name=""):
        atoms = list(atoms)
        if not atoms:
            raise EnsembleError("ensemble needs at least one atom")
        has_exact = any(
            isinstance(x, (Fraction, str))
            for a in atoms
            for x in np.asarray(a, dtype=object).ravel()
        )
        if mode is None:
            mode = "rational" if has_exact else "float"
        if mode not in ("float", "rational"):
            raise EnsembleError(f"unknown arithmetic mode {mode!r}")
        if mode == "rational":
            exact = tuple(_readonly(linalg.as_exact(a)) for a in atoms)
            flt = np.stack([linalg.as_float(a) for a in exact])
        else:
            exact = None
            flt = np.stack([linalg.as_float(linalg.as_exact(a)) if _has_str(a) else np.asarray(a, dtype=float)
                            for a in atoms])
        if flt.ndim != 3 or flt.shape[1] != flt.shape[2] or flt.shape[1] < 1:
            raise EnsembleError(f"atoms must be square matrices of one size, got shape {flt.shape}")
        m, d, _ = flt.shape
        if weights is None:
            w = np.full(m, 1.0 / m)
        else:
            w = np.array([float(Fraction(x)) if isinstance(x, str) else float(x) for x in weights])
        if w.shape != (m,):
            raise EnsembleError(f"expected {m} weights, got {w.size}")
        if np.any(w < 0):
            raise EnsembleError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise EnsembleError(f"weights sum to {w.sum():.12g}, not 1")
        if not np.all(np.isfinite(flt)):
            raise EnsembleError("atoms contain non-finite entries")
        for i in range(m):
            if exact is not None:
                if linalg.rank(exact[i]) < d:
                    raise EnsembleError(f"atom {i} is singular")
            else:
                s = np.linalg.svd(flt[i], compute_uv=False)
                if s[-1] <= linalg.RANK_EPS * s[0]:
                    raise EnsembleError(f"atom {i} is numerically singular (cond {s[0] / max(s[-1], 1e-300):.3e})")
        return cls(_readonly(flt), _readonly(w), mode, exact, name)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def is_exact(self) -> bool:
        return self.exact_atoms is not None

    def generators(self):
        """Atoms in the working arithmetic (exact arrays in rational mode)."""
        return list(self.exact_atoms) if self.is_exact else [a for a in self.atoms]

    def conjugate(self, Q: np.ndarray) -> "MatrixEnsemble":
        """Ensemble of ``Q g Q^{-1}`` (float)."""
        Qi = np.linalg.inv(Q)
        return MatrixEnsemble.create([Q @ a @ Qi for a in self.atoms], self.weights, "float", self.name)

    def mean_log_abs_det(self) -> float:
        return float(np.sum(self.weights * np.log(np.abs(np.linalg.det(self.atoms)))))

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"<MatrixEnsemble{tag} d={self.dim} atoms={self.size} mode={self.mode}>"


def _has_str(a) -> bool:
    return any(isinstance(x, (str, Fraction)) for x in np.asarray(a, dtype=object).ravel())


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """Point of P(R^d), stored as a canonical unit representative."""

    rep: np.ndarray

    @classmethod
    def of(cls, v) -> "ProjectivePoint":
        return cls(_readonly(canonicalize(v)))

    @property
    def dim(self) -> int:
        return self.rep.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ProjectivePoint):
            return NotImplemented
        return self.dim == other.dim and abs(abs(float(self.rep @ other.rep)) - 1.0) <= 1e-12

    def __hash__(self):
        return hash(tuple(np.round(self.rep, 9)))

    def __repr__(self):
        return f"ProjectivePoint({np.array2string(self.rep, precision=6)})"


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of R^d with an orthonormal float basis.

    ``exact`` optionally holds a canonical rational basis (columns) when the
    subspace was computed in rational arithmetic; ``basis`` is then its
    orthonormalization.
    """

    basis: np.ndarray
    label: str = ""
    exact: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def span(cls, vectors, label="", eps=linalg.RANK_EPS, dim=None) -> "Subspace":
        """Span of the columns of ``vectors`` (a ``d x k`` array).

        Object arrays of ``Fraction`` (or ``"p/q"`` strings) are spanned
        exactly.
        """
        V = np.asarray(vectors, dtype=object) if _has_str(vectors) else np.asarray(vectors)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        if V.size == 0:
            if dim is None:
                dim = V.shape[0]
            return cls.zero(dim, label)
        if V.dtype == object:
            E = linalg.column_basis(linalg.as_exact(V))
            Q = linalg.column_basis(linalg.as_float(E)) if E.shape[1] else np.zeros((V.shape[0], 0))
            return cls(_readonly(_fix_signs(Q)), label, _readonly(E))
        Q = linalg.column_basis(np.asarray(V, dtype=float), eps)
        return cls(_readonly(_fix_signs(Q)), label)

    @classmethod
    def zero(cls, d, label="0") -> "Subspace":
        return cls(_readonly(np.zeros((d, 0))), label, _readonly(np.empty((d, 0), dtype=object)))

    @classmethod
    def full(cls, d, label="V") -> "Subspace":
        return cls.span(linalg.as_exact(np.eye(d, dtype=int)), label)

    @classmethod
    def coordinate(cls, d, indices, label="") -> "Subspace":
        E = np.zeros((d, len(indices)), dtype=int)
        for j, i in enumerate(indices):
            E[i, j] = 1
        return cls.span(linalg.as_exact(E), label)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def with_label(self, label) -> "Subspace":
        return Subspace(self.basis, label, self.exact)

    def residual(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(v - self.basis @ (self.basis.T @ v)))

    def contains_vector(self, v, tol=1e-8) -> bool:
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        return n == 0 or self.residual(v) <= tol * n

    def contains(self, other: "Subspace", tol=1e-8) -> bool:
        if other.dim == 0:
            return True
        if other.dim > self.dim:
            return False
        if self.exact is not None and other.exact is not None:
            return linalg.rank(np.concatenate([self.exact, other.exact], axis=1)) == self.dim
        R = other.basis - self.basis @ (self.basis.T @ other.basis)
        return float(np.linalg.norm(R, 2)) <= tol

    def max_angle(self, other: "Subspace") -> float:
        """Largest principal angle; ``pi/2`` when dimensions differ."""
        if self.dim != other.dim:
            return float(np.pi / 2)
        if self.dim == 0:
            return 0.0
        # sine of the largest principal angle, accurate near zero
        R = other.basis - self.basis @ (self.basis.T @ other.basis)
        return float(np.arcsin(min(1.0, np.linalg.norm(R, 2))))

    def same_as(self, other: "Subspace", tol=1e-8) -> bool:
        if self.dim != other.dim:
            return False
        if self.exact is not None and other.exact is not None:
            return bool(np.all(self.exact == other.exact))
        return self.max_angle(other) <= tol

    def plus(self, other: "Subspace", label="") -> "Subspace":
        if self.exact is not None and other.exact is not None:
            return Subspace.span(np.concatenate([self.exact, other.exact], axis=1), label, dim=self.ambient_dim)
        return Subspace.span(np.concatenate([self.basis, other.basis], axis=1), label, dim=self.ambient_dim)

    def intersect(self, other: "Subspace", label="") -> "Subspace":
        d = self.ambient_dim
        if self.dim == 0 or other.dim == 0:
            return Subspace.zero(d, label)
        if self.exact is not None and other.exact is not None:
            N = linalg.nullspace(np.concatenate([self.exact, -other.exact], axis=1))
            return Subspace.span(self.exact @ N[: self.dim], label, dim=d)
        N = linalg.nullspace(np.concatenate([self.basis, -other.basis], axis=1))
        return Subspace.span(self.basis @ N[: self.dim], label, dim=d)

    def complement(self, label="") -> "Subspace":
        """Orthogonal complement."""
        if self.exact is not None:
            return Subspace.span(linalg.nullspace(self.exact.T.copy()), label, dim=self.ambient_dim) \
                if self.dim else Subspace.full(self.ambient_dim, label)
        return Subspace(_readonly(linalg.orthonormal_complement(self.basis)), label)

    def fingerprint(self, decimals=7) -> bytes:
        """Basis-independent key (rounded projector)."""
        P = np.round(self.projector, decimals) + 0.0
        return bytes(f"{self.ambient_dim}:{self.dim}:", "ascii") + P.tobytes()

    def __repr__(self):
        tag = f" {self.label!r}" if self.label else ""
        return f"<Subspace{tag} dim={self.dim}/{self.ambient_dim}>"


def _fix_signs(Q: np.ndarray) -> np.ndarray:
    Q = np.array(Q, dtype=float)
    for j in range(Q.shape[1]):
        nz = np.flatnonzero(np.abs(Q[:, j]) > SIGN_TOL)
        if nz.size and Q[nz[0], j] < 0:
            Q[:, j] = -Q[:, j]
    return Q


@dataclass(frozen=True, eq=False)
class WordSample:
    """Sequence of atom indices together with its multiplication order.

    ``forward`` evaluates to ``b_n ... b_1`` (the random product ``L_n``);
    ``backward`` evaluates to ``b_1 ... b_n``.
    """

    indices: np.ndarray
    direction: str = "forward"

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"direction must be forward or backward, got {self.direction!r}")

    def __len__(self):
        return int(self.indices.shape[0])

    def reversed(self) -> "WordSample":
        other = "backward" if self.direction == "forward" else "forward"
        return WordSample(_readonly(self.indices[::-1].copy()), other)

    def evaluate(self, ensemble: MatrixEnsemble):
        """Return ``(M, log_scale)`` with product ``= exp(log_scale) * M``.

        ``M`` has unit spectral norm; the norm is factored out after each
        multiplication so long words do not overflow.
        """
        d = ensemble.dim
        if np.any(self.indices >= ensemble.size) or np.any(self.indices < 0):
            raise IndexError("word index outside atom range")
        M = np.eye(d)
        log_scale = 0.0
        for i in self.indices:
            a = ensemble.atoms[i]
            M = a @ M if self.direction == "forward" else M @ a
            n = np.linalg.norm(M, 2)
            M /= n
            log_scale += np.log(n)
        return M, float(log_scale)


def sample_word(ensemble: MatrixEnsemble, n: int, seed: int, direction="forward") -> WordSample:
    """Draw ``n`` i.i.d. atom indices with the ensemble weights."""
    if n < 0:
        raise ValueError("word length must be nonnegative")
    if ensemble.size == 1:
        idx = np.zeros(n, dtype=np.int64)
    else:
        idx = stream(seed, "word").choice(ensemble.size, size=n, p=ensemble.weights).astype(np.int64)
    return WordSample(_readonly(idx), direction)


def act_projective(g, x) -> ProjectivePoint:
    """Projective action ``[x] -> [g x]``."""
    g = linalg.as_float(g) if linalg.is_exact(np.asarray(g)) else np.asarray(g, dtype=float)
    s = np.linalg.svd(g, compute_uv=False)
    if s[-1] <= linalg.RANK_EPS * s[0]:
        raise EnsembleError("non-invertible matrix has no projective action")
    v = x.rep if isinstance(x, ProjectivePoint) else np.asarray(x, dtype=float)
    return ProjectivePoint.of(g @ v)


def invariance_residual(ensemble: MatrixEnsemble, W: Subspace):
    """``(max_g ||(I - P_W) g P_W|| / ||g||, argmax atom)``; exact mode gives 0 or 1."""
    if W.dim == 0 or W.dim == ensemble.dim:
        return 0.0, 0
    if ensemble.is_exact and W.exact is not None:
        for i, g in enumerate(ensemble.exact_atoms):
            try:
                for j in range(W.dim):
                    linalg.solve(W.exact, g @ W.exact[:, j])
            except linalg.Infeasible:
                # report the float leakage of the offending atom
                a = ensemble.atoms[i]
                leak = np.linalg.norm((np.eye(ensemble.dim) - W.projector) @ a @ W.basis, 2)
                return float(leak / np.linalg.norm(a, 2)), i
        return 0.0, 0
    Pc = np.eye(ensemble.dim) - W.projector
    res = [np.linalg.norm(Pc @ a @ W.basis, 2) / np.linalg.norm(a, 2) for a in ensemble.atoms]
    i = int(np.argmax(res))
    return float(res[i]), i


def restrict_quotient(ensemble: MatrixEnsemble, W: Subspace, mode: str) -> MatrixEnsemble:
    """Induced ensemble on ``W`` (``mode="restrict"``) or on ``V/W`` (``"quotient"``).

    Float coordinates: the orthonormal basis of ``W`` for restrictions, the
    orthonormal basis ``W.complement()`` of ``W^perp`` for quotients.  In
    rational mode with an exact ``W`` the canonical rational bases are used
    instead and the result stays exact.
    """
    if mode not in ("restrict", "quotient"):
        raise ValueError(f"mode must be restrict or quotient, got {mode!r}")
    if W.ambient_dim != ensemble.dim:
        raise ValueError("subspace and ensemble dimensions differ")
    res, atom = invariance_residual(ensemble, W)
    if res > INVARIANCE_TOL:
        raise NotInvariant(res, atom)
    k, d = W.dim, ensemble.dim
    if (mode == "restrict" and k == 0) or (mode == "quotient" and k == d):
        raise ValueError(f"{mode} onto a zero-dimensional space")
    name = f"{ensemble.name}|{mode}({W.label or k})"
    if ensemble.is_exact and W.exact is not None:
        if mode == "restrict":
            mats = [_coords(W.exact, g @ W.exact) for g in ensemble.exact_atoms]
        else:
            C = W.complement().exact
            T = np.concatenate([W.exact, C], axis=1)
            mats = [_coords(T, g @ C)[k:] for g in ensemble.exact_atoms]
        return MatrixEnsemble.create(mats, ensemble.weights, "rational", name)
    if mode == "restrict":
        B = W.basis
        mats = [B.T @ a @ B for a in ensemble.atoms]
    else:
        C = W.complement().basis
        mats = [C.T @ a @ C for a in ensemble.atoms]
    return MatrixEnsemble.create(mats, ensemble.weights, "float", name)


def _coords(B, M):
    """Exact coordinates ``X`` with ``B X = M`` (columns of ``M`` in span ``B``)."""
    cols = [linalg.solve(B, M[:, j]) for j in range(M.shape[1])]
    return np.stack(cols, axis=1)


def angular_distance(x, y) -> float:
    """Metric ``arccos |<x, y>|`` on projective space, in ``[0, pi/2]``."""
    a = x.rep if isinstance(x, ProjectivePoint) else canonicalize(x)
    b = y.rep if isinstance(y, ProjectivePoint) else canonicalize(y)
    c = min(1.0, abs(float(a @ b)))
    # arccos loses precision near 1; use the sine of the difference instead
    s = np.linalg.norm(a - (a @ b) * b)
    return float(np.arctan2(s, c))


def distance_to_subspace(x, W: Subspace) -> float:
    """Angle ``arcsin ||(I - P_W) x||`` between ``[x]`` and ``P(W)``."""
    if W.dim == 0:
        raise ValueError("distance to the zero subspace is undefined")
    v = x.rep if isinstance(x, ProjectivePoint) else canonicalize(x)
    r = W.residual(v)
    c = np.linalg.norm(W.basis.T @ v)
    return float(np.arctan2(r, c))


def _entry_out(x):
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return float(x)


def ensemble_to_dict(ensemble: MatrixEnsemble) -> dict:
    mats = ensemble.exact_atoms if ensemble.is_exact else ensemble.atoms
    return {
        "format": FORMAT_TAG,
        "name": ensemble.name,
        "dim": ensemble.dim,
        "mode": ensemble.mode,
        "atoms": [[[_entry_out(x) for x in row] for row in m] for m in mats],
        "weights": [float(w) for w in ensemble.weights],
    }


def ensemble_from_dict(data: dict) -> MatrixEnsemble:
    fmt = data.get("format", FORMAT_TAG)
    if fmt != FORMAT_TAG:
        raise EnsembleError(f"unsupported ensemble format {fmt!r} (expected {FORMAT_TAG})")
    for key in ("dim", "atoms"):
        if key not in data:
            raise EnsembleError(f"ensemble is missing field {key!r}")
    d = int(data["dim"])
    mode = data.get("mode")
    atoms = []
    for i, a in enumerate(data["atoms"]):
        arr = np.array(a, dtype=object)
        if arr.shape != (d, d):
            raise EnsembleError(f"atom {i} has shape {arr.shape}, expected ({d}, {d})")
        atoms.append(arr if mode == "rational" or _has_str(arr) else arr.astype(float))
    return MatrixEnsemble.create(atoms, data.get("weights"), mode, data.get("name", ""))


def dump_ensemble(ensemble: MatrixEnsemble, path) -> None:
    Path(path).write_text(json.dumps(ensemble_to_dict(ensemble), indent=2) + "\n")


def load_ensemble(path) -> MatrixEnsemble:
    return ensemble_from_dict(json.loads(Path(path).read_text()))
