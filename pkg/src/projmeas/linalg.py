"""Rank-revealing linear algebra over float64 and over exact rationals.

Matrices are numpy arrays.  ``dtype=object`` arrays holding
:class:`fractions.Fraction` entries are treated exactly (row reduction);
anything else is float64 and handled by SVD with an explicit rank cutoff.
Float rank decisions that land within a factor 10 above the cutoff raise
:class:`~projmeas.errors.ToleranceAmbiguity` instead of guessing.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import ToleranceAmbiguity

RANK_EPS = 1e-9

__all__ = [
    "RANK_EPS",
    "as_exact",
    "as_float",
    "is_exact",
    "rref",
    "rank",
    "nullspace",
    "column_basis",
    "solve",
    "Infeasible",
    "numerical_rank",
    "orthonormal_complement",
]


class Infeasible(Exception):
    """Linear system ``A x = b`` has no solution.

    ``certificate`` is a vector ``y`` with ``y @ A == 0`` and ``y @ b != 0``
    (exact mode) or ``None`` (float mode, where ``residual`` is set).
    """

    def __init__(self, certificate=None, residual=None):
        self.certificate = certificate
        self.residual = residual
        super().__init__("linear system is infeasible")


def is_exact(M) -> bool:
    return isinstance(M, np.ndarray) and M.dtype == object


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (float, np.floating)):
        # decimal reading of the float, so 0.1 stays 1/10
        return Fraction(repr(float(x)))
    return Fraction(x)


def as_exact(M) -> np.ndarray:
    arr = np.asarray(M, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, x in np.ndenumerate(arr):
        out[idx] = _to_fraction(x)
    return out


def as_float(M) -> np.ndarray:
    if is_exact(M):
        return np.vectorize(float, otypes=[float])(M) if M.size else np.zeros(M.shape)
    return np.asarray(M, dtype=float)


def rref(M):
    """Reduced row echelon form of an exact matrix.

    Returns ``(R, pivots)`` with ``R`` a fresh object array.
    """
    R = as_exact(M).copy()
    n_rows, n_cols = R.shape
    pivots = []
    r = 0
    for c in range(n_cols):
        if r >= n_rows:
            break
        p = next((i for i in range(r, n_rows) if R[i, c] != 0), None)
        if p is None:
            continue
        if p != r:
            R[[r, p]] = R[[p, r]]
        piv = R[r, c]
        R[r] = R[r] / piv
        for i in range(n_rows):
            if i != r and R[i, c] != 0:
                R[i] = R[i] - R[i, c] * R[r]
        pivots.append(c)
        r += 1
    return R, pivots


def numerical_rank(s, eps=RANK_EPS, scale=None) -> int:
    """Rank from descending singular values ``s`` with the ambiguity check."""
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return 0
    scale = float(s[0]) if scale is None else float(scale)
    if scale == 0.0:
        return 0
    cutoff = eps * scale
    amb = s[(s > cutoff) & (s < 10 * cutoff)]
    if amb.size:
        raise ToleranceAmbiguity(amb[0], cutoff)
    return int(np.sum(s > cutoff))


def rank(M, eps=RANK_EPS) -> int:
    if is_exact(M):
        return len(rref(M)[1])
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    return numerical_rank(np.linalg.svd(M, compute_uv=False), eps)


def nullspace(M, eps=RANK_EPS, scale=None) -> np.ndarray:
    """Basis of ``{x : M x = 0}`` as columns.

    Exact input gives the canonical rref basis (free variable set to 1);
    float input gives an orthonormal basis.  ``scale`` overrides the largest
    singular value as the reference for the float cutoff (needed when ``M``
    is itself a small difference such as ``p(A)``).
    """
    if is_exact(M):
        n_cols = M.shape[1]
        R, piv = rref(M)
        free = [c for c in range(n_cols) if c not in piv]
        N = np.empty((n_cols, len(free)), dtype=object)
        N[:] = Fraction(0)
        for j, f in enumerate(free):
            N[f, j] = Fraction(1)
            for i, pc in enumerate(piv):
                N[pc, j] = -R[i, f]
        return N
    M = np.asarray(M, dtype=float)
    n_cols = M.shape[1]
    if M.shape[0] == 0 or M.size == 0:
        return np.eye(n_cols)
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    r = numerical_rank(s, eps, scale)
    return vh[r:].T.copy()


def column_basis(M, eps=RANK_EPS) -> np.ndarray:
    """Basis of the column space of ``M``.

    Exact: canonical basis (transposed rref of ``M.T``), so equal spaces give
    equal matrices.  Float: orthonormal basis.
    """
    if is_exact(M):
        if M.shape[1] == 0:
            return np.empty((M.shape[0], 0), dtype=object)
        R, piv = rref(M.T)
        return R[: len(piv)].T.copy()
    M = np.asarray(M, dtype=float)
    if M.shape[1] == 0 or M.size == 0:
        return np.zeros((M.shape[0], 0))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    r = numerical_rank(s, eps)
    return u[:, :r].copy()


def solve(A, b, eps=RANK_EPS, tol=1e-8):
    """Solve ``A x = b`` for one right-hand side vector.

    Exact mode returns one particular solution or raises :class:`Infeasible`
    with a Fredholm certificate.  Float mode solves in the least-squares
    sense and raises :class:`Infeasible` when the residual exceeds ``tol``
    (relative to ``max(1, |b|)``).
    """
    if is_exact(A) or is_exact(b):
        A = as_exact(A)
        b = as_exact(np.asarray(b, dtype=object).reshape(-1))
        n_rows, n_cols = A.shape
        aug = np.concatenate([A, b.reshape(-1, 1)], axis=1)
        R, piv = rref(aug)
        if n_cols in piv:
            # row combination killing A but not b: left nullspace of A, tested against b
            Y = nullspace(A.T.copy())
            for j in range(Y.shape[1]):
                y = Y[:, j]
                if sum(y * b) != 0:
                    raise Infeasible(certificate=y)
            raise Infeasible()
        x = np.empty(n_cols, dtype=object)
        x[:] = Fraction(0)
        for i, pc in enumerate(piv):
            x[pc] = R[i, n_cols]
        return x
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.size == 0:
        x = np.zeros(A.shape[1])
    else:
        x, *_ = np.linalg.lstsq(A, b, rcond=None)
    res = float(np.linalg.norm(A @ x - b)) if A.size else float(np.linalg.norm(b))
    if res > tol * max(1.0, float(np.linalg.norm(b))):
        raise Infeasible(residual=res)
    return x


def orthonormal_complement(Q: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(Q)`` (float).

    Deterministic: the complement is read off a full SVD of the projector
    ``I - Q Q^T``, with each column sign-fixed.
    """
    d, k = Q.shape
    if k == 0:
        return np.eye(d)
    if k == d:
        return np.zeros((d, 0))
    P = np.eye(d) - Q @ Q.T
    u, s, _ = np.linalg.svd(P)
    C = u[:, : d - k].copy()
    for j in range(C.shape[1]):
        i = int(np.argmax(np.abs(C[:, j]) > 1e-12))
        if C[i, j] < 0:
            C[:, j] = -C[:, j]
    return C
