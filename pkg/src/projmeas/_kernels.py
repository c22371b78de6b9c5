"""Compiled inner loops for long random words.

All kernels take the stacked float atoms ``(m, d, d)`` and a pre-sampled
index array, so randomness stays in numpy generators and the loops are
deterministic functions of their inputs.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _matvec(A, x, out):
    d = x.shape[0]
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += A[i, j] * x[j]
        out[i] = s


@njit(cache=True)
def qr_spectrum(atoms, idx, n_batches, stride):
    """Propagate an orthonormal frame and sum log |R_ii| per batch.

    Returns ``(sums, ok)``: ``sums[b, i]`` is the total of ``log |R_ii|``
    over batch ``b``; ``ok`` is False if the frame lost rank.
    """
    n = idx.shape[0]
    d = atoms.shape[1]
    Q = np.eye(d)
    T = np.empty((d, d))
    sums = np.zeros((n_batches, d))
    per = n // n_batches
    for k in range(n):
        A = atoms[idx[k]]
        for i in range(d):
            for j in range(d):
                s = 0.0
                for l in range(d):
                    s += A[i, l] * Q[l, j]
                T[i, j] = s
        b = min(k // per, n_batches - 1)
        if (k + 1) % stride == 0 or k == n - 1:
            # modified Gram-Schmidt on the columns of T
            for j in range(d):
                for p in range(j):
                    r = 0.0
                    for i in range(d):
                        r += Q[i, p] * T[i, j]
                    for i in range(d):
                        T[i, j] -= r * Q[i, p]
                nrm = 0.0
                for i in range(d):
                    nrm += T[i, j] * T[i, j]
                nrm = np.sqrt(nrm)
                if not (nrm > 0.0) or not np.isfinite(nrm):
                    return sums, False
                sums[b, j] += np.log(nrm)
                for i in range(d):
                    Q[i, j] = T[i, j] / nrm
        else:
            for i in range(d):
                for j in range(d):
                    Q[i, j] = T[i, j]
    return sums, True


@njit(cache=True)
def vector_growth(atoms, idx, x):
    """Total ``log ||L_n x|| - log ||x||`` along the forward word."""
    d = x.shape[0]
    v = x / np.sqrt(np.sum(x * x))
    w = np.empty(d)
    total = 0.0
    for k in range(idx.shape[0]):
        _matvec(atoms[idx[k]], v, w)
        nrm = np.sqrt(np.sum(w * w))
        total += np.log(nrm)
        for i in range(d):
            v[i] = w[i] / nrm
    return total


@njit(cache=True)
def forward_chain(atoms, idx, x0):
    """Trajectory of the projective chain; row ``k`` is the state after ``k+1`` steps."""
    n = idx.shape[0]
    d = x0.shape[0]
    out = np.empty((n, d))
    v = x0 / np.sqrt(np.sum(x0 * x0))
    w = np.empty(d)
    for k in range(n):
        _matvec(atoms[idx[k]], v, w)
        nrm = np.sqrt(np.sum(w * w))
        for i in range(d):
            v[i] = w[i] / nrm
            out[k, i] = v[i]
    return out


@njit(cache=True)
def backward_product(atoms, idx):
    """``b_1 ... b_n`` as ``(M, log_scale)`` with ``||M||_F = 1``."""
    d = atoms.shape[1]
    M = np.eye(d)
    T = np.empty((d, d))
    log_scale = 0.0
    for k in range(idx.shape[0]):
        A = atoms[idx[k]]
        nrm = 0.0
        for i in range(d):
            for j in range(d):
                s = 0.0
                for l in range(d):
                    s += M[i, l] * A[l, j]
                T[i, j] = s
                nrm += s * s
        nrm = np.sqrt(nrm)
        log_scale += np.log(nrm)
        for i in range(d):
            for j in range(d):
                M[i, j] = T[i, j] / nrm
    return M, log_scale


@njit(cache=True)
def _backward_lognorms(atoms, idx):
    n = idx.shape[0]
    d = atoms.shape[1]
    M = np.eye(d)
    T = np.empty((d, d))
    out = np.empty(n)
    log_scale = 0.0
    for k in range(n):
        A = atoms[idx[k]]
        nrm = 0.0
        for i in range(d):
            for j in range(d):
                s = 0.0
                for l in range(d):
                    s += M[i, l] * A[l, j]
                T[i, j] = s
                nrm += s * s
        nrm = np.sqrt(nrm)
        log_scale += np.log(nrm)
        out[k] = log_scale
        for i in range(d):
            for j in range(d):
                M[i, j] = T[i, j] / nrm
    return out


def backward_lognorms(atoms, idx):
    """``log ||b_1 ... b_n||_F`` for every prefix length ``n >= 1``."""
    return _backward_lognorms(np.ascontiguousarray(atoms, dtype=np.float64), np.ascontiguousarray(idx, dtype=np.int64))
