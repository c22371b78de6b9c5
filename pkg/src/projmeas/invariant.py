"""Invariant subspaces of the semigroup generated by an ensemble.

The search works with the unital algebra spanned by products of atoms (a
subspace is invariant under the semigroup iff it is invariant under this
algebra).  Submodules are found MeatAxe-style: take a random algebra element
``A``, an irreducible factor ``p`` of its characteristic polynomial, and spin
a vector of ``ker p(A)`` under the generators.  When ``ker p(A)`` has
dimension ``deg p`` the spin test (on the module and its dual) certifies
irreducibility.

Everything returned is invariant.  Completeness of the lattice is decided
through Hom spaces: each composition factor type ``T`` occurring in the
socle with multiplicity one contributes exactly one minimal submodule; a
multiplicity above one means infinitely many, and the lattice is flagged
incomplete.

In rational mode every rank decision is exact (``Fraction`` arithmetic and
factorization over Q); rational certificates are about subspaces defined over
Q, and a factor whose endomorphism field has a real embedding beyond Q (so it
may split over R) is flagged incomplete.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy

from . import linalg
from .ensemble import MatrixEnsemble, Subspace, invariance_residual, restrict_quotient
from .errors import ProjmeasError, ToleranceAmbiguity
from .lyapunov import DEFAULT_STEPS, DEFAULT_TRIALS, TIE_FLOOR, TIE_SIGMAS, estimate_spectrum, strictly_below
from .rng import stream

COMPLEMENT_TOL = 1e-8

__all__ = [
    "AlgebraBasis",
    "Lattice",
    "ComplementWitness",
    "NoComplement",
    "ReducibilityCertificate",
    "FiltrationReport",
    "algebra_closure",
    "spin",
    "invariant_subspace_lattice",
    "solve_complement",
    "complete_reducibility_certificate",
    "fkh_filtration",
]


# ---------------------------------------------------------------------------
# span bookkeeping in either arithmetic


class _Span:
    """Incrementally grown span; exact (echelon rows) or float (orthonormal)."""

    def __init__(self, n, exact, eps=linalg.RANK_EPS):
        self.n, self.exact, self.eps = n, exact, eps
        self.vectors = []
        self._rows = []  # exact: (pivot, row) in reduced form
        self._Q = np.zeros((n, 0))

    def add(self, v) -> bool:
        if self.exact:
            r = np.array(v, dtype=object)
            for piv, row in self._rows:
                if r[piv] != 0:
                    r = r - r[piv] * row
            nz = [i for i in range(self.n) if r[i] != 0]
            if not nz:
                return False
            piv = nz[0]
            r = r / r[piv]
            self._rows = [(p, row - row[piv] * r if row[piv] != 0 else row) for p, row in self._rows]
            self._rows.append((piv, r))
            self.vectors.append(np.array(v, dtype=object))
            return True
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0:
            return False
        r = v - self._Q @ (self._Q.T @ v)
        r = r - self._Q @ (self._Q.T @ r)
        ratio = np.linalg.norm(r) / nv
        if self.eps < ratio < 10 * self.eps:
            raise ToleranceAmbiguity(ratio, self.eps)
        if ratio <= self.eps:
            return False
        q = r / np.linalg.norm(r)
        self._Q = np.concatenate([self._Q, q[:, None]], axis=1)
        self.vectors.append(q)
        return True

    @property
    def dim(self):
        return len(self.vectors)

    def matrix(self):
        if self.exact:
            if not self.vectors:
                return np.empty((self.n, 0), dtype=object)
            return np.stack(self.vectors, axis=1)
        return self._Q.copy()


def _eye(k, exact):
    if exact:
        return linalg.as_exact(np.eye(k, dtype=int))
    return np.eye(k)


def _zeros(shape, exact):
    if exact:
        z = np.empty(shape, dtype=object)
        z[...] = Fraction(0)
        return z
    return np.zeros(shape)


# ---------------------------------------------------------------------------
# algebra


@dataclass(frozen=True, eq=False)
class AlgebraBasis:
    """Basis of the unital algebra spanned by all products of atoms."""

    basis: tuple
    exact: bool

    @property
    def dimension(self) -> int:
        return len(self.basis)


def _closure(gens, k, exact, eps=linalg.RANK_EPS):
    span = _Span(k * k, exact, eps)
    span.add(_eye(k, exact).reshape(-1))
    elems = [span.vectors[0].reshape(k, k)]
    i = 0
    while i < len(elems):
        b = elems[i]
        for g in gens:
            if span.add((g @ b).reshape(-1)):
                elems.append(span.vectors[-1].reshape(k, k))
        i += 1
    return elems


def algebra_closure(ensemble: MatrixEnsemble) -> AlgebraBasis:
    """Basis of the unital algebra generated by the atoms.

    Multiplies the current basis by each generator and keeps independent
    products (exact row reduction in rational mode, orthogonalization with
    the ambiguity band in float mode) until nothing new appears.
    """
    gens = ensemble.generators()
    return AlgebraBasis(tuple(_closure(gens, ensemble.dim, ensemble.is_exact)), ensemble.is_exact)


def spin(gens, vectors, exact, eps=linalg.RANK_EPS):
    """Smallest subspace containing ``vectors`` (columns) and stable under ``gens``."""
    k = vectors.shape[0]
    span = _Span(k, exact, eps)
    queue = []
    for j in range(vectors.shape[1]):
        if span.add(vectors[:, j]):
            queue.append(span.vectors[-1])
    while queue:
        v = queue.pop()
        for g in gens:
            if span.add(g @ v):
                queue.append(span.vectors[-1])
    return span.matrix()


# ---------------------------------------------------------------------------
# sections B <= A of V as modules


@dataclass(eq=False)
class _Section:
    """Module ``A/B`` with coordinates on a chosen complement ``C`` of ``B`` in ``A``."""

    lower: Subspace
    upper: Subspace
    C: np.ndarray
    gens: list
    exact: bool

    @property
    def dim(self):
        return self.C.shape[1]

    def lift(self, coords, label="") -> Subspace:
        """Ambient subspace ``B + C span(coords)``."""
        if self.exact:
            parts = [self.lower.exact, self.C @ coords]
        else:
            parts = [self.lower.basis, self.C @ coords]
        return Subspace.span(np.concatenate(parts, axis=1), label, dim=self.upper.ambient_dim)


def _section(ensemble: MatrixEnsemble, lower: Subspace, upper: Subspace) -> _Section:
    exact = ensemble.is_exact and lower.exact is not None and upper.exact is not None
    d = ensemble.dim
    if exact:
        span = _Span(d, True)
        for j in range(lower.dim):
            span.add(lower.exact[:, j])
        extra = []
        for j in range(upper.dim):
            if span.add(upper.exact[:, j]):
                extra.append(upper.exact[:, j])
        C = np.stack(extra, axis=1) if extra else np.empty((d, 0), dtype=object)
        T = np.concatenate([lower.exact, C], axis=1)
        b = lower.dim
        gens = []
        for g in ensemble.exact_atoms:
            GC = g @ C
            cols = [linalg.solve(T, GC[:, j])[b:] for j in range(C.shape[1])]
            gens.append(np.stack(cols, axis=1) if cols else np.empty((0, 0), dtype=object))
        return _Section(lower, upper, C, gens, True)
    R = upper.basis - lower.basis @ (lower.basis.T @ upper.basis)
    C = linalg.column_basis(R) if R.size else np.zeros((d, 0))
    gens = [C.T @ a @ C for a in ensemble.atoms]
    return _Section(lower, upper, C, gens, False)


def _charpoly_factors(A, exact):
    """Irreducible factors of the characteristic polynomial of ``A``.

    Returns a list of ``(coeffs, degree)`` with monic coefficients in
    descending powers.
    """
    k = A.shape[0]
    if exact:
        x = sympy.Symbol("x")
        M = sympy.Matrix(k, k, [sympy.Rational(int(f.numerator), int(f.denominator)) for f in A.ravel()])
        _, facs = sympy.factor_list(M.charpoly(x).as_expr(), x)
        out = []
        for f, _mult in facs:
            coeffs = [Fraction(int(c.p), int(c.q)) for c in sympy.Poly(f, x).monic().all_coeffs()]
            out.append((coeffs, len(coeffs) - 1))
        return sorted(out, key=lambda t: t[1])
    ev = np.linalg.eigvals(A)
    scale = max(1.0, float(np.max(np.abs(ev))))
    tol = 1e-5 * scale
    real = np.sort(ev.real[np.abs(ev.imag) <= tol])
    cplx = ev[ev.imag > tol]
    out = []
    i = 0
    while i < len(real):
        j = i
        while j + 1 < len(real) and real[j + 1] - real[j] <= tol:
            j += 1
        lam = float(real[i: j + 1].mean())
        out.append(([1.0, -lam], 1))
        i = j + 1
    used = np.zeros(len(cplx), bool)
    for i in range(len(cplx)):
        if used[i]:
            continue
        close = np.abs(cplx - cplx[i]) <= tol
        used |= close
        z = cplx[close].mean()
        out.append(([1.0, -2 * z.real, abs(z) ** 2], 2))
    return sorted(out, key=lambda t: t[1])


def _poly_at(coeffs, A, exact):
    k = A.shape[0]
    P = _zeros((k, k), exact)
    I = _eye(k, exact)
    for c in coeffs:
        P = P @ A + (c * I)
    return P


class _Splitter:
    """Random-element submodule search on sections of one ensemble."""

    def __init__(self, ensemble: MatrixEnsemble, seed=0, budget=None):
        self.ensemble = ensemble
        self.seed = seed
        d = ensemble.dim
        self.budget = budget if budget is not None else 50 * d * d
        self.calls = 0

    def split(self, sec: _Section):
        """Return ``("irreducible", None)``, ``("reducible", Subspace)`` or ``("unknown", None)``."""
        k, exact = sec.dim, sec.exact
        if k <= 1:
            return "irreducible", None
        self.calls += 1
        rng = stream(self.seed, "split", self.calls)
        gens = sec.gens
        gensT = [g.T.copy() for g in gens]
        alg = _closure(gens, k, exact)
        tries = max(1, self.budget // max(1, k * k)) if self.budget else 1
        for _ in range(tries):
            A = self._random_element(alg, rng, exact)
            try:
                factors = _charpoly_factors(A, exact)
            except np.linalg.LinAlgError:
                continue
            for coeffs, deg in factors:
                try:
                    P = _poly_at(coeffs, A, exact)
                    ref = None if exact else max(1.0, float(np.linalg.norm(A, 2))) ** deg
                    N = linalg.nullspace(P, scale=ref)
                    if N.shape[1] == 0:
                        continue
                    cands = [N[:, [j]] for j in range(N.shape[1])]
                    if N.shape[1] > 1:
                        cands.append(N @ self._coeffs(rng, N.shape[1], exact).reshape(-1, 1))
                    for v in cands:
                        S = spin(gens, v, exact)
                        if S.shape[1] < k:
                            return "reducible", sec.lift(S)
                    if N.shape[1] == deg:
                        NT = linalg.nullspace(P.T.copy(), scale=ref)
                        ST = spin(gensT, NT[:, [0]], exact)
                        if ST.shape[1] < k:
                            ann = linalg.nullspace(ST.T.copy())
                            return "reducible", sec.lift(ann)
                        return "irreducible", None
                except ToleranceAmbiguity:
                    continue
        return "unknown", None

    @staticmethod
    def _coeffs(rng, n, exact):
        if exact:
            c = rng.integers(-3, 4, size=n)
            c[rng.integers(n)] = rng.integers(1, 4)
            return linalg.as_exact(c)
        return rng.normal(size=n)

    def _random_element(self, alg, rng, exact):
        c = self._coeffs(rng, len(alg), exact)
        A = c[0] * alg[0]
        for ci, b in zip(c[1:], alg[1:]):
            A = A + ci * b
        return A


def _hom(src_gens, dst_gens, exact):
    """Basis of ``{X : dst_g X = X src_g for all g}`` as a list of matrices."""
    s = src_gens[0].shape[0]
    t = dst_gens[0].shape[0]
    if exact:
        Is, It = _eye(s, True), _eye(t, True)
        blocks = [_kron(Is, D) - _kron(S.T, It) for S, D in zip(src_gens, dst_gens)]
    else:
        blocks = [np.kron(np.eye(s), D) - np.kron(S.T, np.eye(t)) for S, D in zip(src_gens, dst_gens)]
    M = np.concatenate(blocks, axis=0)
    N = linalg.nullspace(M)
    return [N[:, j].reshape(s, t).T.copy() for j in range(N.shape[1])]


def _kron(A, B):
    ra, ca = A.shape
    rb, cb = B.shape
    out = np.empty((ra * rb, ca * cb), dtype=object)
    for i in range(ra):
        for j in range(ca):
            out[i * rb:(i + 1) * rb, j * cb:(j + 1) * cb] = A[i, j] * B
    return out


# ---------------------------------------------------------------------------
# lattice


@dataclass(eq=False)
class Lattice:
    """Invariant subspaces found, one Jordan-Hoelder chain, completeness flag."""

    subspaces: list
    jordan_holder: list
    complete: bool
    factor_dims: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def incomplete(self) -> bool:
        return not self.complete

    def proper(self):
        """Nonzero proper members."""
        d = self.jordan_holder[-1].dim if self.jordan_holder else 0
        return [U for U in self.subspaces if 0 < U.dim < d]

    def find(self, W: Subspace, tol=1e-8):
        for U in self.subspaces:
            if U.same_as(W, tol):
                return U
        return None


class _LatticeBuilder:
    def __init__(self, ensemble, seed, budget, max_subspaces):
        self.E = ensemble
        self.splitter = _Splitter(ensemble, seed, budget)
        self.max_subspaces = max_subspaces
        self.rng = stream(seed, "lattice")
        self.notes = []

    def jordan_holder(self, lower, upper):
        chain = [lower]
        cur = lower
        ok = True
        while cur.dim < upper.dim:
            top = upper
            while True:
                verdict, U = self.splitter.split(_section(self.E, cur, top))
                if verdict == "irreducible":
                    break
                if verdict == "unknown":
                    ok = False
                    self.notes.append(f"split budget exhausted on a section of dim {top.dim - cur.dim}")
                    break
                top = U
            chain.append(top)
            cur = top
        return chain, ok

    def real_split_risk(self, sec):
        """Rational mode: could this Q-irreducible section split over R?"""
        if not sec.exact or sec.dim <= 1:
            return False
        ends = _hom(sec.gens, sec.gens, True)
        if len(ends) <= 1:
            return False
        # a generic non-scalar endomorphism has a real eigenvalue iff the
        # endomorphism field has a real embedding
        real_hits = 0
        for _ in range(3):
            phi = self._nonscalar(ends)
            ev = np.linalg.eigvals(linalg.as_float(phi))
            if np.any(np.abs(ev.imag) <= 1e-9 * max(1.0, np.abs(ev).max())):
                real_hits += 1
        return real_hits == 3

    def _nonscalar(self, ends):
        k = ends[0].shape[0]
        while True:
            c = self.splitter._coeffs(self.rng, len(ends), True)
            phi = sum((ci * e for ci, e in zip(c[1:], ends[1:])), c[0] * ends[0])
            if any(phi[i, j] != (phi[0, 0] if i == j else 0) for i in range(k) for j in range(k)):
                return phi

    def build(self, lower, upper, out):
        """Collect invariant ``U`` with ``lower <= U <= upper`` into ``out``; return completeness."""
        _add(out, lower)
        if len(out) >= self.max_subspaces:
            return False
        if lower.dim == upper.dim:
            return True
        sec = _section(self.E, lower, upper)
        chain, complete = self.jordan_holder(lower, upper)
        factors = [_section(self.E, a, b) for a, b in zip(chain[:-1], chain[1:])]
        types = []
        for f in factors:
            if self.real_split_risk(f):
                complete = False
                self.notes.append("rational factor may split over R; lattice covers Q-subspaces only")
            if not any(t.dim == f.dim and _hom(t.gens, f.gens, f.exact) for t in types):
                types.append(f)
        minimal = []
        for T in types:
            H = _hom(T.gens, sec.gens, sec.exact)
            if not H:
                continue
            e = len(_hom(T.gens, T.gens, T.exact))
            if len(H) <= e:
                minimal.append(sec.lift(linalg.column_basis(H[0])))
                continue
            complete = False
            self.notes.append(f"factor of dim {T.dim} has socle multiplicity {len(H) // max(e, 1)}; "
                              "infinitely many invariant subspaces")
            imgs = [h for h in H]
            for _ in range(len(H)):
                c = self.splitter._coeffs(self.rng, len(H), sec.exact)
                imgs.append(sum((ci * h for ci, h in zip(c[1:], H[1:])), c[0] * H[0]))
            for h in imgs:
                B = linalg.column_basis(h)
                if B.shape[1] == T.dim:
                    minimal.append(sec.lift(B))
        seen = []
        for S in minimal:
            if any(S.same_as(x) for x in seen):
                continue
            seen.append(S)
            complete &= self.build(S, upper, out)
            if len(out) >= self.max_subspaces:
                return False
        _add(out, upper)
        return complete


def _add(out, U):
    for x in out:
        if x.same_as(U):
            return
    out.append(U)


def invariant_subspace_lattice(ensemble: MatrixEnsemble, max_dim: int | None = None, seed: int = 0,
                               budget: int | None = None, max_subspaces: int = 256) -> Lattice:
    """Invariant subspaces of the generated semigroup plus a Jordan-Hoelder chain.

    ``max_dim`` drops members of larger dimension from the returned list (the
    chain is always complete).  ``Lattice.complete`` is False when the search
    budget ran out or the lattice is infinite; the members returned are
    invariant regardless.
    """
    d = ensemble.dim
    zero, full = Subspace.zero(d, "0"), Subspace.full(d, "V")
    if not ensemble.is_exact:
        zero = Subspace(zero.basis, "0")
        full = Subspace(np.eye(d), "V")
    builder = _LatticeBuilder(ensemble, seed, budget, max_subspaces)
    jh, ok = builder.jordan_holder(zero, full)
    out = []
    complete = builder.build(zero, full, out) and ok
    if len(out) >= max_subspaces:
        builder.notes.append(f"stopped at {max_subspaces} subspaces")
        complete = False
    out.sort(key=lambda U: (U.dim, U.fingerprint()))
    if max_dim is not None:
        out = [U for U in out if U.dim <= max_dim or U.dim == d]
    labelled = []
    for i, U in enumerate(out):
        labelled.append(U if U.label else U.with_label(f"L{i}"))
    dims = [b.dim - a.dim for a, b in zip(jh[:-1], jh[1:])]
    return Lattice(labelled, jh, complete, dims, sorted(set(builder.notes)))


# ---------------------------------------------------------------------------
# complements


class NoComplement(ProjmeasError):
    """No invariant complement; carries the float residual or an exact certificate."""

    def __init__(self, residual=None, certificate=None):
        self.residual = residual
        self.certificate = certificate
        what = f"least-squares residual {residual:.3e}" if residual is not None else "exact infeasibility certificate"
        super().__init__(f"no invariant complement ({what})")


@dataclass(frozen=True, eq=False)
class ComplementWitness:
    X: np.ndarray
    complement: Subspace
    residual: float

    @property
    def exact(self) -> bool:
        return linalg.is_exact(self.X)

    def to_dict(self) -> dict:
        return {
            "X": [[_fmt(x) for x in row] for row in self.X],
            "residual": self.residual,
            "complement_dim": self.complement.dim,
        }


def _fmt(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else str(x.numerator)
    return float(x)


def _blocks(ensemble, W):
    """Block form ``[[A, B], [0, D]]`` of each atom over ``W + complement``."""
    k = W.dim
    if ensemble.is_exact and W.exact is not None:
        C = W.complement().exact
        T = np.concatenate([W.exact, C], axis=1)
        d = T.shape[0]
        Tinv = np.stack([linalg.solve(T, linalg.as_exact(np.eye(d, dtype=int))[:, j]) for j in range(d)], axis=1)
        out = []
        for g in ensemble.exact_atoms:
            M = Tinv @ g @ T
            out.append((M[:k, :k], M[:k, k:], M[k:, k:]))
        return out, W.exact, C, True
    Wb = W.basis
    C = W.complement().basis
    out = [(Wb.T @ a @ Wb, Wb.T @ a @ C, C.T @ a @ C) for a in ensemble.atoms]
    return out, Wb, C, False


def solve_complement(ensemble: MatrixEnsemble, W: Subspace) -> ComplementWitness:
    """Invariant complement of invariant ``W`` via a joint Sylvester system.

    Solves ``A_g X - X D_g = -B_g`` for all atoms at once; the complement is
    the span of ``W X + C`` where ``C`` spans the chosen complement
    coordinates.  Raises :class:`NoComplement` when infeasible.
    """
    d, k = ensemble.dim, W.dim
    res, atom = invariance_residual(ensemble, W)
    if res > 1e-8:
        from .errors import NotInvariant
        raise NotInvariant(res, atom)
    if k == 0 or k == d:
        other = Subspace.full(d) if k == 0 else Subspace.zero(d)
        return ComplementWitness(np.zeros((k, d - k)), other, 0.0)
    blocks, Wm, C, exact = _blocks(ensemble, W)
    m = d - k
    if exact:
        Ik, Im = _eye(k, True), _eye(m, True)
        rows = [_kron(Im, A) - _kron(D.T, Ik) for A, _, D in blocks]
        rhs = [(-B).T.reshape(-1) for _, B, _ in blocks]
        M = np.concatenate(rows, axis=0)
        b = np.concatenate(rhs)
        try:
            x = linalg.solve(M, b)
        except linalg.Infeasible as exc:
            raise NoComplement(certificate=exc.certificate) from None
        X = x.reshape(m, k).T.copy()
        resid = max(max((abs(v) for v in (A @ X - X @ D + B).ravel()), default=Fraction(0)) for A, B, D in blocks)
        comp = Subspace.span(Wm @ X + C, dim=d)
        return ComplementWitness(X, comp, float(resid))
    M = np.concatenate([np.kron(np.eye(m), A) - np.kron(D.T, np.eye(k)) for A, _, D in blocks], axis=0)
    b = np.concatenate([(-B).reshape(-1, order="F") for _, B, _ in blocks])
    x, *_ = np.linalg.lstsq(M, b, rcond=None)
    X = x.reshape(k, m, order="F")
    resid = max(float(np.linalg.norm(A @ X - X @ D + B)) for A, B, D in blocks)
    if resid > COMPLEMENT_TOL:
        raise NoComplement(residual=resid)
    comp = Subspace.span(Wm @ X + C, dim=d)
    return ComplementWitness(X, comp, resid)


# ---------------------------------------------------------------------------
# complete reducibility


@dataclass(eq=False)
class ReducibilityCertificate:
    semisimple: bool | None
    decomposition: list
    failures: list
    lattice_complete: bool
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return {True: "PASS", False: "FAIL", None: "UNKNOWN"}[self.semisimple]

    def to_dict(self) -> dict:
        return {
            "semisimple": self.semisimple,
            "verdict": self.verdict,
            "decomposition_dims": [U.dim for U in self.decomposition],
            "failure_dims": [U.dim for U in self.failures],
            "lattice_complete": self.lattice_complete,
            "notes": list(self.notes),
        }


def _embed(U: Subspace, coords: Subspace, label="") -> Subspace:
    """Map a subspace given in coordinates of ``U`` back to the ambient space."""
    if U.exact is not None and coords.exact is not None:
        return Subspace.span(U.exact @ coords.exact, label, dim=U.ambient_dim)
    return Subspace.span(U.basis @ coords.basis, label, dim=U.ambient_dim)


def _restricted(ensemble, U):
    if U.dim == ensemble.dim:
        return ensemble
    return restrict_quotient(ensemble, U, "restrict")


def _decompose(E: MatrixEnsemble, splitter_seed, depth=0):
    d = E.dim
    full = Subspace.full(d) if E.is_exact else Subspace(np.eye(d), "V")
    zero = Subspace.zero(d)
    verdict, S = _Splitter(E, splitter_seed + depth).split(_section(E, zero, full))
    if verdict == "irreducible":
        return True, [full], []
    if verdict == "unknown":
        return None, [], []
    try:
        wit = solve_complement(E, S)
    except NoComplement:
        return False, [], [S]
    C = wit.complement
    out_ok, pieces, fails = True, [], []
    for U in (S, C):
        ok, p, f = _decompose(_restricted(E, U), splitter_seed, depth + 1)
        pieces += [_embed(U, x) for x in p]
        fails += [_embed(U, x) for x in f]
        if ok is False:
            out_ok = False
        elif ok is None and out_ok is not False:
            out_ok = None
    return out_ok, pieces, fails


def complete_reducibility_certificate(ensemble: MatrixEnsemble, U: Subspace | None = None, seed: int = 0,
                                      lattice: Lattice | None = None) -> ReducibilityCertificate:
    """Decide whether the action on invariant ``U`` is semisimple.

    Recursively splits off a submodule ``S``: no invariant complement proves
    non-semisimplicity; a complement ``C`` reduces the question to ``S`` and
    ``C``.  A full split into certified irreducibles proves semisimplicity.
    Every proper lattice member of ``U`` is then cross-checked with
    :func:`solve_complement`; disagreement downgrades the verdict to unknown.
    """
    d = ensemble.dim
    if U is None:
        U = Subspace.full(d) if ensemble.is_exact else Subspace(np.eye(d), "V")
    if U.dim == 0:
        return ReducibilityCertificate(True, [], [], True)
    EU = _restricted(ensemble, U)
    ok, pieces, fails = _decompose(EU, seed)
    lat = invariant_subspace_lattice(EU, seed=seed) if lattice is None or U.dim < d else lattice
    cross = []
    for L in lat.proper():
        try:
            solve_complement(EU, L)
        except NoComplement:
            cross.append(L)
        except ToleranceAmbiguity:
            pass
    notes = []
    if ok is True and cross:
        notes.append("decomposition found but some lattice member lacks a complement; tolerance trouble")
        ok = None
    if ok is None and cross:
        ok = False
    fails_amb = [_embed(U, x) for x in fails] + [_embed(U, x) for x in cross if not any(x.same_as(f) for f in fails)]
    decomposition = [_embed(U, x, f"irr{i}") for i, x in enumerate(pieces)] if ok else []
    if ok is None and not cross:
        notes.append("semisimplicity unknown; failures: none found")
    return ReducibilityCertificate(ok, decomposition, fails_amb, lat.complete, notes)


# ---------------------------------------------------------------------------
# Furstenberg-Kifer-Hennion filtration


@dataclass(eq=False)
class FiltrationReport:
    spaces: list
    exponents: list
    critical: bool
    lattice_complete: bool
    tie_rule: str = f"|a-b| <= {TIE_SIGMAS:g}(se_a+se_b) + {TIE_FLOOR:g}"
    notes: list = field(default_factory=list)

    @property
    def dims(self):
        return [F.dim for F in self.spaces]

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "exponents": [[float(v), float(s)] for v, s in self.exponents],
            "critical": self.critical,
            "lattice_complete": self.lattice_complete,
            "tie_rule": self.tie_rule,
            "notes": list(self.notes),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _ExponentCache:
    def __init__(self, ensemble, n_steps, n_trials, seed):
        self.E, self.kw = ensemble, dict(n_steps=n_steps, n_trials=n_trials, seed=seed)
        self.cache = {}

    def top(self, U: Subspace):
        if U.dim == 0:
            return float("-inf"), 0.0
        key = U.fingerprint()
        if key not in self.cache:
            rep = estimate_spectrum(_restricted(self.E, U), **self.kw)
            self.cache[key] = (rep.top, rep.top_stderr)
        return self.cache[key]


def fkh_filtration(ensemble: MatrixEnsemble, n_steps: int = DEFAULT_STEPS, n_trials: int = DEFAULT_TRIALS,
                   seed: int = 0, lattice: Lattice | None = None) -> FiltrationReport:
    """Filtration ``V = F_1 > F_2 > ... > F_k > 0`` with exponents ``beta_i``.

    ``F_{i+1}`` is the sum of the invariant subspaces of ``F_i`` whose top
    exponent is strictly below ``lambda_1(F_i)`` under the tie rule, and
    ``beta_i = lambda_1(F_i)``.  Critical means ``F_2 = 0``.
    """
    d = ensemble.dim
    if lattice is None:
        lattice = invariant_subspace_lattice(ensemble, seed=seed)
    cache = _ExponentCache(ensemble, n_steps, n_trials, seed)
    F = lattice.jordan_holder[-1] if lattice.jordan_holder else Subspace.full(d)
    spaces, exps = [F.with_label("F1")], [cache.top(F)]
    for i in range(d):
        top, se = exps[-1]
        lower = [U for U in lattice.subspaces if 0 < U.dim < F.dim and F.contains(U)
                 and strictly_below(*cache.top(U), top, se)]
        if not lower:
            break
        nxt = lower[0]
        for U in lower[1:]:
            nxt = nxt.plus(U)
        if nxt.dim == F.dim:
            break
        F = nxt.with_label(f"F{len(spaces) + 1}")
        spaces.append(F)
        exps.append(cache.top(F))
    notes = [] if lattice.complete else ["lattice incomplete: filtration built from the subspaces found"]
    return FiltrationReport(spaces, exps, len(spaces) == 1, lattice.complete, notes=notes)
