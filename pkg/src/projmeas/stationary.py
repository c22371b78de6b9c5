"""Empirical stationary measures on projective space.

Measures are weighted clouds of canonical unit vectors.  Forward (Cesaro)
averages come from the projective chain ``x_{k+1} = [g_k x_k]``; backward
limits push a base measure through ``b_1 ... b_n``.  Escape profiles track
how much Cesaro mass sits near ``P(W)`` for an invariant ``W``.

Chart convention for ``d = 2``: ``t = x_1 / x_2`` on ``P^1`` minus ``[e_1]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance

from . import _kernels
from .ensemble import MatrixEnsemble, ProjectivePoint, Subspace, canonicalize
from .errors import ClassifierInconsistent, TimeoutNoReturn
from .rng import stream

DEFAULT_CAP = 4096
SPAN_WEIGHT_MIN = 1e-6
SPAN_EPS = 1e-3
N_DIRECTIONS = 64
DEFAULT_SCHEDULE = (100, 1_000, 10_000, 100_000)
ESCAPE_HIGH = 0.9
TIGHT_LOW = 0.5
MONOTONE_SLACK = 0.01
MAX_TAU = 1_000_000

__all__ = [
    "EmpiricalMeasure",
    "EscapeProfile",
    "ComponentSample",
    "cesaro_measure",
    "backward_limit_measure",
    "escape_mass_profile",
    "measure_distance",
    "stationarity_residual",
    "support_diameter",
    "project_quotient",
    "chart_values",
    "resample_component",
    "sign_det_classifier",
    "orthogonal_classifier",
    "block_permutation_classifier",
]


def _systematic(weights, k, rng):
    """Indices of ``k`` systematic-resampling draws; keeps input order."""
    u = (rng.random() + np.arange(k)) / k
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="left")


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finite weighted cloud on ``P(R^d)``.

    ``points`` are canonical unit rows, ``weights`` sum to one.  The span
    estimate is the column space of ``sqrt(w_i) x_i`` over atoms heavier than
    ``1e-6``, with singular values below ``SPAN_EPS`` times the largest
    treated as noise.
    """

    points: np.ndarray
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    @classmethod
    def create(cls, points, weights=None, provenance=None, cap: int | None = DEFAULT_CAP, seed: int = 0):
        P = canonicalize(np.atleast_2d(np.asarray(points, dtype=float)))
        n = P.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float).copy()
        if w.shape != (n,) or np.any(w < 0) or not np.isfinite(w).all():
            raise ValueError("weights must be a nonnegative vector matching the points")
        total = w.sum()
        if total <= 0:
            raise ValueError("measure has zero mass")
        w = w / total
        prov = dict(provenance or {"kind": "given"})
        if cap is not None and n > cap:
            idx = _systematic(w, cap, stream(seed, "resample", prov.get("kind", "")))
            P, w = P[idx], np.full(cap, 1.0 / cap)
            prov["resampled_from"] = n
        P.setflags(write=False)
        w.setflags(write=False)
        return cls(P, w, prov)

    @classmethod
    def dirac(cls, x):
        return cls.create([x.rep if isinstance(x, ProjectivePoint) else x], provenance={"kind": "dirac"})

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def span_estimate(self) -> Subspace:
        keep = self.weights > SPAN_WEIGHT_MIN
        M = (self.points[keep] * np.sqrt(self.weights[keep])[:, None]).T
        u, s, _ = np.linalg.svd(M, full_matrices=False)
        r = int(np.sum(s > SPAN_EPS * s[0])) if s.size else 0
        return Subspace.span(u[:, :r], "span", dim=self.dim)

    def second_moment(self) -> np.ndarray:
        return (self.points * self.weights[:, None]).T @ self.points

    def header(self) -> dict:
        return {"dim": self.dim, "atoms": self.size, "provenance": self.provenance}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.dim)] + ["weight"])
            for p, q in zip(self.points, self.weights):
                w.writerow([repr(float(v)) for v in p] + [repr(float(q))])


def _start(x0, d, seed, *path):
    if x0 is None:
        return canonicalize(stream(seed, "x0", *path).normal(size=d))
    v = x0.rep if isinstance(x0, ProjectivePoint) else np.asarray(x0, dtype=float)
    if v.shape != (d,):
        raise ValueError("x0 has the wrong dimension")
    return canonicalize(v)


def _word(ensemble, n, rng):
    if ensemble.size == 1:
        return np.zeros(n, dtype=np.int64)
    return rng.choice(ensemble.size, size=n, p=ensemble.weights).astype(np.int64)


def _chain(ensemble, x0, n, rng):
    atoms = np.ascontiguousarray(ensemble.atoms, dtype=np.float64)
    return _kernels.forward_chain(atoms, _word(ensemble, n, rng), np.array(x0, dtype=np.float64))


def cesaro_measure(ensemble: MatrixEnsemble, x0=None, n: int = 10_000, burn_in: int = 0, thinning: int = 1,
                   seed: int = 0, cap: int | None = DEFAULT_CAP) -> EmpiricalMeasure:
    """Occupation measure of the forward chain after ``burn_in`` steps.

    States ``x_1 ... x_n`` are recorded (``x_0`` excluded), every
    ``thinning``-th state after the burn-in is kept, and the cloud is capped
    by systematic resampling.  ``x0=None`` draws a uniform start from the
    seed.
    """
    if n < burn_in or n < 1:
        raise ValueError("need n >= max(burn_in, 1)")
    if thinning < 1:
        raise ValueError("thinning must be positive")
    start = _start(x0, ensemble.dim, seed)
    traj = _chain(ensemble, start, n, stream(seed, "cesaro"))
    kept = traj[burn_in::thinning]
    if kept.shape[0] == 0:
        kept = traj[-1:]
    prov = {"kind": "cesaro", "n": n, "burn_in": burn_in, "thinning": thinning, "seed": seed,
            "x0": [float(v) for v in start]}
    return EmpiricalMeasure.create(kept, None, prov, cap, seed)


def backward_limit_measure(ensemble: MatrixEnsemble, n: int, seed: int = 0,
                           base: EmpiricalMeasure | None = None) -> EmpiricalMeasure:
    """Push ``base`` through ``b_1 ... b_n`` for a fresh word drawn from ``seed``.

    Without a base, 256 uniform points are used.  The product is kept
    Frobenius-normalized so long words do not overflow.
    """
    d = ensemble.dim
    if base is None:
        base = EmpiricalMeasure.create(stream(seed, "base").normal(size=(256, d)), provenance={"kind": "uniform"})
    if abs(base.mass - 1.0) > 1e-10:
        raise ValueError("base must have mass 1")
    if n == 0:
        return base
    idx = _word(ensemble, n, stream(seed, "backward"))
    M, _ = _kernels.backward_product(np.ascontiguousarray(ensemble.atoms, dtype=np.float64), idx)
    img = base.points @ M.T
    prov = {"kind": "backward", "n": n, "seed": seed, "base": base.provenance.get("kind")}
    return EmpiricalMeasure.create(img, base.weights, prov, cap=None)


def support_diameter(nu: EmpiricalMeasure, min_weight: float = SPAN_WEIGHT_MIN) -> float:
    """Largest angular distance between two atoms of ``nu`` (radians)."""
    P = nu.points[nu.weights > min_weight]
    if P.shape[0] < 2:
        return 0.0
    G = np.abs(P @ P.T)
    i, j = np.unravel_index(np.argmin(G), G.shape)
    a, b = P[i], P[j]
    c = min(1.0, abs(float(a @ b)))
    return float(np.arctan2(np.linalg.norm(a - (a @ b) * b), c))


def chart_values(nu: EmpiricalMeasure) -> np.ndarray:
    """Chart coordinate ``t = x_1 / x_2`` of each atom (``d = 2`` only)."""
    if nu.dim != 2:
        raise ValueError("chart is defined for d = 2")
    with np.errstate(divide="ignore"):
        return nu.points[:, 0] / nu.points[:, 1]


def chart_variance(nu: EmpiricalMeasure) -> float:
    t = chart_values(nu)
    m = float(nu.weights @ t)
    return float(nu.weights @ (t - m) ** 2)


# ---------------------------------------------------------------------------
# escape of mass


@dataclass(frozen=True)
class EscapeProfile:
    checkpoints: tuple
    delta: float
    verdict: str
    n_chains: int = 1
    seed: int = 0

    @property
    def masses(self):
        return [m for _, m in self.checkpoints]

    def mass_at(self, n: int) -> float:
        for k, m in self.checkpoints:
            if k == n:
                return m
        raise KeyError(n)

    def to_dict(self) -> dict:
        return {"checkpoints": [[int(n), float(m)] for n, m in self.checkpoints], "delta": self.delta,
                "verdict": self.verdict, "n_chains": self.n_chains, "seed": self.seed}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "mass"])
            for n, m in self.checkpoints:
                w.writerow([int(n), repr(float(m))])


def _escape_verdict(masses) -> str:
    m = np.asarray(masses, dtype=float)
    steps = np.diff(m)
    if np.all(steps >= -MONOTONE_SLACK) and m[-1] > ESCAPE_HIGH:
        return "ESCAPING"
    half = m[len(m) // 2:]
    if np.all(m <= TIGHT_LOW) and np.all(np.diff(half) <= MONOTONE_SLACK):
        return "TIGHT"
    return "UNDECIDED"


def escape_mass_profile(ensemble: MatrixEnsemble, W: Subspace, x0=None, delta: float = 0.05,
                        schedule=DEFAULT_SCHEDULE, seed: int = 0, n_chains: int = 1) -> EscapeProfile:
    """Cesaro mass within angle ``delta`` of ``P(W)`` at each checkpoint.

    One trajectory per chain is run to the last checkpoint; the mass at
    ``n`` is the fraction of ``x_1 ... x_n`` within ``delta``.  Masses are
    averaged over ``n_chains`` independent chains.  Non-decreasing masses
    (slack 0.01) ending above 0.9 give ESCAPING; masses at most 0.5 that do
    not increase over the second half give TIGHT; anything else is
    UNDECIDED.
    """
    sched = sorted(int(n) for n in schedule)
    if not sched or sched[0] < 1:
        raise ValueError("schedule must list positive step counts")
    if W.dim == 0:
        raise ValueError("W must be nonzero")
    N = sched[-1]
    total = np.zeros(len(sched))
    for c in range(n_chains):
        start = _start(x0, ensemble.dim, seed, *((c,) if c else ()))
        if W.residual(start) <= 1e-12:
            raise ValueError("x0 lies in P(W)")
        traj = _chain(ensemble, start, N, stream(seed, "escape", c))
        inside = np.sqrt(np.clip(np.sum((traj - (traj @ W.basis) @ W.basis.T) ** 2, axis=1), 0, None))
        near = np.arcsin(np.minimum(inside, 1.0)) <= delta
        csum = np.cumsum(near)
        total += np.array([csum[n - 1] / n for n in sched])
    masses = total / n_chains
    return EscapeProfile(tuple((n, float(m)) for n, m in zip(sched, masses)), float(delta), _escape_verdict(masses),
                         n_chains, seed)


# ---------------------------------------------------------------------------
# comparison


def _directions(d, seed):
    U = stream(seed, "directions").normal(size=(N_DIRECTIONS, d))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def measure_distance(a: EmpiricalMeasure, b: EmpiricalMeasure, seed: int = 0) -> float:
    """Sliced transport distance between two clouds on ``P(R^d)``.

    Average over 64 seeded unit directions ``u`` of the 1-Wasserstein
    distance between the laws of ``|<u, x>|``.
    """
    if a.dim != b.dim:
        raise ValueError("measures live on different dimensions")
    U = _directions(a.dim, seed)
    pa, pb = np.abs(a.points @ U.T), np.abs(b.points @ U.T)
    return float(np.mean([wasserstein_distance(pa[:, j], pb[:, j], a.weights, b.weights)
                          for j in range(U.shape[0])]))


def pushforward(ensemble: MatrixEnsemble, nu: EmpiricalMeasure) -> EmpiricalMeasure:
    """``mu * nu``: every atom of ``nu`` moved by every atom of ``mu``."""
    gx = np.einsum("gij,nj->gni", ensemble.atoms, nu.points).reshape(-1, nu.dim)
    w = np.outer(ensemble.weights, nu.weights).reshape(-1)
    return EmpiricalMeasure.create(gx, w, {"kind": "pushforward", "parent": nu.provenance.get("kind"),
                                           "map": "mu"}, cap=None)


def stationarity_residual(ensemble: MatrixEnsemble, nu: EmpiricalMeasure, seed: int = 0) -> float:
    """``measure_distance(mu * nu, nu)``; zero for an exactly stationary cloud."""
    if abs(nu.mass - 1.0) > 1e-10:
        raise ValueError("measure must have mass 1")
    return measure_distance(pushforward(ensemble, nu), nu, seed)


def project_quotient(nu: EmpiricalMeasure, W: Subspace) -> EmpiricalMeasure:
    """Image of ``nu`` on ``P(V/W)`` in the coordinates ``W.complement()``.

    Atoms lying in ``P(W)`` have no image and are dropped; the rest are
    renormalized.  The coordinates match the float quotient ensemble.
    """
    C = W.complement().basis
    if C.shape[1] == 0:
        raise ValueError("quotient by the whole space")
    Y = nu.points @ C
    keep = np.linalg.norm(Y, axis=1) > 1e-12
    if not keep.any():
        raise ValueError("all mass lies in P(W)")
    return EmpiricalMeasure.create(Y[keep], nu.weights[keep], {"kind": "pushforward",
                                                               "parent": nu.provenance.get("kind"),
                                                               "map": f"quotient({W.label or W.dim})"}, cap=None)


# ---------------------------------------------------------------------------
# stopped products


def sign_det_classifier(g) -> str:
    return "+" if np.linalg.det(g) > 0 else "-"


def orthogonal_classifier(g, tol: float = 1e-9) -> str:
    """``"orthogonal"`` for scalar multiples of orthogonal matrices, else ``"other"``."""
    G = g.T @ g
    s = np.trace(G) / G.shape[0]
    return "orthogonal" if np.linalg.norm(G - s * np.eye(G.shape[0])) <= tol * max(s, 1.0) else "other"


def block_permutation_classifier(block_sizes):
    """Classifier for block-monomial matrices: the permutation of the blocks.

    The label of ``g`` is the tuple ``p`` with block ``j`` sent to block
    ``p[j]``; the identity label is ``(0, 1, ...)``.
    """
    sizes = list(block_sizes)
    offs = np.concatenate([[0], np.cumsum(sizes)])

    def classify(g):
        perm = []
        for j in range(len(sizes)):
            col = g[:, offs[j]:offs[j + 1]]
            mass = [np.linalg.norm(col[offs[i]:offs[i + 1]]) for i in range(len(sizes))]
            perm.append(int(np.argmax(mass)))
        return tuple(perm)

    return classify


@dataclass(frozen=True, eq=False)
class ComponentSample:
    """I.i.d. draws of the stopped product ``b_tau ... b_1``."""

    products: np.ndarray
    taus: np.ndarray
    identity_label: object
    seed: int

    @property
    def mean_tau(self) -> float:
        return float(self.taus.mean())

    @property
    def tau_stderr(self) -> float:
        return float(self.taus.std(ddof=1) / np.sqrt(len(self.taus))) if len(self.taus) > 1 else 0.0

    def to_dict(self) -> dict:
        return {"n_samples": int(len(self.taus)), "mean_tau": self.mean_tau, "tau_stderr": self.tau_stderr,
                "max_tau": int(self.taus.max()), "identity_label": str(self.identity_label), "seed": self.seed}


def _check_classifier(ensemble, classifier, rng, n_pairs):
    table = {}
    d = ensemble.dim
    for _ in range(n_pairs):
        words = []
        for _ in range(2):
            k = int(rng.integers(1, 4))
            g = np.eye(d)
            for i in _word(ensemble, k, rng):
                g = ensemble.atoms[i] @ g
            words.append(g)
        g, h = words
        key = (classifier(g), classifier(h))
        lab = classifier(g @ h)
        if table.setdefault(key, lab) != lab:
            raise ClassifierInconsistent(f"labels {key} compose to both {table[key]!r} and {lab!r}")


def resample_component(ensemble: MatrixEnsemble, classifier, n_samples: int = 1000, seed: int = 0,
                       max_tau: int = MAX_TAU, check_pairs: int = 200) -> ComponentSample:
    """Sample ``b_tau ... b_1`` with ``tau`` the first return to the identity label.

    The identity label is ``classifier(I)``.  Before sampling, ``check_pairs``
    random pairs of short products test that the label of a product depends
    only on the labels of its factors (:class:`ClassifierInconsistent`
    otherwise).  A walk longer than ``max_tau`` raises
    :class:`TimeoutNoReturn`.
    """
    d = ensemble.dim
    ident = classifier(np.eye(d))
    _check_classifier(ensemble, classifier, stream(seed, "classifier-check"), check_pairs)
    rng = stream(seed, "tau")
    atoms = ensemble.atoms
    products = np.empty((n_samples, d, d))
    taus = np.empty(n_samples, dtype=np.int64)
    block = 4096
    buf, pos = _word(ensemble, block, rng), 0
    for s in range(n_samples):
        g = np.eye(d)
        k = 0
        while True:
            if pos == block:
                buf, pos = _word(ensemble, block, rng), 0
            with np.errstate(over="ignore", invalid="ignore"):
                g = atoms[buf[pos]] @ g
            pos += 1
            k += 1
            if classifier(g) == ident:
                break
            if not np.isfinite(g).all():
                raise TimeoutNoReturn(f"product overflowed after {k} steps without returning")
            if k >= max_tau:
                raise TimeoutNoReturn(f"no return to the identity label within {max_tau} steps")
        products[s] = g
        taus[s] = k
    return ComponentSample(products, taus, ident, seed)

