"""Lyapunov spectrum, per-vector growth, cocycle averages, recurrence probe.

Exponents are in nats per step.  Statistical equality of two exponents uses
one rule everywhere (:func:`tied`): ``|a - b| <= 3 (se_a + se_b) + floor``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from math import ceil, log2

import numpy as np

from . import _kernels
from .ensemble import MatrixEnsemble, ProjectivePoint, Subspace, restrict_quotient
from .errors import DegenerateFrame, ExponentMismatch
from .parallel import pmap
from .rng import stream

DEFAULT_STEPS = 100_000
DEFAULT_TRIALS = 4
N_BATCHES = 10
TIE_SIGMAS = 3.0
TIE_FLOOR = 1e-3

__all__ = [
    "LyapunovReport",
    "CocycleAverage",
    "BlockSpec",
    "RecurrenceReport",
    "tied",
    "strictly_below",
    "estimate_spectrum",
    "top_exponent",
    "per_vector_exponent",
    "cocycle_average",
    "recurrence_ratio_probe",
]


def tied(a, se_a, b, se_b, floor=TIE_FLOOR) -> bool:
    """Whether two exponent estimates are statistically equal."""
    if np.isneginf(a) or np.isneginf(b):
        return bool(np.isneginf(a) and np.isneginf(b))
    return abs(a - b) <= TIE_SIGMAS * (se_a + se_b) + floor


def strictly_below(a, se_a, b, se_b, floor=TIE_FLOOR) -> bool:
    """``a < b`` and not tied."""
    return a < b and not tied(a, se_a, b, se_b, floor)


@dataclass(frozen=True)
class LyapunovReport:
    exponents: tuple
    stderr: tuple
    n_steps: int
    n_trials: int
    seed: int
    sum_stderr: float = 0.0
    method: str = "qr"
    convergence: tuple = field(default=(), repr=False)

    @property
    def top(self) -> float:
        return self.exponents[0]

    @property
    def top_stderr(self) -> float:
        return self.stderr[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("convergence")
        return d

    def write_csv(self, path) -> None:
        """Running estimates after each batch (trial-averaged), one column per exponent."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["steps"] + [f"lambda{i + 1}" for i in range(len(self.exponents))])
            for steps, row in self.convergence:
                w.writerow([int(steps)] + [repr(float(v)) for v in row])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class CocycleAverage:
    value: float
    stderr: float
    n_atoms_mu: int
    n_atoms_nu: int


def _trial_sums(args):
    atoms, weights, n_steps, seed, trial, stride = args
    rng = stream(seed, "spectrum", trial)
    if len(weights) == 1:
        idx = np.zeros(n_steps, dtype=np.int64)
    else:
        idx = rng.choice(len(weights), size=n_steps, p=weights).astype(np.int64)
    sums, ok = _kernels.qr_spectrum(atoms, idx, N_BATCHES, stride)
    return sums, ok


def estimate_spectrum(ensemble: MatrixEnsemble, n_steps: int = DEFAULT_STEPS, n_trials: int = DEFAULT_TRIALS,
                      seed: int = 0, stride: int | None = None, workers: int = 1) -> LyapunovReport:
    """Full Lyapunov spectrum by QR deflation of an orthonormal frame.

    Each trial pushes the identity frame through an independent word of
    ``n_steps`` atoms and re-orthonormalizes (every step for ``d <= 8``).
    Standard errors come from batch means (10 batches per trial).

    A single-atom ensemble is a deterministic cocycle: its exponents are the
    log moduli of the eigenvalues, returned exactly with zero error.
    """
    if n_steps < 100:
        raise ValueError("n_steps must be at least 100")
    d = ensemble.dim
    if ensemble.size == 1:
        ev = np.sort(np.log(np.abs(np.linalg.eigvals(ensemble.atoms[0]))))[::-1]
        exps = tuple(float(x) for x in ev)
        return LyapunovReport(exps, (0.0,) * d, n_steps, n_trials, seed, 0.0, "eigen", ((n_steps, exps),))
    if stride is None:
        stride = 1 if d <= 8 else 4
    atoms = np.ascontiguousarray(ensemble.atoms, dtype=np.float64)
    jobs = [(atoms, ensemble.weights, n_steps, seed, t, stride) for t in range(n_trials)]
    results = pmap(_trial_sums, jobs, workers)
    per = n_steps // N_BATCHES
    lens = np.full(N_BATCHES, per, dtype=float)
    lens[-1] = n_steps - per * (N_BATCHES - 1)
    batch_means = []
    for sums, ok in results:
        if not ok:
            raise DegenerateFrame("orthonormal frame lost rank; atoms may be near-singular")
        batch_means.append(sums / lens[:, None])
    B = np.concatenate(batch_means, axis=0)
    w = np.tile(lens, n_trials)
    est = (w[:, None] * B).sum(0) / w.sum()
    nb = B.shape[0]
    se = B.std(axis=0, ddof=1) / np.sqrt(nb) if nb > 1 else np.zeros(d)
    tot = B.sum(1)
    sum_se = float(tot.std(ddof=1) / np.sqrt(nb)) if nb > 1 else 0.0
    order = np.argsort(-est, kind="stable")
    S = np.mean([sums for sums, _ in results], axis=0)
    steps = np.cumsum(lens)
    running = np.cumsum(S, axis=0) / steps[:, None]
    conv = tuple((int(n), tuple(float(v) for v in row[order])) for n, row in zip(steps, running))
    return LyapunovReport(tuple(float(x) for x in est[order]), tuple(float(x) for x in se[order]),
                          n_steps, n_trials, seed, sum_se, "qr", conv)


def top_exponent(ensemble: MatrixEnsemble, W: Subspace | None = None, **kw) -> tuple[float, float]:
    """``(lambda_1, stderr)`` of the ensemble, or of its restriction to ``W``.

    The zero subspace has exponent ``-inf``.
    """
    if W is not None:
        if W.dim == 0:
            return float("-inf"), 0.0
        if W.dim < ensemble.dim:
            ensemble = restrict_quotient(ensemble, W, "restrict")
    rep = estimate_spectrum(ensemble, **kw)
    return rep.top, rep.top_stderr


def _vector_trial(args):
    atoms, weights, x, n_steps, seed, trial = args
    if len(weights) == 1:
        idx = np.zeros(n_steps, dtype=np.int64)
    else:
        idx = stream(seed, "vector", trial).choice(len(weights), size=n_steps, p=weights).astype(np.int64)
    return _kernels.vector_growth(atoms, idx, np.array(x, dtype=np.float64)) / n_steps


def per_vector_exponent(ensemble: MatrixEnsemble, x, n_steps: int = DEFAULT_STEPS, n_trials: int = DEFAULT_TRIALS,
                        seed: int = 0, workers: int = 1) -> tuple[float, float]:
    """Growth rate ``(1/n) log ||L_n x||`` averaged over trials."""
    v = x.rep if isinstance(x, ProjectivePoint) else np.asarray(x, dtype=float)
    if not np.any(v):
        raise ValueError("x must be nonzero")
    atoms = np.ascontiguousarray(ensemble.atoms, dtype=np.float64)
    vals = np.array(pmap(_vector_trial, [(atoms, ensemble.weights, v, n_steps, seed, t) for t in range(n_trials)],
                         workers))
    se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se


def cocycle_average(ensemble: MatrixEnsemble, nu) -> CocycleAverage:
    """Mean one-step log expansion ``sum_g sum_x w_g w_x log(|g x| / |x|)``.

    When ``nu`` comes from a simulated chain, its atoms are in time order and
    the standard error is taken from 10 batch means of the integrand.
    """
    pts, wts = nu.points, nu.weights
    if abs(wts.sum() - 1.0) > 1e-10:
        raise ValueError("measure must have total mass 1")
    gx = np.einsum("gij,nj->gni", ensemble.atoms, pts)
    f = np.log(np.linalg.norm(gx, axis=2) / np.linalg.norm(pts, axis=1)[None, :])
    integrand = ensemble.weights @ f
    value = float(integrand @ wts)
    se = 0.0
    if nu.provenance.get("kind") in ("cesaro", "backward") and len(wts) >= 2 * N_BATCHES:
        chunks = np.array_split(np.arange(len(wts)), N_BATCHES)
        means = np.array([integrand[c] @ wts[c] / wts[c].sum() for c in chunks])
        se = float(means.std(ddof=1) / np.sqrt(N_BATCHES))
    return CocycleAverage(value, se, ensemble.size, len(wts))


@dataclass(frozen=True)
class BlockSpec:
    """One block of an ensemble: its restriction to, or quotient by, a subspace."""

    subspace: Subspace
    kind: str = "restrict"

    def ensemble(self, ensemble: MatrixEnsemble) -> MatrixEnsemble:
        if self.kind == "full" or (self.kind == "restrict" and self.subspace.dim == ensemble.dim) \
                or (self.kind == "quotient" and self.subspace.dim == 0):
            return ensemble
        return restrict_quotient(ensemble, self.subspace, self.kind)


@dataclass
class RecurrenceReport:
    series: np.ndarray = field(repr=False)
    sup: float
    inf_on_subsequence: float
    returns: int
    required_returns: int
    verdict: str
    exponents: tuple
    note: str = "heuristic probe; not a proof"

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "series"}
        d["n_steps"] = int(self.series.shape[0])
        return d

    def write_csv(self, path, every: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "log_ratio"])
            for n in range(0, len(self.series), every):
                w.writerow([n + 1, repr(float(self.series[n]))])


def recurrence_ratio_probe(ensemble: MatrixEnsemble, rep_a: BlockSpec, rep_b: BlockSpec, n_steps: int = 1_000_000,
                           seed: int = 0, lyapunov_steps: int = 20_000, band: float = 1.0) -> RecurrenceReport:
    """Track ``log ||rho(b_1...b_n)|| - log ||rho'(b_1...b_n)||`` along one path.

    Both blocks must have tied top exponents (else :class:`ExponentMismatch`).
    The verdict is RECURRENT when the series comes within ``band`` nats of its
    running maximum at least ``ceil(log2 N)`` times; this is a heuristic
    witness of a subsequence along which the norm ratio stays bounded below.
    Norms are Frobenius norms.
    """
    Ea, Eb = rep_a.ensemble(ensemble), rep_b.ensemble(ensemble)
    ra = estimate_spectrum(Ea, n_steps=lyapunov_steps, seed=seed)
    rb = estimate_spectrum(Eb, n_steps=lyapunov_steps, seed=seed)
    if not tied(ra.top, ra.top_stderr, rb.top, rb.top_stderr):
        raise ExponentMismatch(
            f"top exponents differ: {ra.top:.6g}+-{ra.top_stderr:.2g} vs {rb.top:.6g}+-{rb.top_stderr:.2g}")
    if ensemble.size == 1:
        idx = np.zeros(n_steps, dtype=np.int64)
    else:
        idx = stream(seed, "recurrence").choice(ensemble.size, size=n_steps, p=ensemble.weights).astype(np.int64)
    la = _kernels.backward_lognorms(Ea.atoms, idx)
    lb = _kernels.backward_lognorms(Eb.atoms, idx)
    series = la - lb
    runmax = np.maximum.accumulate(series)
    near = series >= runmax - band
    returns = int(near.sum())
    required = int(ceil(log2(max(n_steps, 2))))
    verdict = "RECURRENT" if returns >= required else "NOT_RECURRENT"
    return RecurrenceReport(series, float(series.max()), float(series[near].min()), returns, required, verdict,
                            ((ra.top, ra.top_stderr), (rb.top, rb.top_stderr)))
