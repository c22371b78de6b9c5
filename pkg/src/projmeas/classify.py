"""Decision layer: support-span semisimplicity, lift existence, compact orbits.

Every verdict comes with the numbers it was decided from (exponent
estimates with standard errors, residuals, escape profiles).  When the
invariant lattice is incomplete, or a tolerance decision is ambiguous, the
answer is UNDECIDED rather than a guess.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ensemble import MatrixEnsemble, ProjectivePoint, Subspace, canonicalize, restrict_quotient
from .errors import NotInvariant, ProjmeasError, ToleranceAmbiguity
from .invariant import (
    Lattice,
    ReducibilityCertificate,
    complete_reducibility_certificate,
    fkh_filtration,
    invariant_subspace_lattice,
    spin,
)
from .lyapunov import estimate_spectrum, strictly_below
from .rng import stream
from .stationary import (
    EmpiricalMeasure,
    EscapeProfile,
    _chain,
    cesaro_measure,
    escape_mass_profile,
)

SNAP_TOL = 0.05
IMAGE_TOL = 0.02
DEGENERATION_TOL = 0.01
CLASSIFY_STEPS = 20_000
SEARCH_SCHEDULE = (100, 1_000, 10_000, 100_000, 1_000_000)

__all__ = [
    "SpanNotInvariant",
    "MeasureCheck",
    "CriticalCertificate",
    "LiftDecision",
    "OrbitProbe",
    "FoundMeasure",
    "critical_semisimplicity_check",
    "decide_lift_existence",
    "orbit_compactness_probe",
    "find_stationary_measures",
]


class SpanNotInvariant(ProjmeasError):
    """The estimated support span is not close to any invariant subspace found."""


def _dumps(d) -> str:
    return json.dumps(d, indent=2, sort_keys=True)


def _exp(v):
    return [float(v[0]), float(v[1])]


class _Tops:
    """Cached top exponents of restrictions, keyed by subspace fingerprint."""

    def __init__(self, ensemble, n_steps, seed):
        self.E, self.n_steps, self.seed = ensemble, n_steps, seed
        self.cache = {}

    def __call__(self, U: Subspace):
        if U.dim == 0:
            return float("-inf"), 0.0
        key = U.fingerprint()
        if key not in self.cache:
            F = self.E if U.dim == self.E.dim else restrict_quotient(self.E, U, "restrict")
            rep = estimate_spectrum(F, n_steps=self.n_steps, seed=self.seed)
            self.cache[key] = (rep.top, rep.top_stderr)
        return self.cache[key]


def _snap(S: Subspace, lattice: Lattice, tol=SNAP_TOL):
    """Lattice member matching ``S``; else the smallest member containing it.

    Returns ``(member, matched)``.
    """
    same = [U for U in lattice.subspaces if U.dim == S.dim]
    if same:
        best = min(same, key=lambda U: U.max_angle(S))
        if best.max_angle(S) <= tol:
            return best, True
    hulls = [U for U in lattice.subspaces if U.dim > S.dim and _angle_into(S, U) <= tol]
    if hulls:
        return min(hulls, key=lambda U: (U.dim, _angle_into(S, U))), False
    return None, False


def _angle_into(S: Subspace, U: Subspace) -> float:
    """Largest angle between a unit vector of ``S`` and ``U``."""
    if S.dim == 0:
        return 0.0
    R = S.basis - U.basis @ (U.basis.T @ S.basis)
    return float(np.arcsin(min(1.0, np.linalg.norm(R, 2))))


# ---------------------------------------------------------------------------
# critical case


@dataclass(eq=False)
class MeasureCheck:
    measure_id: str
    span: Subspace
    snapped: Subspace | None
    span_invariant: bool
    certificate: ReducibilityCertificate | None
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return self.certificate.verdict if self.certificate is not None else "UNKNOWN"

    def to_dict(self) -> dict:
        return {
            "measure": self.measure_id,
            "span_dim": self.span.dim,
            "snapped_dim": None if self.snapped is None else self.snapped.dim,
            "snapped_label": None if self.snapped is None else self.snapped.label,
            "span_invariant": self.span_invariant,
            "verdict": self.verdict,
            "decomposition_dims": [] if self.certificate is None else [U.dim for U in self.certificate.decomposition],
            "notes": list(self.notes),
        }


@dataclass(eq=False)
class CriticalCertificate:
    critical: bool
    results: list
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        if not self.critical:
            return "NOT_CRITICAL"
        vs = [r.verdict for r in self.results]
        if "FAIL" in vs:
            return "FAIL"
        if vs and all(v == "PASS" for v in vs):
            return "PASS"
        return "UNKNOWN"

    def to_dict(self) -> dict:
        return {"critical": self.critical, "verdict": self.verdict,
                "results": [r.to_dict() for r in self.results], "notes": list(self.notes)}

    def dumps(self) -> str:
        return _dumps(self.to_dict())


def critical_semisimplicity_check(ensemble: MatrixEnsemble, measures, lattice: Lattice | None = None,
                                  filtration=None, seed: int = 0) -> CriticalCertificate:
    """Check that the support span of each stationary measure is semisimple.

    Only meaningful in the critical case; with a non-critical filtration the
    certificate is returned empty.  Each span estimate is snapped to a
    lattice member within 0.05 rad.  If none matches, the result records
    ``SpanNotInvariant`` and falls back to the smallest lattice member that
    contains the estimate.
    """
    if lattice is None:
        lattice = invariant_subspace_lattice(ensemble, seed=seed)
    if filtration is not None and not filtration.critical:
        return CriticalCertificate(False, [], ["filtration is not critical; the check does not apply"])
    results = []
    for i, nu in enumerate(measures):
        mid = nu.provenance.get("id", f"nu{i}") if isinstance(nu, EmpiricalMeasure) else f"nu{i}"
        S = nu.span_estimate
        U, matched = _snap(S, lattice)
        notes = []
        if not matched:
            notes.append(SpanNotInvariant.__name__)
        if U is None:
            results.append(MeasureCheck(mid, S, None, False, None, notes + ["no invariant subspace contains the span"]))
            continue
        if not matched:
            notes.append(f"using invariant hull of dim {U.dim}")
        cert = complete_reducibility_certificate(ensemble, U, seed=seed, lattice=lattice)
        results.append(MeasureCheck(mid, S, U, matched, cert, notes))
    notes = [] if lattice.complete else ["lattice incomplete"]
    return CriticalCertificate(True, results, notes)


# ---------------------------------------------------------------------------
# stationary measure search


@dataclass(eq=False)
class FoundMeasure:
    measure: EmpiricalMeasure
    subspace: Subspace
    profiles: dict

    def to_dict(self) -> dict:
        return {"subspace_dim": self.subspace.dim, "subspace": self.subspace.label,
                "atoms": self.measure.size, "profiles": {k: p.to_dict() for k, p in self.profiles.items()}}


def find_stationary_measures(ensemble: MatrixEnsemble, lattice: Lattice | None = None, n: int = 10_000,
                             seed: int = 0, max_members: int = 16):
    """Cesaro estimates of ergodic stationary measures, one per lattice member.

    For each nonzero lattice member ``U`` a chain is started at a random
    point of ``U``.  If it escapes toward a proper invariant subspace of
    ``U`` the start is discarded (its limit lives on that smaller member,
    which is explored separately).  Escape is judged on checkpoints up to
    ``10^6`` steps regardless of ``n``, since null-recurrent escape is slow.  Returns ``(found, discarded)``.
    """
    if lattice is None:
        lattice = invariant_subspace_lattice(ensemble, seed=seed)
    members = [U for U in lattice.subspaces if U.dim > 0][:max_members]
    found, discarded = [], []
    for j, U in enumerate(members):
        EU = ensemble if U.dim == ensemble.dim else restrict_quotient(ensemble, U, "restrict")
        inner = [U.basis.T @ L.basis for L in lattice.subspaces if 0 < L.dim < U.dim and U.contains(L)]
        x0 = canonicalize(stream(seed, "search-x0", j).normal(size=U.dim))
        profiles, escaping = {}, False
        for i, B in enumerate(inner):
            L = Subspace.span(B, f"L{i}")
            prof = escape_mass_profile(EU, L, x0, schedule=SEARCH_SCHEDULE, seed=seed)
            profiles[L.label] = prof
            escaping |= prof.verdict == "ESCAPING"
        if escaping:
            discarded.append((U, profiles))
            continue
        nu = cesaro_measure(EU, x0, n=n, burn_in=n // 10, seed=seed)
        pts = nu.points @ U.basis.T
        prov = dict(nu.provenance, id=f"nu[{U.label}]", subspace=U.label)
        found.append(FoundMeasure(EmpiricalMeasure.create(pts, nu.weights, prov, cap=None), U, profiles))
    return found, discarded


# ---------------------------------------------------------------------------
# lift existence


@dataclass(eq=False)
class LiftDecision:
    answer: str
    witness: Subspace | None
    evidence: dict
    corroboration: EscapeProfile | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "answer": self.answer,
            "witness": None if self.witness is None else {"label": self.witness.label, "dim": self.witness.dim},
            "evidence": self.evidence,
            "corroboration": None if self.corroboration is None else self.corroboration.to_dict(),
            "notes": list(self.notes),
        }

    def dumps(self) -> str:
        return _dumps(self.to_dict())


def _quotient_coords(ensemble, W, nubar_span):
    """Orthonormal basis of ``V_nubar`` in the quotient coordinates ``W.complement()``."""
    C = W.complement().basis
    if nubar_span.ambient_dim == C.shape[1]:
        return nubar_span
    if nubar_span.ambient_dim != ensemble.dim:
        raise ValueError("nubar_span must live in V or in V/W")
    return Subspace.span(C.T @ nubar_span.basis, "V_nubar", dim=C.shape[1])


def decide_lift_existence(ensemble: MatrixEnsemble, W: Subspace, nubar_span: Subspace | None = None,
                          nubar_lyap=None, lattice: Lattice | None = None, n_steps: int = CLASSIFY_STEPS,
                          seed: int = 0, order: str = "lattice", corroborate: bool = True) -> LiftDecision:
    """Does a stationary measure on ``P(V) - P(W)`` lift one on ``P(V/W)``?

    ``nubar_span`` is the support span ``V_nubar`` of the quotient measure,
    given either in quotient coordinates (``W.complement()``) or as a
    subspace of ``V`` (projected onto ``W^perp``); ``None`` means the whole
    quotient.  ``nubar_lyap`` optionally overrides the estimate of its top
    exponent as ``(value, stderr)``.

    If ``lambda_1(V_nubar)`` is strictly above ``lambda_1(W)`` the answer is
    EXISTS without a witness (expanding-case bypass).  Otherwise lattice
    members ``W'`` are searched for ``lambda_1(W' & W) < lambda_1(V_nubar)``
    with image ``(W' + W)/W`` equal to ``V_nubar`` within 0.02 rad.  No
    witness gives NOT_EXISTS on a complete lattice and UNDECIDED otherwise.
    """
    d, k = ensemble.dim, W.dim
    if not 0 < k < d:
        raise ValueError("W must be a nonzero proper subspace")
    if lattice is None:
        lattice = invariant_subspace_lattice(ensemble, seed=seed)
    tops = _Tops(ensemble, n_steps, seed)
    C = W.complement().basis
    Q = restrict_quotient(ensemble, W, "quotient")
    Vn = Subspace.full(d - k).with_label("V/W") if nubar_span is None else _quotient_coords(ensemble, W, nubar_span)
    notes = []
    if nubar_lyap is None:
        try:
            EQ = Q if Vn.dim == Q.dim else restrict_quotient(Q, Vn, "restrict")
        except NotInvariant as exc:
            return LiftDecision("UNDECIDED", None, {"nubar_span_residual": exc.residual},
                                notes=["V_nubar is not invariant in the quotient"])
        rep = estimate_spectrum(EQ, n_steps=n_steps, seed=seed)
        nubar_lyap = (rep.top, rep.top_stderr)
    lam_W = tops(W)
    evidence = {"lambda_W": _exp(lam_W), "lambda_nubar": _exp(nubar_lyap), "tie_rule": "3 sigma + 1e-3 floor"}
    profile = None
    if corroborate:
        x0 = _start_off(W, C, Vn, seed)
        profile = escape_mass_profile(ensemble, W, x0, seed=seed)
    if strictly_below(*lam_W, *nubar_lyap):
        notes.append("expanding-case bypass: lambda_1(V_nubar) > lambda_1(W)")
        return LiftDecision("EXISTS", None, evidence, profile, notes)
    candidates = list(lattice.subspaces)
    if order == "reversed":
        candidates = candidates[::-1]
    elif order != "lattice":
        stream(seed, "order").shuffle(candidates)
    tried = []
    for Wp in candidates:
        img = Subspace.span(C.T @ Wp.basis, dim=d - k) if Wp.dim else Subspace.zero(d - k)
        if img.dim != Vn.dim:
            continue
        angle = img.max_angle(Vn)
        cap = Wp.intersect(W)
        lam_cap = tops(cap)
        ok = angle <= IMAGE_TOL and strictly_below(*lam_cap, *nubar_lyap)
        tried.append({"label": Wp.label, "dim": Wp.dim, "image_angle": angle, "lambda_cap": _exp(lam_cap),
                      "accepted": bool(ok)})
        if ok:
            evidence.update(candidates=tried, lambda_cap=_exp(lam_cap), isomorphism_residual=angle)
            return LiftDecision("EXISTS", Wp, evidence, profile, notes)
    evidence["candidates"] = tried
    if lattice.complete:
        return LiftDecision("NOT_EXISTS", None, evidence, profile, notes)
    notes.append("lattice incomplete; a witness may have been missed")
    return LiftDecision("UNDECIDED", None, evidence, profile, notes)


def _start_off(W, C, Vn, seed):
    """Generic start whose quotient image lies in ``V_nubar``."""
    rng = stream(seed, "lift-x0")
    v = W.basis @ rng.normal(size=W.dim) + C @ (Vn.basis @ rng.normal(size=Vn.dim))
    return canonicalize(v)


# ---------------------------------------------------------------------------
# compact orbits


@dataclass(eq=False)
class OrbitProbe:
    projected_bounded: bool
    closure_in_f: bool
    verdict: str
    evidence: dict
    notes: list = field(default_factory=lambda: ["heuristic probe; not a proof"])

    def to_dict(self) -> dict:
        return {"projected_bounded": self.projected_bounded, "closure_in_F": self.closure_in_f,
                "verdict": self.verdict, "evidence": self.evidence, "notes": list(self.notes)}

    def dumps(self) -> str:
        return _dumps(self.to_dict())


def _angles_to(points, B):
    r = np.linalg.norm(points - (points @ B) @ B.T, axis=1)
    return np.arcsin(np.minimum(r, 1.0))


def orbit_compactness_probe(ensemble: MatrixEnsemble, x, n_samples: int = 4, n_steps: int = 100_000, seed: int = 0,
                            lyapunov_steps: int = CLASSIFY_STEPS) -> OrbitProbe:
    """Probe whether the orbit of ``[x]`` can carry a stationary measure.

    ``V_O`` is the invariant span of the orbit and ``F`` the second space of
    its filtration.  ``n_samples`` random trajectories of ``n_steps`` steps
    are run from ``x``.  The projected orbit counts as bounded when every
    projected state stays at least 0.01 rad from every proper invariant
    subspace of ``V_O / F``.  The closure condition holds when every state
    within 0.01 rad of a proper invariant subspace of ``V_O`` is also within
    0.01 rad of ``P(F)``.
    """
    v = x.rep if isinstance(x, ProjectivePoint) else canonicalize(x)
    d = ensemble.dim
    VO = Subspace.span(spin(list(ensemble.atoms), v.reshape(-1, 1), False), "V_O", dim=d)
    if VO.dim == d:
        VO = Subspace(np.eye(d), "V_O")
    EO = ensemble if VO.dim == d else restrict_quotient(ensemble, VO, "restrict")
    xo = VO.basis.T @ v
    try:
        lat = invariant_subspace_lattice(EO, seed=seed)
        filt = fkh_filtration(EO, n_steps=lyapunov_steps, seed=seed, lattice=lat)
    except ToleranceAmbiguity as exc:
        return OrbitProbe(False, False, "UNDECIDED", {"tolerance": str(exc)})
    F = filt.spaces[1] if len(filt.spaces) > 1 else Subspace.zero(VO.dim)
    proper = [L for L in lat.proper()]
    Cq = F.complement().basis
    quotient_members = []
    for L in proper:
        if F.dim and not L.contains(F):
            continue
        img = Subspace.span(Cq.T @ L.basis, dim=Cq.shape[1]) if L.dim else None
        if img is not None and 0 < img.dim < Cq.shape[1]:
            quotient_members.append(img)
    min_q = np.inf
    bad_closure = 0
    for s in range(n_samples):
        traj = _chain(EO, xo, n_steps, stream(seed, "orbit", s))
        if quotient_members:
            Y = traj @ Cq
            Y = Y / np.linalg.norm(Y, axis=1, keepdims=True)
            for M in quotient_members:
                min_q = min(min_q, float(_angles_to(Y, M.basis).min()))
        near_any = np.zeros(traj.shape[0], bool)
        for L in proper:
            near_any |= _angles_to(traj, L.basis) < DEGENERATION_TOL
        if near_any.any():
            near_f = _angles_to(traj[near_any], F.basis) < DEGENERATION_TOL if F.dim else np.zeros(near_any.sum(), bool)
            bad_closure += int((~near_f).sum())
    bounded = bool(min_q >= DEGENERATION_TOL)
    closure = bad_closure == 0
    if bounded and closure:
        verdict = "LIKELY-SUPPORTS"
    elif not bounded and not closure:
        verdict = "LIKELY-NOT"
    else:
        verdict = "UNDECIDED"
    evidence = {
        "orbit_span_dim": VO.dim,
        "F_dim": F.dim,
        "filtration_dims": filt.dims,
        "min_projected_angle": None if not np.isfinite(min_q) else min_q,
        "states_off_F_near_invariant": bad_closure,
        "lattice_complete": lat.complete,
        "n_samples": n_samples,
        "n_steps": n_steps,
        "seed": seed,
    }
    return OrbitProbe(bounded, closure, verdict, evidence)
