"""Analytic upper and lower bounds on incompatibility robustness.

Upper bounds come from explicit dual points of the robustness SDPs and are
expressed through a handful of spectral quantities of the set:

* ``f   = sum tr(A^2)/d``
* ``lam = max_j  max-eig( sum_x A_{j_x|x} )``
* ``g``: a model-dependent offset (``sum (tr A/d)^2``, ``sum_x 1/n_x``,
  ``sum_x min_a tr A/d`` or ``min_j min-eig(sum_x A_{j_x|x})``)

Lower bounds come from explicit parent POVMs: an ansatz built from
anticommutators of rank-one elements, cloning-type parents, and a cascade of
pair parents for more than two measurements.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .noise import NoiseModelKind, marginals
from .povm import DomainError, MeasurementSet, Povm, PovmError, rank_one_refinement

D, R, P, JM, G = (NoiseModelKind.DEPOLARISING, NoiseModelKind.RANDOM, NoiseModelKind.PROBABILISTIC,
                  NoiseModelKind.JOINTLY_MEASURABLE, NoiseModelKind.GENERALISED)

CRITICAL_TOL = 1e-9


class TrivialSetWarning(UserWarning):
    """The upper-bound formula degenerates (f = g); the bound reported is 1."""


class ZeroTraceElement(PovmError):
    pass


class NotRankOne(PovmError):
    pass


class NotBlockStructured(PovmError):
    pass


class PreconditionFailed(ValueError):
    pass


class NotNormalized(ValueError):
    pass


# --------------------------------------------------------------------------
# Spectral quantities


def multi_index_sums(s: MeasurementSet, normalise: bool = False) -> np.ndarray:
    """``sum_x A_{j_x|x}`` for every multi-index ``j``, shape ``(prod n_x, d, d)``."""
    k = s.k
    total = None
    for x, m in enumerate(s):
        el = m.elements
        if normalise:
            tr = m.traces()
            if np.any(tr <= 0):
                raise ZeroTraceElement("trace-normalisation needs non-zero elements")
            el = el / tr[:, None, None]
        shape = [1] * k + [s.dim, s.dim]
        shape[x] = m.n_outcomes
        term = el.reshape(shape)
        total = term if total is None else total + term
    return total.reshape((-1, s.dim, s.dim))


@dataclass(frozen=True)
class Quantities:
    d: int
    k: int
    f: float
    lam: float
    g_d: float
    g_r: float
    g_p: float
    g_jm: float
    f_tr: float | None
    lam_tr: float | None
    g_tr: float
    g_jm_tr: float | None

    def offset(self, kind) -> float:
        kind = NoiseModelKind.parse(kind)
        return {D: self.g_d, R: self.g_r, P: self.g_p, JM: self.g_jm, G: 0.0}[kind]


def compute_quantities(s: MeasurementSet) -> Quantities:
    d = s.dim
    els = [m.elements for m in s]
    trs = [m.traces() for m in s]
    f = sum(float(np.real(np.einsum("aij,aji->", e, e))) for e in els) / d
    sums = np.linalg.eigvalsh(multi_index_sums(s))
    lam = float(sums[:, -1].max())
    g_jm = float(sums[:, 0].min())
    g_d = sum(float(np.sum((t / d) ** 2)) for t in trs)
    g_r = sum(1.0 / m.n_outcomes for m in s)
    g_p = sum(float(t.min()) / d for t in trs)
    if all(np.all(t > 0) for t in trs):
        f_tr = sum(float(np.real(np.einsum("aij,aji->a", e, e)) @ (1 / t)) for e, t in zip(els, trs)) / d
        w = np.linalg.eigvalsh(multi_index_sums(s, normalise=True))
        lam_tr, g_jm_tr = float(w[:, -1].max()), float(w[:, 0].min())
    else:
        f_tr = lam_tr = g_jm_tr = None
    return Quantities(d, s.k, f, lam, g_d, g_r, g_p, g_jm, f_tr, lam_tr, s.k / d, g_jm_tr)


# --------------------------------------------------------------------------
# Upper bounds


def _ratio(num, den):
    if abs(den) <= 1e-12:
        warnings.warn("upper-bound formula degenerates (f = g); reporting 1", TrivialSetWarning, stacklevel=3)
        return 1.0
    return num / den


def upper_bound(s: MeasurementSet, kind, q: Quantities | None = None) -> float:
    """``(lam - g)/(f - g)`` (``lam/f`` for generalised noise).

    Values above one carry no information; they are returned unclipped.
    """
    kind = NoiseModelKind.parse(kind)
    q = compute_quantities(s) if q is None else q
    if kind is G:
        return _ratio(q.lam, q.f)
    g = q.offset(kind)
    return _ratio(q.lam - g, q.f - g)


def upper_bound_certificate(s: MeasurementSet, kind, q: Quantities | None = None):
    """Dual point ``(X, N)`` whose certified value equals :func:`upper_bound`.

    Orientation matches :func:`incompat.robustness.dual_upper_bound`.
    """
    kind = NoiseModelKind.parse(kind)
    q = compute_quantities(s) if q is None else q
    eye = np.eye(s.dim)
    if kind in (D, R, P):
        return [q.lam * eye / s.k - m.elements for m in s], None
    if kind is JM:
        return [m.elements - q.g_jm * eye / s.k for m in s], (q.lam - q.g_jm) * eye
    return [m.elements.copy() for m in s], q.lam * eye


def trace_normalized_upper_bound(s: MeasurementSet, kind, q: Quantities | None = None) -> float:
    """Upper bound from the dual point built on ``A/tr(A)``."""
    kind = NoiseModelKind.parse(kind)
    q = compute_quantities(s) if q is None else q
    if q.f_tr is None:
        raise ZeroTraceElement("trace-normalised bound needs every element to have non-zero trace")
    if kind is G:
        return _ratio(q.lam_tr, q.f_tr)
    g = q.g_jm_tr if kind is JM else q.g_tr
    return _ratio(q.lam_tr - g, q.f_tr - g)


def trace_normalized_certificate(s: MeasurementSet, kind, q: Quantities | None = None):
    kind = NoiseModelKind.parse(kind)
    q = compute_quantities(s) if q is None else q
    if q.f_tr is None:
        raise ZeroTraceElement("trace-normalised bound needs every element to have non-zero trace")
    eye = np.eye(s.dim)
    hats = [m.elements / m.traces()[:, None, None] for m in s]
    if kind in (D, R, P):
        return [q.lam_tr * eye / s.k - h for h in hats], None
    if kind is JM:
        return [h - q.g_jm_tr * eye / s.k for h in hats], (q.lam_tr - q.g_jm_tr) * eye
    return hats, q.lam_tr * eye


# --------------------------------------------------------------------------
# Universal lower bounds


def depolarising_pair_lower_bound(d: int) -> float:
    r = math.sqrt(d * d + 4 * d - 4)
    return (d - 2 + r) / (4 * (d - 1)) if d > 1 else 1.0


def random_pair_lower_bound(n_a: int, n_b: int) -> float:
    return 0.5 * (1 + 1 / (math.sqrt(n_a * n_b) + 1))


def jm_pair_lower_bound(d: int) -> float:
    r = math.sqrt(d * d + 4 * d - 4)
    return 2 * r / (3 * d - 2 + r)


def generalised_pair_lower_bound(d: int) -> float:
    return 0.5 * (1 + 1 / math.sqrt(d))


def cloning_lower_bound(d: int, k: int = 2) -> float:
    """Visibility reached by the symmetric cloning-type parent for ``k`` measurements."""
    return (1 + (k - 1) / (d + 1)) / k


QUBIT_TRIPLET = {
    D: 1 / math.sqrt(3),
    R: 1 / math.sqrt(3),
    P: 1 / math.sqrt(3),
    JM: math.sqrt(3) - 1,
    G: 0.5 * (1 + 1 / math.sqrt(3)),
}


def relation_transfer(eta: float, d: int, target, source=D, n_max: int | None = None) -> float:
    """Lower bound on one robustness from another.

    ``d -> jm``: ``eta + (1-eta)*2/(d + sqrt(d^2+4d-4))``;
    ``d -> g``: ``eta + (1-eta)/d``;
    ``r -> g``: ``eta + (1-eta)/n_max``.
    """
    target, source = NoiseModelKind.parse(target), NoiseModelKind.parse(source)
    if source is D and target is JM:
        return eta + (1 - eta) * 2 / (d + math.sqrt(d * d + 4 * d - 4))
    if source is D and target is G:
        return eta + (1 - eta) / d
    if source is R and target is G:
        if n_max is None:
            raise ValueError("the random-to-generalised transfer needs the largest outcome count")
        return eta + (1 - eta) / n_max
    raise ValueError(f"no transfer from {source.value} to {target.value}")


def cascade_visibility(k: int, pair_eta: float) -> float:
    """Visibility of the cascade of pair parents (``k = 2^n`` or ``k = 3``)."""
    if k == 1:
        return 1.0
    n = int(round(math.log2(k)))
    if 2**n == k:
        return pair_eta**n
    if k == 3:
        return pair_eta * (1 + 2 * pair_eta) / 3
    raise DomainError("closed-form cascade visibility only for k = 3 or a power of two")


def universal_lower_bound(kind, d: int, outcome_counts: Sequence[int] | None = None, k: int | None = None) -> float:
    """Best universal lower bound valid for every set of the given shape."""
    kind = NoiseModelKind.parse(kind)
    if outcome_counts is not None:
        k = len(outcome_counts)
    k = 2 if k is None else k
    if d < 2:
        return 1.0
    if k == 1:
        return 1.0
    if k == 2:
        if kind is D:
            return depolarising_pair_lower_bound(d)
        if kind is R:
            if outcome_counts is None:
                raise ValueError("the random-noise bound needs the outcome counts")
            return random_pair_lower_bound(*outcome_counts)
        if kind is P:
            best = depolarising_pair_lower_bound(d)
            if outcome_counts is not None:
                best = max(best, random_pair_lower_bound(*outcome_counts))
            return best
        if kind is JM:
            return jm_pair_lower_bound(d)
        return generalised_pair_lower_bound(d)
    if kind is R:
        raise DomainError("no universal random-noise bound for more than two measurements")
    if d == 2 and k == 3:
        return QUBIT_TRIPLET[kind]
    base = cloning_lower_bound(d, k)
    if kind is G:
        best = relation_transfer(base, d, G)
        if k == 3 or (k & (k - 1)) == 0:
            best = max(best, cascade_visibility(k, generalised_pair_lower_bound(d)))
        return best
    if kind is JM:
        return relation_transfer(base, d, JM)
    if k == 3 or (k & (k - 1)) == 0:
        return max(base, cascade_visibility(k, depolarising_pair_lower_bound(d)))
    return base


# --------------------------------------------------------------------------
# Ansatz parents


@dataclass
class AnsatzParent:
    parent: np.ndarray  # (n_A, n_B, d, d)
    normalisation: float
    min_eigenvalues: np.ndarray  # (n_A, n_B)
    formula_eigenvalues: np.ndarray | None = None  # rank-one closed form, (n_A, n_B, 3)

    @property
    def psd(self) -> bool:
        return bool(self.min_eigenvalues.min() >= -1e-10)


def _sqrtm_psd_batch(els):
    w, v = np.linalg.eigh(els)
    return (v * np.sqrt(np.clip(w, 0, None))[:, None, :]) @ v.conj().transpose(0, 2, 1)


def ansatz_parent(A: Povm, B: Povm, alpha=0.0, beta=0.0, gamma=0.0, delta: float = 0.0) -> AnsatzParent:
    """``G_ab ∝ {A_a,B_b} + alpha_b A_a + beta_a B_b + gamma_ab I + delta (A^½BA^½ + B^½AB^½)``.

    ``alpha`` (length ``n_B``), ``beta`` (length ``n_A``) and ``gamma``
    (``n_A x n_B``) broadcast from scalars.  The sum over all outcomes is
    ``(2 + sum alpha + sum beta + sum gamma + 2 delta) I``, which fixes the
    normalisation.  For rank-one inputs the closed-form spectrum is also
    reported.
    """
    if A.dim != B.dim:
        raise DomainError("the two POVMs act on different spaces")
    d = A.dim
    na, nb = A.n_outcomes, B.n_outcomes
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (nb,))
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (na,))
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (na, nb))
    a = A.elements[:, None]
    b = B.elements[None, :]
    eye = np.eye(d)
    raw = a @ b + b @ a + alpha[None, :, None, None] * a + beta[:, None, None, None] * b
    raw = raw + gamma[:, :, None, None] * eye
    if delta:
        sa = _sqrtm_psd_batch(A.elements)[:, None]
        sb = _sqrtm_psd_batch(B.elements)[None, :]
        raw = raw + delta * (sa @ b @ sa + sb @ a @ sb)
    norm = 2 + alpha.sum() + beta.sum() + gamma.sum() + 2 * delta
    total = raw.sum(axis=(0, 1))
    if norm <= 0 or np.max(np.abs(total - norm * eye)) > 1e-8 * max(1.0, abs(norm)):
        raise NotNormalized("ansatz does not sum to a positive multiple of the identity")
    parent = raw / norm
    mins = np.linalg.eigvalsh(parent.reshape(-1, d, d))[:, 0].reshape(na, nb)
    formula = None
    if A.is_rank_one() and B.is_rank_one():
        formula = rank_one_ansatz_eigenvalues(A, B, alpha, beta, gamma, delta) / norm
    return AnsatzParent(parent, float(norm), mins, formula)


def rank_one_ansatz_eigenvalues(A: Povm, B: Povm, alpha, beta, gamma, delta=0.0) -> np.ndarray:
    """Closed-form spectrum of the unnormalised ansatz for rank-one elements.

    Returns ``(n_A, n_B, 3)``: the two eigenvalues on ``span{A_a, B_b}``
    followed by the eigenvalue ``gamma_ab`` of the complement (meaningful when
    the complement is non-trivial).
    """
    ta = A.traces()[:, None]
    tb = B.traces()[None, :]
    tab = np.real(np.einsum("aij,bji->ab", A.elements, B.elements))
    safe_a = np.where(ta > 0, ta, 1.0)
    safe_b = np.where(tb > 0, tb, 1.0)
    at = np.asarray(alpha)[None, :] + delta * tab / safe_a
    bt = np.asarray(beta)[:, None] + delta * tab / safe_b
    disc = (at * ta - bt * tb) ** 2 + 4 * tab * (at + tb) * (bt + ta)
    root = np.sqrt(np.clip(disc, 0, None))
    base = at * ta + bt * tb + 2 * tab
    gamma = np.broadcast_to(gamma, base.shape)
    return np.stack([0.5 * (base - root) + gamma, 0.5 * (base + root) + gamma, gamma], axis=-1)


def _ansatz_xy(d: int):
    r = math.sqrt(d * d + 4 * d - 4)
    x = (-2 + r) / d
    y = ((d + 2 - r) / (2 * d)) ** 2
    return x, y


def depolarising_xy_parent(A: Povm, B: Povm, x: float, y: float) -> AnsatzParent:
    """``{A,B} + x(tr B A + tr A B) + y trA trB I`` (normalised)."""
    ta, tb = A.traces(), B.traces()
    return ansatz_parent(A, B, x * tb, x * ta, y * np.outer(ta, tb))


def depolarising_xy_visibility(d: int, x: float, y: float) -> float:
    return (2 + d * x) / (2 * (1 + d * x) + d * d * y)


def universal_parent(s: MeasurementSet, kind) -> tuple[np.ndarray, float]:
    """Parent reaching the universal pair bound, via rank-one refinement.

    Returns ``(parent, eta)`` with parent shape ``(n_A, n_B, d, d)``; its
    marginals equal the depolarised pair (``kind="d"``) or dominate
    ``eta*A`` (``kind="g"``).
    """
    kind = NoiseModelKind.parse(kind)
    if s.k != 2:
        raise DomainError("pair parents need exactly two measurements")
    d = s.dim
    A, B = s
    Ar, la = rank_one_refinement(A)
    Br, lb = rank_one_refinement(B)
    if kind is D:
        x, y = _ansatz_xy(d)
        ap = depolarising_xy_parent(Ar, Br, x, y)
        eta = depolarising_pair_lower_bound(d)
    elif kind is G:
        sd = math.sqrt(d)
        ap = ansatz_parent(Ar, Br, Br.traces() / (2 * sd), Ar.traces() / (2 * sd), 0.0, sd / 2)
        eta = generalised_pair_lower_bound(d)
    elif kind is NoiseModelKind.RANDOM:
        na, nb = A.n_outcomes, B.n_outcomes
        ap = _random_parent(A, B)
        return ap.parent, random_pair_lower_bound(na, nb)
    else:
        raise DomainError("universal parents are provided for d, r and g noise")
    out = np.zeros((A.n_outcomes, B.n_outcomes, d, d), dtype=complex)
    np.add.at(out, (la[:, None], lb[None, :]), ap.parent)
    return out, eta


def cloning_parent(A: Povm, B: Povm) -> AnsatzParent:
    """``[{A,B} + tr B A + tr A B] / (2(d+1))``."""
    return ansatz_parent(A, B, B.traces(), A.traces(), 0.0)


def _random_parent(A: Povm, B: Povm) -> AnsatzParent:
    na, nb = A.n_outcomes, B.n_outcomes
    return ansatz_parent(A, B, math.sqrt(na / nb), math.sqrt(nb / na), 0.0)


def jm_noise_parent(A: Povm, B: Povm) -> AnsatzParent:
    """Sub-ansatz ``{A,B} - x(trB A + trA B) + y trA trB I`` used as a noise parent."""
    d = A.dim
    r = math.sqrt(d * d + 4 * d - 4)
    x = (2 + r) / d
    y = ((d + 2 + r) / (2 * d)) ** 2
    ta, tb = A.traces(), B.traces()
    return ansatz_parent(A, B, -x * tb, -x * ta, y * np.outer(ta, tb))


# --------------------------------------------------------------------------
# Refined lower bounds from overlaps


def overlaps(s: MeasurementSet) -> np.ndarray:
    """``c_ab = sqrt(tr(A_a B_b) / (tr A_a tr B_b))`` clamped to [0, 1]; zero elements get ``c_ab = 0``."""
    if s.k != 2:
        raise DomainError("overlaps are defined for pairs")
    A, B = s
    ta, tb = A.traces(), B.traces()
    tab = np.real(np.einsum("aij,bji->ab", A.elements, B.elements))
    den = np.outer(ta, tb)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.sqrt(np.clip(tab / den, 0.0, 1.0))
    c[den <= 1e-14] = 0.0
    return c


def critical_overlap(kind, d: int) -> float:
    kind = NoiseModelKind.parse(kind)
    r = math.sqrt(d * d + 4 * d - 4)
    if kind is D:
        return (d - 2 + r) / (2 * d)
    if kind is JM:
        return (-d + 2 + r) / (2 * d)
    if kind is G:
        return 1 / math.sqrt(d)
    raise DomainError(f"no overlap refinement for {kind.value}")


@dataclass
class RefinedBound:
    kind: NoiseModelKind
    value: float
    c_minus: float
    c_plus: float
    critical: float
    at_critical: bool = False
    parts: dict = field(default_factory=dict)


def _neighbours(c, crit):
    vals = c[np.isfinite(c)]
    below = vals[vals < crit]
    above = vals[vals > crit]
    cm = float(below.max()) if below.size else 0.0
    cp = float(above.min()) if above.size else 1.0
    return cm, cp, bool(np.any(np.abs(vals - crit) <= CRITICAL_TOL))


def refined_depolarising(d: int, cm: float, cp: float) -> float:
    s = cm + cp - 1
    return (s * d + 2) / (2 + 2 * s * d + (1 - cm) * (1 - cp) * d * d)


def refined_jm(d: int, eta_d: float, cm: float, cp: float) -> float:
    t = 1 + cm + cp
    return eta_d + (1 - eta_d) / d * (t * d - 2) / (t * (d - 1) + cm * cp * d)


def refined_generalised(d: int, cm: float, cp: float) -> float:
    return (2 * (cm + cp) * d + (1 + cm * cp * d) * (d + 1)) / (2 * d * (1 + cm + cp + cm * cp * d))


def refined_generalised_from_d(d: int, cm: float, cp: float) -> float:
    return (1 + cm + cp + cm * cp * d) / (2 + 2 * (cm + cp - 1) * d + (1 - cm) * (1 - cp) * d * d)


def refined_lower_bound(s: MeasurementSet, kind) -> RefinedBound:
    """Lower bound from the overlaps nearest to the critical overlap.

    Valid for pairs of rank-one POVMs.  Elements with zero trace carry no
    constraint and are ignored.  When an overlap sits within 1e-9 of the
    critical value the universal bound is returned.
    """
    kind = NoiseModelKind.parse(kind)
    if s.k != 2:
        raise DomainError("refined bounds are defined for pairs")
    if not s.is_rank_one():
        raise NotRankOne("refined bounds need rank-one POVMs")
    d = s.dim
    c = overlaps(s)
    if kind is D:
        crit = critical_overlap(D, d)
        cm, cp, at = _neighbours(c, crit)
        if at:
            return RefinedBound(D, depolarising_pair_lower_bound(d), crit, crit, crit, True)
        return RefinedBound(D, refined_depolarising(d, cm, cp), cm, cp, crit)
    if kind is JM:
        eta_d = refined_lower_bound(s, D).value
        crit = critical_overlap(JM, d)
        cm, cp, at = _neighbours(c, crit)
        if at:
            return RefinedBound(JM, jm_pair_lower_bound(d), crit, crit, crit, True)
        return RefinedBound(JM, refined_jm(d, eta_d, cm, cp), cm, cp, crit, parts={"eta_d": eta_d})
    if kind is G:
        crit = critical_overlap(G, d)
        cm, cp, at = _neighbours(c, crit)
        crit_d = critical_overlap(D, d)
        cmd, cpd, at_d = _neighbours(c, crit_d)
        first = generalised_pair_lower_bound(d) if at else refined_generalised(d, cm, cp)
        second = (relation_transfer(depolarising_pair_lower_bound(d), d, G) if at_d
                  else refined_generalised_from_d(d, cmd, cpd))
        return RefinedBound(G, max(first, second), cm, cp, crit, at,
                            parts={"overlap": first, "via_depolarising": second})
    raise DomainError(f"no refined bound for {kind.value}")


def refined_depolarising_parent(s: MeasurementSet) -> tuple[np.ndarray, float]:
    """Explicit parent reaching the refined depolarising bound (for checking)."""
    rb = refined_lower_bound(s, D)
    d = s.dim
    if rb.at_critical:
        x, y = _ansatz_xy(d)
    else:
        x = rb.c_minus + rb.c_plus - 1
        y = (1 - rb.c_minus) * (1 - rb.c_plus)
    ap = depolarising_xy_parent(s[0], s[1], x, y)
    return ap.parent, depolarising_xy_visibility(d, x, y)


# --------------------------------------------------------------------------
# Embeddings, block structure and zero outcomes


def embedding_upper_bound(inner_lambda: float, d_i: int, d_f: int) -> float:
    """Depolarising bound for a rank-one projective pair embedded from ``C^{d_i}`` into ``C^{d_f}``."""
    lam = float(inner_lambda)
    if d_i < 2 or d_f < d_i:
        raise DomainError("need 2 <= d_i <= d_f")
    if lam > 2 + 1e-12 or lam < 1 - 1e-12:
        raise DomainError("lambda of a pair of projective measurements lies in [1, 2]")
    num = (lam - 1) * d_i - 1
    return 0.5 * (1 + num / ((2 - lam) * d_f + num))


def subset_lambdas(s: MeasurementSet) -> dict:
    """``lam_S`` for every subset ``S`` of measurements (empty subset -> 0)."""
    out = {(): 0.0}
    for m in range(1, s.k + 1):
        for xs in itertools.combinations(range(s.k), m):
            sub = MeasurementSet([s[x] for x in xs])
            out[xs] = float(np.linalg.eigvalsh(multi_index_sums(sub))[:, -1].max())
    return out


def partial_lambdas(s: MeasurementSet) -> list[float]:
    """``lam_m``: largest ``lam_S`` over subsets of size ``m = 1..k``."""
    lams = subset_lambdas(s)
    return [max(v for key, v in lams.items() if len(key) == m) for m in range(1, s.k + 1)]


@dataclass
class EmbeddingBound:
    value: float
    alpha: np.ndarray
    beta: float
    gamma: np.ndarray

    def certificate(self, inner: MeasurementSet, d_f: int) -> list:
        """Dual point for ``embed_computational(inner, d_f)`` (depolarising orientation)."""
        d_i = inner.dim
        X = []
        for x, m in enumerate(inner):
            blocks = np.zeros((d_f, d_f, d_f), dtype=complex)
            blocks[:d_i, :d_i, :d_i] = self.alpha[x] * np.eye(d_i) - self.beta * m.elements
            for c in range(d_i, d_f):
                blocks[c, :d_i, :d_i] = self.gamma[x] * np.eye(d_i)
            X.append(blocks)
        return X


def set_embedding_bound(inner: MeasurementSet, d_f: int) -> EmbeddingBound:
    """Depolarising bound for rank-one projective measurements embedded into ``C^{d_f}``.

    The complement is measured in the computational basis (shared outcomes).
    Dual ansatz: ``alpha_x I - beta A_{a|x}`` on the inner block for inner
    outcomes and ``gamma_x I`` (inner block) for complement outcomes.  Every
    multi-index whose inner outcomes come from the measurements in ``S``
    needs ``sum_{x in S} alpha_x + sum_{x not in S} gamma_x >= beta lam_S``.
    The ratio ``Q/(Q-P)`` is linear-fractional in the ansatz parameters and is
    minimised as a linear program after fixing ``Q - P = 1``.
    """
    from scipy.optimize import linprog

    k, d_i = inner.k, inner.dim
    if d_f < d_i:
        raise DomainError("target dimension smaller than the inner dimension")
    if not all(m.n_outcomes == d_i and m.is_projective() and m.is_rank_one() for m in inner):
        raise DomainError("the inner set must consist of rank-one projective measurements")
    lams = subset_lambdas(inner)
    nv = 2 * k + 1  # alpha_0..k-1, gamma_0..k-1, beta
    p_row = np.zeros(nv)
    p_row[:k] = d_i
    p_row[-1] = -k * d_i
    q_row = np.zeros(nv)
    q_row[:k] = d_i * d_i / d_f
    q_row[k:2 * k] = (d_f - d_i) * d_i / d_f
    q_row[-1] = -k * d_i / d_f
    a_ub = []
    for subset, lam in lams.items():
        row = np.zeros(nv)
        for x in range(k):
            row[x if x in subset else k + x] = -1.0
        row[-1] = lam
        a_ub.append(row)
    res = linprog(q_row, A_ub=np.array(a_ub), b_ub=np.zeros(len(a_ub)), A_eq=[q_row - p_row], b_eq=[1.0],
                  bounds=[(None, None)] * nv, method="highs")
    if res.status != 0:
        raise RuntimeError(f"embedding linear program failed: {res.message}")
    z = res.x
    return EmbeddingBound(float(res.fun), z[:k].copy(), float(z[-1]), z[k:2 * k].copy())


def set_embedding_upper_bound(inner: MeasurementSet, d_f: int) -> float:
    """Value of :func:`set_embedding_bound`; equals :func:`embedding_upper_bound` for pairs."""
    return set_embedding_bound(inner, d_f).value


def block_structure_p_upper_bound(s: MeasurementSet, d_i: int) -> float:
    """Probabilistic-noise bound for copies of one inner pair on orthogonal blocks."""
    d = s.dim
    if s.k != 2 or d % d_i:
        raise NotBlockStructured("dimension is not a multiple of the block size")
    blocks = d // d_i
    inner = []
    for m in s:
        if m.n_outcomes != d:
            raise NotBlockStructured("each measurement needs d_i outcomes per block")
        ref = None
        for l in range(blocks):
            sl = slice(l * d_i, (l + 1) * d_i)
            els = m.elements[sl]
            mask = np.ones((d, d), dtype=bool)
            mask[sl, sl] = False
            if np.max(np.abs(els[:, mask]), initial=0.0) > 1e-10:
                raise NotBlockStructured("elements leak outside their block")
            block = els[:, sl, sl]
            if ref is None:
                ref = block
            elif np.max(np.abs(block - ref)) > 1e-10:
                raise NotBlockStructured("blocks carry different measurements")
        inner.append(Povm(ref))
    inner_set = MeasurementSet(inner)
    lam = compute_quantities(inner_set).lam
    return embedding_upper_bound(lam, d_i, d)


def zero_outcome_limit_bound(s: MeasurementSet) -> float:
    """Random-noise bound ``(2-lam)/(f - 2(lam-1))`` in the limit of many zero outcomes."""
    q = compute_quantities(s)
    if s.k != 2:
        raise DomainError("defined for pairs")
    if not (q.lam < 2 and 2 * (q.lam - 1) < q.f):
        raise PreconditionFailed("need lam < 2 and 2(lam-1) < f")
    return (2 - q.lam) / (q.f - 2 * (q.lam - 1))


def _zero_outcome_layout(s: MeasurementSet):
    if s.k != 2 or s[0].n_outcomes != s[1].n_outcomes:
        raise DomainError("needs a pair with equal outcome counts")
    nonzero = [m.traces() > 1e-12 for m in s]
    n_i = int(nonzero[0].sum())
    if n_i != int(nonzero[1].sum()):
        raise DomainError("both measurements need the same number of non-zero elements")
    return nonzero, n_i, s[0].n_outcomes


def zero_outcome_certificate(s: MeasurementSet):
    """Random-noise dual point ``alpha I - A`` (non-zero outcomes), ``gamma I`` (zero outcomes).

    ``alpha = lam/2`` and ``gamma = 1 - lam/2`` make every ``X_a + Y_b`` PSD.
    """
    nonzero, _, _ = _zero_outcome_layout(s)
    lam = compute_quantities(s).lam
    eye = np.eye(s.dim)
    X = []
    for m, nz in zip(s, nonzero):
        x = np.where(nz[:, None, None], lam / 2 * eye - m.elements, (1 - lam / 2) * eye)
        X.append(x)
    return X


def zero_outcome_upper_bound(s: MeasurementSet) -> float:
    """Random-noise bound for a pair padded with zero elements (``n_i`` non-zero of ``n_f``).

    Tends to :func:`zero_outcome_limit_bound` as the padding grows.
    """
    _, n_i, n_f = _zero_outcome_layout(s)
    q = compute_quantities(s)
    if q.lam > 2 + 1e-12:
        raise PreconditionFailed("needs lam <= 2")
    d = s.dim
    alpha, gamma = q.lam / 2, 1 - q.lam / 2
    qv = 2 * d * ((n_i * alpha - 1) + (n_f - n_i) * gamma) / n_f
    pv = 2 * alpha * d - d * q.f
    return _ratio(qv, qv - pv)


# --------------------------------------------------------------------------
# Cascades of pair parents for k > 2


@dataclass
class CascadeResult:
    eta: float
    parent: np.ndarray  # (n_1, ..., n_k, d, d)
    visibilities: np.ndarray


def _pair_parent_general(A: Povm, B: Povm, kind):
    par, eta = universal_parent(MeasurementSet([A, B]), kind)
    return par, eta


def _cascade(povms: list[Povm], kind):
    """Parent over the given POVMs (axes in input order) and per-measurement visibility."""
    m = len(povms)
    d = povms[0].dim
    if m == 1:
        return povms[0].elements, np.ones(1)
    if m == 2:
        par, eta = _pair_parent_general(povms[0], povms[1], kind)
        return par, np.array([eta, eta])
    if m % 2:
        total = None
        vis = np.zeros(m)
        for r in range(m):
            order = [(r + i) % m for i in range(m)]
            par, v = _cascade_even_prefix([povms[i] for i in order], kind)
            inv = np.argsort(order)
            par = np.transpose(par, tuple(inv) + (m, m + 1))
            total = par if total is None else total + par
            vis += v[inv]
        return total / m, vis / m
    return _cascade_even_prefix(povms, kind)


def _cascade_even_prefix(povms, kind):
    """Pair consecutive POVMs (a trailing odd one passes through) and recurse."""
    m = len(povms)
    d = povms[0].dim
    groups = []
    i = 0
    while i + 1 < m:
        groups.append((i, i + 1))
        i += 2
    if i < m:
        groups.append((i,))
    merged, pair_vis, shapes = [], [], []
    for grp in groups:
        if len(grp) == 2:
            par, eta = _pair_parent_general(povms[grp[0]], povms[grp[1]], kind)
            shapes.append(par.shape[:2])
            merged.append(Povm(par.reshape(-1, d, d)))
            pair_vis.append([eta, eta])
        else:
            shapes.append((povms[grp[0]].n_outcomes,))
            merged.append(povms[grp[0]])
            pair_vis.append([1.0])
    par, vis = _cascade(merged, kind)
    new_shape = tuple(n for shp in shapes for n in shp) + (d, d)
    par = par.reshape(new_shape)
    out_vis = np.concatenate([vis[g] * np.array(pv) for g, pv in enumerate(pair_vis)])
    return par, out_vis


def equalise_depolarising(parent: np.ndarray, s: MeasurementSet, vis: Sequence[float], eta: float) -> np.ndarray:
    """Mix extra depolarising noise into marginals whose visibility exceeds ``eta``.

    ``G'_j = t G_j + (1-t) tr(A_{j_x|x})/d * sum_{j_x'} G_{j[x<-j_x']}`` lowers
    the visibility of measurement ``x`` by ``t`` and leaves the others intact.
    """
    d = s.dim
    k = s.k
    out = parent.copy()
    for x in range(k):
        if vis[x] <= eta + 1e-15:
            continue
        t = eta / vis[x]
        summed = out.sum(axis=x, keepdims=True)
        shape = [1] * k + [1, 1]
        shape[x] = s[x].n_outcomes
        w = (s[x].traces() / d).reshape(shape)
        out = t * out + (1 - t) * w * summed
    return out


def cascade_lower_bound(s: MeasurementSet, kind="d") -> CascadeResult:
    """Lower bound for ``k`` measurements from nested universal pair parents."""
    kind = NoiseModelKind.parse(kind)
    if kind not in (D, G):
        raise DomainError("cascade bounds are provided for d and g noise")
    par, vis = _cascade(list(s), kind)
    eta = float(vis.min())
    if kind is D:
        par = equalise_depolarising(par, s, vis, eta)
    return CascadeResult(eta, par, vis)


# --------------------------------------------------------------------------
# Closed forms for specific families


def theta_closed_form(theta: float, kind) -> float:
    kind = NoiseModelKind.parse(kind)
    c, s = math.cos(theta), math.sin(theta)
    if kind in (D, R, P):
        return 1 / (c + s)
    if kind is JM:
        return 2 / (1 + c + s)
    return (math.sqrt(2) + 1) / (math.sqrt(2) + c + s)


def mub_closed_form(d: int, kind) -> float:
    """Robustness of the computational/Fourier pair in dimension ``d``."""
    kind = NoiseModelKind.parse(kind)
    sd = math.sqrt(d)
    if d == 2:
        return {D: 1 / math.sqrt(2), R: 1 / math.sqrt(2), P: 1 / math.sqrt(2),
                JM: 2 * (math.sqrt(2) - 1), G: 0.5 * (1 + 1 / math.sqrt(2))}[kind]
    if kind in (D, R, P):
        return 0.5 * (1 + 1 / (sd + 1))
    return 0.5 * (1 + 1 / sd)


def qmub_closed_form(d: int) -> float:
    """Depolarising robustness of the qubit MUB pair embedded in ``C^d``."""
    return 0.5 * (1 + math.sqrt(2) / (d + math.sqrt(2)))


def mub_parent(s: MeasurementSet) -> np.ndarray:
    """``({A,B} + (A+B)/sqrt(d)) / (2(sqrt(d)+1))`` for a pair of MUBs."""
    A, B = s
    sd = math.sqrt(s.dim)
    return ansatz_parent(A, B, 1 / sd, 1 / sd, 0.0).parent


def mub_noise_parent(s: MeasurementSet) -> np.ndarray:
    """Sub-normalised noise parent for a MUB pair in ``d >= 3`` (jointly measurable noise)."""
    d = s.dim
    if d < 3:
        raise DomainError("defined for d >= 3")
    A, B = s
    eta = mub_closed_form(d, JM)
    a = A.elements[:, None]
    b = B.elements[None, :]
    eye = np.eye(d)
    core = eye + d / (d - 1) * (a @ b + b @ a - a - b)
    return (1 - eta) / (d * (d - 2)) * core


def qubit_triplet_parent(s: MeasurementSet) -> np.ndarray:
    """Parent of three rank-one qubit POVMs depolarised to visibility ``1/sqrt(3)``."""
    if s.k != 3 or s.dim != 2:
        raise NotRankOne("needs three qubit measurements")
    if not s.is_rank_one():
        raise NotRankOne("needs rank-one elements")
    A, B, C = (m.elements for m in s)
    ta, tb, tc = (m.traces() for m in s)
    a = A[:, None, None]
    b = B[None, :, None]
    c = C[None, None, :]
    prods = a @ b @ c + a @ c @ b + b @ a @ c + b @ c @ a + c @ a @ b + c @ b @ a
    r3 = math.sqrt(3)
    lin = (3 * r3 - 4) / 2 * (
        (tb[None, :, None] * tc[None, None, :])[..., None, None] * a
        + (ta[:, None, None] * tc[None, None, :])[..., None, None] * b
        + (ta[:, None, None] * tb[None, :, None])[..., None, None] * c
    )
    const = (9 - 5 * r3) / 2 * (ta[:, None, None] * tb[None, :, None] * tc[None, None, :])[..., None, None] * np.eye(2)
    return (prods + lin + const) / (2 * (9 - r3))


# --------------------------------------------------------------------------
# Reports


@dataclass
class BoundEntry:
    measure: str
    side: str  # "lower" or "upper"
    value: float
    source: str


@dataclass
class BoundReport:
    dim: int
    outcome_counts: tuple
    entries: list
    overlaps: list | None = None

    def best(self, measure: str, side: str) -> float | None:
        vals = [e.value for e in self.entries if e.measure == measure and e.side == side]
        if not vals:
            return None
        return max(vals) if side == "lower" else min(vals)

    def to_dict(self) -> dict:
        out = {
            "dim": self.dim,
            "outcome_counts": list(self.outcome_counts),
            "bounds": [asdict(e) for e in self.entries],
            "best": {},
        }
        for m in sorted({e.measure for e in self.entries}):
            out["best"][m] = {"lower": self.best(m, "lower"), "upper": self.best(m, "upper")}
        if self.overlaps is not None:
            out["overlaps"] = self.overlaps
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def bound_report(s: MeasurementSet, kinds=None) -> BoundReport:
    """All applicable analytic bounds, each tagged with the construction that produced it."""
    kinds = list(NoiseModelKind) if kinds is None else [NoiseModelKind.parse(k) for k in kinds]
    d = s.dim
    q = compute_quantities(s)
    entries = []
    rank_one = s.is_rank_one()
    for kind in kinds:
        m = kind.value
        entries.append(BoundEntry(m, "upper", min(1.0, upper_bound(s, kind, q)), "dual-ansatz"))
        if q.f_tr is not None:
            try:
                entries.append(BoundEntry(m, "upper", min(1.0, trace_normalized_upper_bound(s, kind, q)),
                                          "trace-normalised-dual-ansatz"))
            except ZeroTraceElement:
                pass
        try:
            entries.append(BoundEntry(m, "lower", universal_lower_bound(kind, d, s.outcome_counts), "universal"))
        except DomainError:
            pass
        if s.k == 2 and rank_one and kind in (D, JM, G) and d >= 2:
            entries.append(BoundEntry(m, "lower", refined_lower_bound(s, kind).value, "overlap-refined"))
    ov = None
    if s.k == 2:
        c = overlaps(s)
        ov = [[None if not np.isfinite(v) else float(v) for v in row] for row in c]
    return BoundReport(d, s.outcome_counts, entries, ov)
