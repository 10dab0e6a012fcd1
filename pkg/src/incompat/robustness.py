"""Incompatibility robustness of a measurement set under the five noise models.

For a set ``S = {A_{a|x}}`` of ``k`` POVMs the robustness ``eta^*`` is the
largest visibility ``eta`` such that ``eta*S + (1-eta)*N`` is jointly
measurable for some admissible noise ``N``.  The parent POVM is indexed by
multi-indices ``j = (j_1, ..., j_k)`` in row-major order and its ``x``-th
marginal collects all ``G_j`` with ``j_x = a``.

Each solve returns the primal parent, the reconstructed noise, and a dual
certificate in the variables ``X_{a|x}`` (plus ``N`` for the jointly
measurable and generalised models).  :func:`dual_upper_bound` turns any dual
point, optimal or not, into a rigorous upper bound on ``eta^*`` by first
repairing its constraint violations with identity shifts.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .noise import NoiseInstance, NoiseModelKind, marginals, trivial_parent
from .povm import MeasurementSet, Povm
from .sdp import ConicProgram, SolverFailure, solve

D, R, P, JM, G = (NoiseModelKind.DEPOLARISING, NoiseModelKind.RANDOM, NoiseModelKind.PROBABILISTIC,
                  NoiseModelKind.JOINTLY_MEASURABLE, NoiseModelKind.GENERALISED)

MAX_PARENT_OUTCOMES = 4096
COMPATIBLE_TOL = 1e-7
ZERO_TOL = 1e-12


class TooLarge(ValueError):
    """Raised when the parent POVM would have too many outcomes."""


def multi_indices(counts) -> list[tuple[int, ...]]:
    return list(itertools.product(*[range(n) for n in counts]))


def _gname(j):
    return "G" + ",".join(map(str, j))


def _hname(j):
    return "H" + ",".join(map(str, j))


def noise_elements(kind: NoiseModelKind, s: MeasurementSet) -> list[np.ndarray]:
    """Fixed noise ``N_{a|x}`` (array ``(n_x, d, d)`` per ``x``) for depolarising / random noise."""
    d = s.dim
    if kind is D:
        return [m.traces()[:, None, None] * np.eye(d) / d for m in s]
    return [np.broadcast_to(np.eye(d) / m.n_outcomes, (m.n_outcomes, d, d)) for m in s]


@dataclass
class ProgramLayout:
    """Book-keeping that links program variables to the measurement set."""

    kind: NoiseModelKind
    counts: tuple
    jbar: list  # multi-indices that carry a parent variable
    active: list  # per measurement: boolean array of outcomes with a marginal constraint
    dropped: list  # per measurement: outcome whose marginal constraint is redundant (or None)


def _zero_outcomes(s: MeasurementSet) -> list[np.ndarray]:
    return [m.traces() <= ZERO_TOL * s.dim for m in s]


def primal_program(s: MeasurementSet, kind) -> tuple[ConicProgram, ProgramLayout]:
    """The robustness SDP ``max eta`` for noise model ``kind``."""
    kind = NoiseModelKind.parse(kind)
    counts = s.outcome_counts
    n_parent = int(np.prod(counts))
    if n_parent > MAX_PARENT_OUTCOMES:
        raise TooLarge(f"parent POVM would have {n_parent} outcomes (cap {MAX_PARENT_OUTCOMES})")
    d = s.dim
    eye = np.eye(d)
    zero = _zero_outcomes(s)

    # Depolarising noise vanishes on zero elements, which forces the whole
    # row of parent elements to zero; drop those variables up front so the
    # program stays strictly feasible.
    if kind is D:
        jbar = [j for j in multi_indices(counts) if not any(zero[x][j[x]] for x in range(s.k))]
        active = [~z for z in zero]
    else:
        jbar = multi_indices(counts)
        active = [np.ones(n, dtype=bool) for n in counts]
    # Summing the marginal constraints of one measurement gives the same
    # functional for every x; drop one constraint per extra measurement.
    dropped = [None] * s.k
    if kind in (D, R, P, JM):
        for x in range(1, s.k):
            idx = np.nonzero(active[x])[0]
            if len(idx):
                dropped[x] = int(idx[-1])

    prog = ConicProgram("max")
    eta = prog.add_nonneg("eta")
    for j in jbar:
        prog.add_psd(_gname(j), d)
    if kind is JM:
        for j in jbar:
            prog.add_psd(_hname(j), d)
    if kind is P:
        for x in range(s.k):
            for a in range(counts[x]):
                prog.add_nonneg(f"p{x},{a}")
    if kind is G:
        for x in range(s.k):
            for a in range(counts[x]):
                prog.add_psd(f"S{x},{a}", d)

    members = {}
    for j in jbar:
        for x in range(s.k):
            members.setdefault((x, j[x]), []).append(j)

    fixed = noise_elements(kind, s) if kind in (D, R) else None
    for x, m in enumerate(s):
        for a in range(counts[x]):
            if not active[x][a] or dropped[x] == a:
                continue
            A = m.elements[a]
            js = members.get((x, a), [])
            name = f"marg{x},{a}"
            if kind in (D, R):
                Nm = fixed[x][a]
                terms = [(_gname(j), 1.0) for j in js] + [(eta, -(A - Nm))]
                prog.add_matrix_constraint(name, terms, Nm)
            elif kind is P:
                terms = [(_gname(j), 1.0) for j in js] + [(eta, -A), (f"p{x},{a}", -eye)]
                prog.add_matrix_constraint(name, terms, np.zeros((d, d)))
            elif kind is JM:
                terms = [(eta, A)] + [(_gname(j), -1.0) for j in js] + [(_hname(j), 1.0) for j in js]
                prog.add_matrix_constraint(name, terms, np.zeros((d, d)))
            else:
                terms = [(eta, A)] + [(_gname(j), -1.0) for j in js] + [(f"S{x},{a}", 1.0)]
                prog.add_matrix_constraint(name, terms, np.zeros((d, d)))
    if kind in (D, R):
        prog.add_scalar_constraint("eta<=1", [(eta, 1.0)], 1.0, "leq")
    if kind is P:
        for x in range(s.k):
            terms = [(eta, 1.0)] + [(f"p{x},{a}", 1.0) for a in range(counts[x])]
            prog.add_scalar_constraint(f"norm{x}", terms, 1.0)
    if kind in (JM, G):
        prog.add_matrix_constraint("norm", [(_gname(j), 1.0) for j in jbar], eye)
    prog.set_objective([(eta, 1.0)])
    return prog, ProgramLayout(kind, counts, jbar, active, dropped)


def dual_program(s: MeasurementSet, kind) -> ConicProgram:
    """Dual of the robustness SDP in the variables ``X_{a|x}`` (and ``N``, ``xi``).

    * depolarising / random: ``min 1 + P`` s.t. ``sum_x X_{j_x|x} >= 0`` and
      ``1 + P >= Q`` where ``P = sum tr(X A)`` and ``Q = sum tr(X N)``;
    * probabilistic: as above with ``Q = sum_x xi_x`` and ``xi_x >= tr X_{a|x}``;
    * jointly measurable: ``min tr N`` s.t. ``N >= sum_x X_{j_x|x} >= 0``, ``P >= 1``;
    * generalised: ``min tr N`` s.t. ``N >= sum_x X_{j_x|x}``, ``X >= 0``, ``P >= 1``.

    For the first four models ``X_{0|x} = 0`` (``x >= 1``) fixes the shift
    freedom ``X_{.|0} + M``, ``X_{.|x} - M`` of the free variables.
    """
    kind = NoiseModelKind.parse(kind)
    counts = s.outcome_counts
    d = s.dim
    eye = np.eye(d)
    prog = ConicProgram("min")
    xs = {}
    for x in range(s.k):
        for a in range(counts[x]):
            xs[x, a] = f"X{x},{a}"
            if kind is G:
                prog.add_psd(xs[x, a], d)
            else:
                prog.add_free_matrix(xs[x, a], d)
    p_terms = [(xs[x, a], s[x].elements[a]) for x in range(s.k) for a in range(counts[x])]
    if kind in (JM, G):
        prog.add_free_matrix("N", d)
    for j in multi_indices(counts):
        terms = [(xs[x, j[x]], 1.0) for x in range(s.k)]
        if kind in (D, R, P, JM):
            prog.add_matrix_constraint(f"pos{j}", terms, np.zeros((d, d)), "psd")
        if kind in (JM, G):
            prog.add_matrix_constraint(
                f"dom{j}", [("N", 1.0)] + [(n, -c) for n, c in terms], np.zeros((d, d)), "psd"
            )
    if kind in (D, R, P, JM):
        # Moving a Hermitian M from every X_{.|x} to every X_{.|0} changes
        # neither the constraints nor the objective; pin X_{0|x} = 0 to remove
        # that freedom.
        for x in range(1, s.k):
            prog.add_matrix_constraint(f"gauge{x}", [(xs[x, 0], 1.0)], np.zeros((d, d)))
    if kind in (D, R):
        fixed = noise_elements(kind, s)
        q_terms = [(xs[x, a], fixed[x][a]) for x in range(s.k) for a in range(counts[x])]
        prog.add_scalar_constraint(
            "value>=Q", p_terms + [(n, -c) for n, c in q_terms], -1.0, "geq"
        )
        prog.set_objective(p_terms, 1.0)
    elif kind is P:
        for x in range(s.k):
            prog.add_free(f"xi{x}")
            for a in range(counts[x]):
                prog.add_scalar_constraint(f"xi{x}>=tr{a}", [(f"xi{x}", 1.0), (xs[x, a], -eye)], 0.0, "geq")
        prog.add_scalar_constraint(
            "value>=Q", p_terms + [(f"xi{x}", -1.0) for x in range(s.k)], -1.0, "geq"
        )
        prog.set_objective(p_terms, 1.0)
    else:
        prog.add_scalar_constraint("P>=1", p_terms, 1.0, "geq")
        prog.set_objective([("N", eye)])
    return prog


# --------------------------------------------------------------------------
# Certificates


@dataclass
class DualBound:
    """Rigorous upper bound obtained from a (repaired) dual point."""

    value: float
    shift: float  # total identity shift applied to restore feasibility
    X: list
    N: np.ndarray | None = None


def _sum_over_multi_index(X, counts):
    """Array of ``sum_x X_{j_x|x}`` for all multi-indices, shape ``(prod n, d, d)``."""
    total = None
    k = len(counts)
    for x in range(k):
        shape = [1] * k + list(X[x].shape[1:])
        shape[x] = counts[x]
        term = X[x].reshape(shape)
        total = term if total is None else total + term
    return total.reshape((-1,) + X[0].shape[1:])


def dual_upper_bound(s: MeasurementSet, kind, X, N=None) -> DualBound:
    """Certified upper bound on the robustness from any Hermitian ``X_{a|x}`` (and ``N``).

    Constraint violations are removed by shifting ``X_{a|1}`` (or each
    negative ``X_{a|x}`` for generalised noise) and ``N`` by multiples of the
    identity; the bound then follows from weak duality:

    * depolarising / random / probabilistic: ``eta <= Q / (Q - P)``;
    * jointly measurable / generalised: ``eta <= tr N / P``.
    """
    kind = NoiseModelKind.parse(kind)
    d = s.dim
    counts = s.outcome_counts
    eye = np.eye(d)
    X = [np.array(x, dtype=complex) for x in X]
    X = [0.5 * (x + x.conj().transpose(0, 2, 1)) for x in X]
    shift = 0.0
    if kind is G:
        for x in range(s.k):
            lo = np.linalg.eigvalsh(X[x])[:, 0]
            eps = np.maximum(0.0, -lo)
            X[x] = X[x] + eps[:, None, None] * eye
            shift += float(eps.sum())
    else:
        tot = _sum_over_multi_index(X, counts)
        eps = max(0.0, -float(np.linalg.eigvalsh(tot)[:, 0].min()))
        if eps > 0:
            X[0] = X[0] + eps * eye
            shift += eps
    Pval = sum(float(np.real(np.einsum("aij,aji->", X[x], s[x].elements))) for x in range(s.k))
    if kind in (D, R, P):
        if kind is P:
            Qval = sum(float(np.max(np.real(np.trace(X[x], axis1=1, axis2=2)))) for x in range(s.k))
        else:
            fixed = noise_elements(kind, s)
            Qval = sum(float(np.real(np.einsum("aij,aji->", X[x], fixed[x]))) for x in range(s.k))
        value = Qval / (Qval - Pval) if Qval - Pval > 0 else np.inf
        return DualBound(min(1.0, value) if np.isfinite(value) else 1.0, shift, X)
    N = np.zeros((d, d), dtype=complex) if N is None else np.array(N, dtype=complex)
    N = 0.5 * (N + N.conj().T)
    tot = _sum_over_multi_index(X, counts)
    eps = max(0.0, float(np.linalg.eigvalsh(tot - N)[:, -1].max()))
    N = N + eps * eye
    shift += eps
    value = float(np.real(np.trace(N))) / Pval if Pval > 0 else np.inf
    return DualBound(min(1.0, value) if np.isfinite(value) else 1.0, shift, X, N)


# --------------------------------------------------------------------------
# Solving


@dataclass
class RobustnessResult:
    measure: NoiseModelKind
    eta: float
    parent: np.ndarray  # shape (n_1, ..., n_k, d, d)
    noise: NoiseInstance
    dual: dict  # {"X": [array (n_x, d, d)], "N": array | None, "xi": list | None}
    dual_bound: float
    gap: float
    residuals: dict
    status: str
    iterations: int
    noise_parent: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def compatible(self) -> bool:
        return self.eta >= 1 - COMPATIBLE_TOL

    def to_dict(self, full: bool = False) -> dict:
        out = {
            "measure": self.measure.value,
            "eta": self.eta,
            "dual_bound": self.dual_bound,
            "gap": self.gap,
            "status": self.status,
            "iterations": self.iterations,
            "residuals": dict(self.residuals),
        }
        if self.noise.probabilities is not None and self.measure is P:
            out["noise_probabilities"] = [list(map(float, p)) for p in self.noise.probabilities]
        if full:
            def enc(a):
                a = np.asarray(a)
                return np.stack([a.real, a.imag], axis=-1).tolist()

            out["parent"] = enc(self.parent)
            out["noise"] = self.noise.noise.to_dict()
            out["dual"] = {"X": [enc(x) for x in self.dual["X"]]}
            if self.dual.get("N") is not None:
                out["dual"]["N"] = enc(self.dual["N"])
        return out


def _repair_povm(els: np.ndarray) -> np.ndarray:
    """Nearest-looking valid POVM: clip negative eigenvalues, then renormalise.

    Noise is reconstructed by dividing by ``1 - eta``, which amplifies solver
    error when ``eta`` is close to one; the repair changes the noisy set only
    by ``(1 - eta)`` times the correction.
    """
    shape = els.shape
    flat = els.reshape(-1, shape[-1], shape[-1])
    w, v = np.linalg.eigh(0.5 * (flat + flat.conj().transpose(0, 2, 1)))
    flat = (v * np.clip(w, 0.0, None)[:, None, :]) @ v.conj().transpose(0, 2, 1)
    total = flat.sum(axis=0)
    try:
        s = linalg.inv_sqrt(total)
    except np.linalg.LinAlgError:
        return np.broadcast_to(np.eye(shape[-1]) / flat.shape[0], flat.shape).reshape(shape).astype(complex)
    out = s @ flat @ s
    return (0.5 * (out + out.conj().transpose(0, 2, 1))).reshape(shape)


# below this 1 - eta the noise is 0/0 and the uniform representative is used
RENORM_TOL = 1e-9


def solve_robustness(s: MeasurementSet, kind, tol: float = 1e-9, max_iter: int = 100) -> RobustnessResult:
    """Solve the robustness SDP and return primal, noise and dual certificates."""
    kind = NoiseModelKind.parse(kind)
    prog, layout = primal_program(s, kind)
    sol = solve(prog, tol=tol, max_iter=max_iter)
    if sol.status not in ("Optimal", "MaxIter"):
        raise SolverFailure(f"robustness SDP ended with status {sol.status}", sol)
    if sol.status == "MaxIter" and max(sol.primal_residual, sol.dual_residual, sol.gap) > 1e-6:
        raise SolverFailure("robustness SDP did not converge", sol)
    d = s.dim
    counts = s.outcome_counts
    eta = float(sol.primal["eta"])
    eye = np.eye(d)

    parent = np.zeros(counts + (d, d), dtype=complex)
    for j in layout.jbar:
        parent[j] = sol.primal[_gname(j)]

    # dual variables in the orientation of :func:`dual_program`
    X = []
    for x in range(s.k):
        arr = np.zeros((counts[x], d, d), dtype=complex)
        for a in range(counts[x]):
            key = f"marg{x},{a}"
            if key in sol.dual:
                arr[a] = sol.dual[key]
        X.append(arr)
    if kind is D and any((~act).any() for act in layout.active):
        # zero outcomes carry no constraint; any large multiple of I is admissible
        neg = [np.maximum(0.0, -np.linalg.eigvalsh(X[x])[:, 0]) for x in range(s.k)]
        for x in range(s.k):
            t = sum(float(neg[y][layout.active[y]].max(initial=0.0)) for y in range(s.k) if y != x)
            X[x][~layout.active[x]] = t * eye
    Ndual = sol.dual.get("norm") if kind in (JM, G) else None
    xi = [sol.dual[f"norm{x}"] for x in range(s.k)] if kind is P else None

    # noise reconstruction
    one_minus = 1.0 - eta
    noise_parent = None
    if kind in (D, R):
        from .noise import canonical_noise

        noise = canonical_noise(kind, s)
    elif kind is P:
        probs = []
        for x in range(s.k):
            pt = np.array([sol.primal[f"p{x},{a}"] for a in range(counts[x])])
            if one_minus > RENORM_TOL and pt.sum() > 0:
                p = np.clip(pt / pt.sum(), 0.0, None)
            else:
                p = np.full(counts[x], 1.0 / counts[x])
            probs.append(p / p.sum())
        noise = NoiseInstance(P, MeasurementSet(Povm(p[:, None, None] * eye) for p in probs), tuple(probs))
    elif kind is JM:
        H = np.zeros(counts + (d, d), dtype=complex)
        for j in layout.jbar:
            H[j] = sol.primal[_hname(j)]
        if one_minus > RENORM_TOL:
            noise_parent = _repair_povm(H / one_minus)
        else:
            noise_parent = trivial_parent([np.full(n, 1.0 / n) for n in counts], d).astype(complex)
        noise = NoiseInstance(JM, marginals(noise_parent), parent=noise_parent)
    else:
        if one_minus > RENORM_TOL:
            margs = marginals(parent)
            els = [_repair_povm((margs[x].elements - eta * s[x].elements) / one_minus) for x in range(s.k)]
            noise_set = MeasurementSet(Povm(e) for e in els)
        else:
            noise_set = MeasurementSet(Povm.trivial(d, n) for n in counts)
        noise = NoiseInstance(G, noise_set)

    bound = dual_upper_bound(s, kind, X, Ndual)
    residuals = {
        "primal": sol.primal_residual,
        "dual": sol.dual_residual,
        "solver_gap": sol.gap,
    }
    return RobustnessResult(
        measure=kind,
        eta=eta,
        parent=parent,
        noise=noise,
        dual={"X": X, "N": Ndual, "xi": xi},
        dual_bound=bound.value,
        gap=bound.value - eta,
        residuals=residuals,
        status=sol.status,
        iterations=sol.iterations,
        noise_parent=noise_parent,
    )


def robustness(s: MeasurementSet, kind, tol: float = 1e-9) -> float:
    """Just the optimal visibility."""
    return solve_robustness(s, kind, tol=tol).eta


def all_robustness(s: MeasurementSet, kinds=None, tol: float = 1e-9) -> dict:
    kinds = list(NoiseModelKind) if kinds is None else [NoiseModelKind.parse(k) for k in kinds]
    return {k.value: solve_robustness(s, k, tol=tol) for k in kinds}


# --------------------------------------------------------------------------
# Verification


@dataclass
class VerifyReport:
    marginal_residual: float
    parent_psd_violation: float
    normalisation_residual: float
    noise_residual: float
    dual_bound: float
    certified_gap: float
    tol: float

    @property
    def ok(self) -> bool:
        return (
            self.marginal_residual <= self.tol
            and self.parent_psd_violation <= self.tol
            and self.normalisation_residual <= self.tol
            and self.noise_residual <= self.tol
            and self.certified_gap <= self.tol
        )


def verify_result(s: MeasurementSet, r: RobustnessResult, tol: float = 1e-7) -> VerifyReport:
    """Independently re-check a result: parent, marginals, noise and dual bound."""
    kind = r.measure
    d = s.dim
    eye = np.eye(d)
    flat = np.asarray(r.parent).reshape(-1, d, d)
    psd_violation = max(0.0, -float(np.linalg.eigvalsh(flat)[:, 0].min()))
    norm_res = float(np.max(np.abs(flat.sum(axis=0) - eye)))
    margs = marginals(np.asarray(r.parent))
    noise = r.noise.noise
    marg_res = 0.0
    for x in range(s.k):
        target = r.eta * s[x].elements + (1 - r.eta) * noise[x].elements
        if kind is G:
            diff = margs[x].elements - r.eta * s[x].elements
            marg_res = max(marg_res, max(0.0, -float(np.linalg.eigvalsh(diff)[:, 0].min())))
        else:
            diff = margs[x].elements - target
            marg_res = max(marg_res, float(np.linalg.norm(diff, axis=(1, 2)).max()))
    # noise admissibility
    if kind in (D, R):
        ref = noise_elements(kind, s)
        noise_res = max(float(np.max(np.abs(noise[x].elements - ref[x]))) for x in range(s.k))
    elif kind is P:
        noise_res = 0.0
        for x in range(s.k):
            el = noise[x].elements
            tr = np.real(np.trace(el, axis1=1, axis2=2)) / d
            noise_res = max(noise_res, float(np.max(np.abs(el - tr[:, None, None] * eye))),
                            max(0.0, -float(tr.min())), abs(float(tr.sum()) - 1))
    elif kind is JM:
        npar = np.asarray(r.noise_parent).reshape(-1, d, d)
        nm = marginals(np.asarray(r.noise_parent))
        noise_res = max(
            max(0.0, -float(np.linalg.eigvalsh(npar)[:, 0].min())),
            float(np.max(np.abs(npar.sum(axis=0) - eye))),
            max(float(np.max(np.abs(nm[x].elements - noise[x].elements))) for x in range(s.k)),
        )
    else:
        noise_res = 0.0
        for x in range(s.k):
            el = noise[x].elements
            noise_res = max(noise_res, max(0.0, -float(np.linalg.eigvalsh(el)[:, 0].min())),
                            float(np.max(np.abs(el.sum(axis=0) - eye))))
    bound = dual_upper_bound(s, kind, r.dual["X"], r.dual.get("N"))
    gap = bound.value - r.eta
    return VerifyReport(marg_res, psd_violation, norm_res, noise_res, bound.value, abs(gap), tol)


# --------------------------------------------------------------------------
# Joint measurability


def is_jointly_measurable(s: MeasurementSet, tol: float = COMPATIBLE_TOL):
    """Decide joint measurability by maximising ``t`` with ``G_j >= t I``.

    Returns ``(True, parent)`` when the optimal ``t`` is at least ``-tol``,
    otherwise ``(False, None)``.
    """
    counts = s.outcome_counts
    if int(np.prod(counts)) > MAX_PARENT_OUTCOMES:
        raise TooLarge("parent POVM too large")
    d = s.dim
    eye = np.eye(d)
    prog = ConicProgram("max")
    t = prog.add_free("t")
    jbar = multi_indices(counts)
    for j in jbar:
        prog.add_psd(_gname(j), d)
    members = {}
    for j in jbar:
        for x in range(s.k):
            members.setdefault((x, j[x]), []).append(j)
    # G_j = S_j + t I with S_j >= 0
    for x, m in enumerate(s):
        for a in range(counts[x]):
            if x >= 1 and a == counts[x] - 1:
                continue
            js = members[(x, a)]
            prog.add_matrix_constraint(
                f"marg{x},{a}", [(_gname(j), 1.0) for j in js] + [(t, len(js) * eye)], m.elements[a]
            )
    prog.add_scalar_constraint("t<=1", [(t, 1.0)], 1.0, "leq")
    prog.set_objective([(t, 1.0)])
    sol = solve(prog, tol=1e-9)
    tval = float(sol.primal["t"])
    if tval < -tol:
        return False, None
    parent = np.zeros(counts + (d, d), dtype=complex)
    for j in jbar:
        parent[j] = sol.primal[_gname(j)] + tval * eye
    return True, parent
