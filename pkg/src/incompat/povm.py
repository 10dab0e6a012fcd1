"""POVMs, sets of measurements, classical/quantum processings and constructions.

A POVM is stored as an array of shape ``(n, d, d)``.  Constructors only check
the shape and Hermiticity of the elements; positivity and normalisation are
reported by :meth:`Povm.validate` so that slightly noisy numerical input can
still be inspected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import linalg

POVM_TOL = 1e-9


class PovmError(ValueError):
    """Base class for invalid measurement input."""


class ShapeMismatch(PovmError):
    pass


class DomainError(PovmError):
    pass


class NotPrime(DomainError):
    pass


class UnknownId(PovmError):
    pass


class NonUnital(PovmError):
    pass


class DimensionMismatch(PovmError):
    pass


class NotStochastic(PovmError):
    pass


@dataclass(frozen=True)
class ValidationReport:
    """Diagnostics of a POVM: positivity and normalisation defects."""

    hermitian_residual: float
    min_eigenvalue: float
    normalisation_residual: float
    tol: float

    @property
    def ok(self) -> bool:
        return (
            self.hermitian_residual <= self.tol
            and self.min_eigenvalue >= -self.tol
            and self.normalisation_residual <= self.tol
        )


class Povm:
    """Finite-outcome POVM ``{A_a}`` on ``C^d``."""

    __slots__ = ("elements",)

    def __init__(self, elements, tol: float = POVM_TOL):
        arr = np.array(elements, dtype=complex)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2] or arr.shape[0] < 1:
            raise ShapeMismatch(f"POVM elements must have shape (n, d, d), got {arr.shape}")
        res = float(np.max(np.abs(arr - arr.conj().transpose(0, 2, 1))))
        if res > tol:
            raise linalg.NonHermitian(f"POVM element not Hermitian (residual {res:.3e})")
        arr = 0.5 * (arr + arr.conj().transpose(0, 2, 1))
        arr.setflags(write=False)
        object.__setattr__(self, "elements", arr)

    def __setattr__(self, key, value):
        raise AttributeError("Povm is immutable")

    def __reduce__(self):
        return (Povm, (np.array(self.elements),))

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.elements.shape[0]

    def __len__(self):
        return self.n_outcomes

    def __getitem__(self, a) -> np.ndarray:
        return self.elements[a]

    def __iter__(self):
        return iter(self.elements)

    def __repr__(self):
        return f"Povm(n={self.n_outcomes}, d={self.dim})"

    def traces(self) -> np.ndarray:
        return np.real(np.trace(self.elements, axis1=1, axis2=2))

    def validate(self, tol: float = POVM_TOL) -> ValidationReport:
        herm = float(np.max(np.abs(self.elements - self.elements.conj().transpose(0, 2, 1))))
        mins = linalg.eigvalsh(self.elements)[:, 0]
        norm = float(np.max(np.abs(self.elements.sum(axis=0) - np.eye(self.dim))))
        return ValidationReport(herm, float(mins.min()), norm, tol)

    def is_valid(self, tol: float = POVM_TOL) -> bool:
        return self.validate(tol).ok

    def is_rank_one(self, tol: float = 1e-8) -> bool:
        """Every non-zero element has rank one."""
        if self.dim == 1:
            return True
        w = linalg.eigvalsh(self.elements)
        return bool(np.all(w[:, -2] <= tol * np.maximum(1.0, w[:, -1])))

    def is_projective(self, tol: float = 1e-8) -> bool:
        return all(np.allclose(el @ el, el, atol=tol) for el in self.elements)

    def conjugate(self, u) -> "Povm":
        u = np.asarray(u)
        return Povm(u @ self.elements @ u.conj().T)

    def allclose(self, other: "Povm", atol: float = 1e-10) -> bool:
        return self.elements.shape == other.elements.shape and np.allclose(
            self.elements, other.elements, atol=atol
        )

    @classmethod
    def from_unitary(cls, u) -> "Povm":
        """Rank-one projective POVM ``{U|a><a|U^H}`` from the columns of ``u``."""
        u = np.asarray(u, dtype=complex)
        return cls(np.einsum("ia,ja->aij", u, u.conj()))

    @classmethod
    def computational(cls, d: int) -> "Povm":
        return cls.from_unitary(np.eye(d))

    @classmethod
    def trivial(cls, d: int, n: int) -> "Povm":
        return cls(np.broadcast_to(np.eye(d) / n, (n, d, d)))


class MeasurementSet:
    """Ordered tuple of ``k >= 1`` POVMs acting on the same ``C^d``."""

    __slots__ = ("measurements",)

    def __init__(self, measurements: Iterable[Povm | np.ndarray]):
        ms = tuple(m if isinstance(m, Povm) else Povm(m) for m in measurements)
        if not ms:
            raise ShapeMismatch("a measurement set needs at least one POVM")
        dims = {m.dim for m in ms}
        if len(dims) != 1:
            raise DimensionMismatch(f"measurements act on different dimensions {sorted(dims)}")
        object.__setattr__(self, "measurements", ms)

    def __setattr__(self, key, value):
        raise AttributeError("MeasurementSet is immutable")

    def __reduce__(self):
        return (MeasurementSet, (list(self.measurements),))

    @property
    def dim(self) -> int:
        return self.measurements[0].dim

    @property
    def k(self) -> int:
        return len(self.measurements)

    @property
    def outcome_counts(self) -> tuple[int, ...]:
        return tuple(m.n_outcomes for m in self.measurements)

    def __len__(self):
        return self.k

    def __getitem__(self, x) -> Povm:
        return self.measurements[x]

    def __iter__(self):
        return iter(self.measurements)

    def __repr__(self):
        return f"MeasurementSet(d={self.dim}, outcomes={self.outcome_counts})"

    def validate(self, tol: float = POVM_TOL) -> list[ValidationReport]:
        return [m.validate(tol) for m in self.measurements]

    def is_valid(self, tol: float = POVM_TOL) -> bool:
        return all(m.is_valid(tol) for m in self.measurements)

    def is_rank_one(self, tol: float = 1e-8) -> bool:
        return all(m.is_rank_one(tol) for m in self.measurements)

    def conjugate(self, u) -> "MeasurementSet":
        return MeasurementSet(m.conjugate(u) for m in self.measurements)

    def allclose(self, other: "MeasurementSet", atol: float = 1e-10) -> bool:
        return self.outcome_counts == other.outcome_counts and all(
            a.allclose(b, atol) for a, b in zip(self, other)
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "measurements": [
                [[[[float(z.real), float(z.imag)] for z in row] for row in el] for el in m.elements]
                for m in self.measurements
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MeasurementSet":
        try:
            d = int(data["dim"])
            ms = []
            for m in data["measurements"]:
                arr = np.array(m, dtype=float)
                if arr.ndim != 4 or arr.shape[1:] != (d, d, 2):
                    raise ShapeMismatch(f"element array has shape {arr.shape}, expected (n, {d}, {d}, 2)")
                ms.append(Povm(arr[..., 0] + 1j * arr[..., 1]))
        except (KeyError, TypeError) as exc:
            raise ShapeMismatch(f"malformed measurement JSON: {exc}") from exc
        return cls(ms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MeasurementSet":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "MeasurementSet":
        return cls.from_json(Path(path).read_text())


def mixture(s0: MeasurementSet, s1: MeasurementSet, p: float) -> MeasurementSet:
    """Element-wise convex combination ``p*s0 + (1-p)*s1``."""
    if s0.outcome_counts != s1.outcome_counts or s0.dim != s1.dim:
        raise ShapeMismatch("mixed sets must have identical shapes")
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"mixing weight must lie in [0, 1], got {p}")
    return MeasurementSet(
        Povm(p * a.elements + (1 - p) * b.elements) for a, b in zip(s0, s1)
    )


# --------------------------------------------------------------------------
# Processings


class PostProcessing:
    """Column-stochastic matrix ``beta[b', b]`` mapping ``{A_b}`` to ``{sum_b beta[b',b] A_b}``."""

    def __init__(self, beta, tol: float = 1e-9):
        beta = np.asarray(beta, dtype=float)
        if beta.ndim != 2:
            raise ShapeMismatch("post-processing must be a matrix")
        if beta.min() < -tol or np.max(np.abs(beta.sum(axis=0) - 1)) > tol:
            raise NotStochastic("post-processing columns must be probability vectors")
        self.beta = beta

    @property
    def n_in(self) -> int:
        return self.beta.shape[1]

    @property
    def n_out(self) -> int:
        return self.beta.shape[0]

    @classmethod
    def coarse_graining(cls, labels: Sequence[int], n_out: int | None = None) -> "PostProcessing":
        labels = list(labels)
        n_out = max(labels) + 1 if n_out is None else n_out
        beta = np.zeros((n_out, len(labels)))
        beta[labels, np.arange(len(labels))] = 1.0
        return cls(beta)

    def apply(self, povm: Povm) -> Povm:
        if povm.n_outcomes != self.n_in:
            raise ShapeMismatch(f"post-processing expects {self.n_in} outcomes, got {povm.n_outcomes}")
        return Povm(np.einsum("ob,bij->oij", self.beta, povm.elements))


class PreProcessing:
    """Unital CP map ``Lambda(X) = sum_i K_i X K_i^H`` from ``d x d`` to ``d' x d'``.

    Kraus operators have shape ``(d', d)``; unitality means
    ``sum_i K_i K_i^H = I_{d'}``.
    """

    def __init__(self, kraus, tol: float = 1e-9):
        k = np.array(kraus, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3:
            raise ShapeMismatch("Kraus operators must form an array of shape (r, d', d)")
        unit = np.einsum("rij,rkj->ik", k, k.conj())
        if np.max(np.abs(unit - np.eye(k.shape[1]))) > tol:
            raise NonUnital("sum_i K_i K_i^H must equal the identity")
        self.kraus = k

    @property
    def dim_in(self) -> int:
        return self.kraus.shape[2]

    @property
    def dim_out(self) -> int:
        return self.kraus.shape[1]

    def __call__(self, x) -> np.ndarray:
        return np.einsum("rij,...jk,rlk->...il", self.kraus, np.asarray(x), self.kraus.conj())

    def apply(self, povm: Povm) -> Povm:
        if povm.dim != self.dim_in:
            raise DimensionMismatch(f"map acts on dimension {self.dim_in}, POVM has {povm.dim}")
        return Povm(self(povm.elements))


def apply_post_processing(s: MeasurementSet, betas: Sequence[PostProcessing | np.ndarray | None]) -> MeasurementSet:
    """Apply one post-processing per measurement (``None`` leaves it unchanged)."""
    if len(betas) != s.k:
        raise ShapeMismatch("need one post-processing per measurement")
    out = []
    for m, b in zip(s, betas):
        if b is None:
            out.append(m)
        else:
            out.append((b if isinstance(b, PostProcessing) else PostProcessing(b)).apply(m))
    return MeasurementSet(out)


def apply_pre_processing(s: MeasurementSet, channel: PreProcessing) -> MeasurementSet:
    return MeasurementSet(channel.apply(m) for m in s)


# --------------------------------------------------------------------------
# Named constructions

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)


def qubit_theta_pair(theta: float) -> MeasurementSet:
    """Two projective qubit measurements with Bloch directions at angle ``2*theta``."""
    theta = float(theta)
    if not (0.0 <= theta <= np.pi / 4 + 1e-15):
        raise DomainError(f"theta must lie in [0, pi/4], got {theta}")
    c, s = np.cos(theta), np.sin(theta)
    na = c * PAULI_Z + s * PAULI_X
    nb = c * PAULI_Z - s * PAULI_X
    a = Povm([(IDENTITY2 + na) / 2, (IDENTITY2 - na) / 2])
    b = Povm([(IDENTITY2 + nb) / 2, (IDENTITY2 - nb) / 2])
    return MeasurementSet([a, b])


def fourier_matrix(d: int, sign: int = 1) -> np.ndarray:
    j = np.arange(d)
    return np.exp(sign * 2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def mub_pair(d: int) -> MeasurementSet:
    """Computational basis and Fourier basis in dimension ``d``."""
    if d < 2:
        raise DomainError("dimension must be at least 2")
    return MeasurementSet([Povm.computational(d), Povm.from_unitary(fourier_matrix(d))])


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % p for p in range(2, int(n**0.5) + 1))


def prime_mub_unitaries(d: int) -> list[np.ndarray]:
    """The ``d+1`` mutually unbiased bases of a prime dimension as unitaries.

    The first basis is computational; basis ``x+1`` has columns
    ``|x,a> = d^{-1/2} sum_l w^{x l^2 + a l} |l>`` with ``w = exp(2 pi i/d)``.
    For ``d = 2`` the quadratic phase is ``i^{x l^2}`` instead, giving the
    Pauli X and Y eigenbases.
    """
    if not _is_prime(d):
        raise NotPrime(f"{d} is not prime")
    l = np.arange(d)
    out = [np.eye(d, dtype=complex)]
    for x in range(d):
        if d == 2:
            quad = np.exp(1j * np.pi / 2 * x * l**2)
        else:
            quad = np.exp(2j * np.pi * x * l**2 / d)
        cols = quad[:, None] * np.exp(2j * np.pi * np.outer(l, l) / d) / np.sqrt(d)
        out.append(cols)
    return out


def prime_mub_set(d: int, k: int) -> MeasurementSet:
    """First ``k`` bases of the standard complete MUB set in prime dimension ``d``."""
    if not 1 <= k <= d + 1:
        raise DomainError(f"k must lie in [1, {d + 1}] for d={d}")
    return MeasurementSet(Povm.from_unitary(u) for u in prime_mub_unitaries(d)[:k])


def _rt(x):
    return np.sqrt(x)


QMUB3_UNITARY = np.array(
    [[1 / _rt(2), 1 / _rt(2), 0], [1 / _rt(2), -1 / _rt(2), 0], [0, 0, 1]], dtype=complex
)
DEV3_UNITARY = np.array(
    [
        [1 / _rt(2), 0.5, 0.5],
        [1 / _rt(2), -0.5, -0.5],
        [0, -1 / _rt(2), 1 / _rt(2)],
    ],
    dtype=complex,
)
_w3 = np.exp(2j * np.pi / 3)
MUB3_UNITARY = np.array(
    [[1, 1, 1], [1, _w3**2, _w3], [1, _w3, _w3**2]], dtype=complex
) / _rt(3)


def qmub_unitary(d: int) -> np.ndarray:
    """Hadamard on the first two levels, identity elsewhere."""
    if d < 2:
        raise DomainError("dimension must be at least 2")
    u = np.eye(d, dtype=complex)
    u[:2, :2] = np.array([[1, 1], [1, -1]]) / _rt(2)
    return u


def qmub_pair(d: int) -> MeasurementSet:
    """Qubit MUB pair embedded in ``C^d`` (computational basis on the complement)."""
    return MeasurementSet([Povm.computational(d), Povm.from_unitary(qmub_unitary(d))])


def qmub4_pair() -> MeasurementSet:
    """Two copies of the qubit MUB pair, one on each 2-dimensional block of ``C^4``."""
    h = np.array([[1, 1], [1, -1]]) / _rt(2)
    u = np.zeros((4, 4), dtype=complex)
    u[:2, :2] = h
    u[2:, 2:] = h
    return MeasurementSet([Povm.computational(4), Povm.from_unitary(u)])


def named_pair(name: str) -> MeasurementSet:
    """Named pair constructions.

    ``"qMUB3"`` and ``"qMUB(d)"`` (embedded qubit MUBs), ``"dev3"`` (the qutrit
    pair that minimises probabilistic robustness numerically), ``"qMUB4"``
    (block-diagonal qubit MUBs), ``"MUB3"`` (qutrit MUB pair with conjugate
    Fourier phases) and ``"MUB(d)"``.
    """
    key = name.strip()
    if key == "qMUB3":
        return qmub_pair(3)
    if key == "dev3":
        return MeasurementSet([Povm.computational(3), Povm.from_unitary(DEV3_UNITARY)])
    if key == "qMUB4":
        return qmub4_pair()
    if key == "MUB3":
        return MeasurementSet([Povm.computational(3), Povm.from_unitary(MUB3_UNITARY)])
    for prefix, builder in (("qMUB(", qmub_pair), ("MUB(", mub_pair)):
        if key.startswith(prefix) and key.endswith(")"):
            try:
                d = int(key[len(prefix):-1])
            except ValueError as exc:
                raise UnknownId(name) from exc
            return builder(d)
    raise UnknownId(f"unknown construction {name!r}")


def direct_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]), dtype=complex)
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0]:, a.shape[1]:] = b
    return out


def embed_set(inner: MeasurementSet, complement: MeasurementSet) -> MeasurementSet:
    """Direct sum: elements ``A_a (+) 0`` followed by ``0 (+) M_a`` for each measurement."""
    if inner.k != complement.k:
        raise ShapeMismatch("inner and complement sets need the same number of measurements")
    di, dc = inner.dim, complement.dim
    out = []
    for a, m in zip(inner, complement):
        els = [direct_sum(el, np.zeros((dc, dc))) for el in a.elements]
        els += [direct_sum(np.zeros((di, di)), el) for el in m.elements]
        out.append(Povm(els))
    return MeasurementSet(out)


def embed_pair(inner: MeasurementSet, m: Povm, n: Povm) -> MeasurementSet:
    """Embed a pair into a larger space with ``(M, N)`` on the orthogonal complement."""
    return embed_set(inner, MeasurementSet([m, n]))


def embed_computational(inner: MeasurementSet, d_f: int) -> MeasurementSet:
    """Embed into ``C^{d_f}``, using the computational basis on the complement."""
    if d_f < inner.dim:
        raise DimensionMismatch("target dimension smaller than the inner dimension")
    if d_f == inner.dim:
        return inner
    comp = Povm.computational(d_f - inner.dim)
    return embed_set(inner, MeasurementSet([comp] * inner.k))


def pad_with_zero_outcomes(s: MeasurementSet, n_total: int | Sequence[int]) -> MeasurementSet:
    """Append zero elements so each measurement has ``n_total`` outcomes."""
    totals = [n_total] * s.k if isinstance(n_total, int) else list(n_total)
    out = []
    for m, n in zip(s, totals):
        if n < m.n_outcomes:
            raise ShapeMismatch("cannot pad to fewer outcomes")
        extra = np.zeros((n - m.n_outcomes, m.dim, m.dim), dtype=complex)
        out.append(Povm(np.concatenate([m.elements, extra])))
    return MeasurementSet(out)


def split_outcome(povm: Povm, a: int, weights: Sequence[float]) -> Povm:
    """Split element ``a`` into ``w_i A_a`` (a post-processing that relabels)."""
    weights = np.asarray(weights, dtype=float)
    els = list(povm.elements[:a]) + [w * povm.elements[a] for w in weights] + list(povm.elements[a + 1:])
    return Povm(els)


def rank_one_refinement(povm: Povm, tol: float = 1e-12) -> tuple[Povm, np.ndarray]:
    """Split every element into rank-one pieces.

    Returns the refined POVM and the label of the original outcome for each
    refined element, so that coarse-graining by the labels recovers ``povm``.
    """
    els, labels = [], []
    for a, el in enumerate(povm.elements):
        w, v = np.linalg.eigh(el)
        for i in range(len(w)):
            if w[i] > tol:
                els.append(w[i] * np.outer(v[:, i], v[:, i].conj()))
                labels.append(a)
    if not els:
        raise PovmError("POVM has no non-zero element")
    return Povm(els), np.asarray(labels)


# --------------------------------------------------------------------------
# Random constructions


def random_rank_one_projective(d: int, seed=None) -> Povm:
    return Povm.from_unitary(linalg.haar_unitary(d, seed))


def random_rank_one_povm(d: int, n: int, seed=None) -> Povm:
    """Rank-one POVM ``{V^H |i><i| V}`` from a Haar isometry ``V: C^d -> C^n``."""
    if n < d:
        raise DomainError("a rank-one POVM needs at least d outcomes")
    v = linalg.haar_isometry(d, n, seed)
    return Povm(np.einsum("ia,ib->iab", v.conj(), v))


def random_povm(d: int, n: int, seed=None, rank: int | None = None) -> Povm:
    """Random POVM: normalised Wishart elements ``S^{-1/2} W_i W_i^H S^{-1/2}``."""
    rng = linalg._as_rng(seed)
    r = d if rank is None else rank
    w = (rng.standard_normal((n, d, r)) + 1j * rng.standard_normal((n, d, r))) / np.sqrt(2)
    g = w @ w.conj().transpose(0, 2, 1)
    s = linalg.inv_sqrt(g.sum(axis=0))
    return Povm(s @ g @ s)


def random_measurement_set(
    d: int, outcome_counts: Sequence[int], seed=None, restriction: str = "general"
) -> MeasurementSet:
    """Random set of POVMs.

    ``restriction`` is ``"general"`` (Wishart POVMs), ``"rank-one"`` (rank-one
    POVMs from Haar isometries) or ``"projective"`` (Haar bases; requires
    ``n = d``).
    """
    rng = linalg._as_rng(seed)
    out = []
    for n in outcome_counts:
        if restriction == "general":
            out.append(random_povm(d, n, rng))
        elif restriction == "rank-one":
            out.append(random_rank_one_povm(d, n, rng))
        elif restriction == "projective":
            if n != d:
                raise DomainError("projective rank-one measurements need n = d outcomes")
            out.append(random_rank_one_projective(d, rng))
        else:
            raise DomainError(f"unknown restriction {restriction!r}")
    return MeasurementSet(out)


def random_stochastic(n_out: int, n_in: int, seed=None) -> PostProcessing:
    rng = linalg._as_rng(seed)
    beta = rng.exponential(size=(n_out, n_in))
    return PostProcessing(beta / beta.sum(axis=0))


def random_unital_channel(d_in: int, d_out: int, n_kraus: int = 2, seed=None) -> PreProcessing:
    """Random unital CP map ``M_{d_in} -> M_{d_out}``."""
    rng = linalg._as_rng(seed)
    k = (rng.standard_normal((n_kraus, d_out, d_in)) + 1j * rng.standard_normal((n_kraus, d_out, d_in))) / np.sqrt(2)
    s = linalg.inv_sqrt(np.einsum("rij,rkj->ik", k, k.conj()))
    return PreProcessing(np.einsum("ij,rjk->rik", s, k))
