"""The five noise models and their canonical representatives.

A noise model assigns to a measurement set ``S`` a family of admissible noise
sets ``N``; the noisy set is ``eta*S + (1-eta)*N``.

* depolarising  -- ``N_a = tr(A_a) I/d``
* random        -- ``N_a = I/n``
* probabilistic -- ``N_a = p_a I`` for a probability vector ``p``
* jointly measurable -- any jointly measurable set of the same shape
* generalised   -- any set of POVMs of the same shape

The families are nested: {depolarising, random} ⊂ probabilistic ⊂ jointly
measurable ⊂ generalised.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .povm import MeasurementSet, Povm, ShapeMismatch, mixture


class NoiseModelKind(str, enum.Enum):
    DEPOLARISING = "d"
    RANDOM = "r"
    PROBABILISTIC = "p"
    JOINTLY_MEASURABLE = "jm"
    GENERALISED = "g"

    @classmethod
    def parse(cls, value) -> "NoiseModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip()
        for kind in cls:
            if key == kind.value or key.lower() == kind.name.lower():
                return kind
        aliases = {"depolarizing": "d", "generalized": "g", "jointly-measurable": "jm"}
        if key.lower() in aliases:
            return cls(aliases[key.lower()])
        raise ValueError(f"unknown noise model {value!r}")


ALL_KINDS = tuple(NoiseModelKind)


class UnsupportedKind(ValueError):
    pass


@dataclass(frozen=True)
class NoiseInstance:
    """A concrete noise set, with optional certificate data.

    ``probabilities`` holds the distributions of a probabilistic noise set and
    ``parent`` a parent POVM (array of shape ``(n_1, ..., n_k, d, d)``) of a
    jointly measurable one.
    """

    kind: NoiseModelKind
    noise: MeasurementSet
    probabilities: tuple | None = None
    parent: np.ndarray | None = None


def canonical_noise(kind, s: MeasurementSet) -> NoiseInstance:
    """Default noise representative for ``kind``.

    Depolarising and random noise are unique; for the three larger models the
    representative is the trivial uniform set ``I/n_x``.
    """
    kind = NoiseModelKind.parse(kind)
    d = s.dim
    eye = np.eye(d)
    if kind is NoiseModelKind.DEPOLARISING:
        noise = MeasurementSet(Povm(m.traces()[:, None, None] * eye / d) for m in s)
        return NoiseInstance(kind, noise)
    uniform = MeasurementSet(Povm.trivial(d, m.n_outcomes) for m in s)
    probs = tuple(np.full(m.n_outcomes, 1.0 / m.n_outcomes) for m in s)
    if kind is NoiseModelKind.RANDOM:
        return NoiseInstance(kind, uniform)
    if kind is NoiseModelKind.PROBABILISTIC:
        return NoiseInstance(kind, uniform, probabilities=probs)
    parent = trivial_parent(probs, d)
    return NoiseInstance(kind, uniform, probabilities=probs, parent=parent)


def probabilistic_noise(s: MeasurementSet, probabilities: Sequence) -> NoiseInstance:
    probs = tuple(np.asarray(p, dtype=float) for p in probabilities)
    if len(probs) != s.k or any(len(p) != m.n_outcomes for p, m in zip(probs, s)):
        raise ShapeMismatch("one probability per outcome is required")
    if any(p.min() < -1e-12 or abs(p.sum() - 1) > 1e-9 for p in probs):
        raise ValueError("noise probabilities must form distributions")
    eye = np.eye(s.dim)
    noise = MeasurementSet(Povm(p[:, None, None] * eye) for p in probs)
    return NoiseInstance(NoiseModelKind.PROBABILISTIC, noise, probabilities=probs)


def trivial_parent(probabilities, d: int) -> np.ndarray:
    """Parent ``prod_x p_x(j_x) I`` of a set of trivial measurements."""
    joint = np.ones(())
    for p in probabilities:
        joint = np.multiply.outer(joint, np.asarray(p, dtype=float))
    return joint[..., None, None] * np.eye(d)


def marginals(parent: np.ndarray) -> MeasurementSet:
    """Marginal POVMs of a parent array of shape ``(n_1, ..., n_k, d, d)``."""
    k = parent.ndim - 2
    out = []
    for x in range(k):
        axes = tuple(y for y in range(k) if y != x)
        out.append(Povm(parent.sum(axis=axes)))
    return MeasurementSet(out)


def mix(s: MeasurementSet, noise: NoiseInstance | MeasurementSet, eta: float) -> MeasurementSet:
    """Noisy set ``eta*S + (1-eta)*N`` (element-wise)."""
    n = noise.noise if isinstance(noise, NoiseInstance) else noise
    return mixture(s, n, float(eta))


def _is_identity_multiple(m, tol):
    d = m.shape[0]
    c = np.real(np.trace(m)) / d
    return np.linalg.norm(m - c * np.eye(d)) <= tol * max(1.0, np.linalg.norm(m)), c


def membership_check(kind, s: MeasurementSet, candidate: NoiseInstance | MeasurementSet, tol: float = 1e-8) -> bool:
    """Whether ``candidate`` is admissible noise for ``s`` under ``kind``."""
    kind = NoiseModelKind.parse(kind)
    noise = candidate.noise if isinstance(candidate, NoiseInstance) else candidate
    if noise.outcome_counts != s.outcome_counts or noise.dim != s.dim:
        return False
    if not noise.is_valid(tol):
        return False
    if kind is NoiseModelKind.GENERALISED:
        return True
    if kind in (NoiseModelKind.DEPOLARISING, NoiseModelKind.RANDOM):
        ref = canonical_noise(kind, s).noise
        return ref.allclose(noise, atol=tol)
    if kind is NoiseModelKind.PROBABILISTIC:
        for m in noise:
            for el in m.elements:
                ok, c = _is_identity_multiple(el, tol)
                if not ok or c < -tol:
                    return False
        return True
    # jointly measurable: use a supplied parent if available, else decide by SDP
    parent = candidate.parent if isinstance(candidate, NoiseInstance) else None
    if parent is not None:
        parent = np.asarray(parent)
        if parent.shape[:-2] != s.outcome_counts:
            return False
        flat = parent.reshape(-1, s.dim, s.dim)
        if np.linalg.eigvalsh(flat)[:, 0].min() < -tol:
            return False
        return marginals(parent).allclose(noise, atol=max(tol, 1e-9))
    from .robustness import is_jointly_measurable

    return is_jointly_measurable(noise, tol=max(tol, 1e-7))[0]
