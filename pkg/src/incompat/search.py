"""Sampling searches for the most incompatible measurement sets, and figure data.

A search draws random measurement sets, evaluates the requested robustness
measures and keeps the smallest value of each: an upper estimate of the
minimal robustness ``chi`` for that shape.  Sample ``i`` uses the generator
``default_rng([seed, i])``, so results do not depend on the number of workers
or on interruption and resumption from a checkpoint.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds, linalg
from .noise import NoiseModelKind
from .povm import (
    DomainError,
    MeasurementSet,
    Povm,
    named_pair,
    qubit_theta_pair,
    random_povm,
    random_rank_one_povm,
)
from .robustness import MAX_PARENT_OUTCOMES, TooLarge, robustness

log = logging.getLogger(__name__)

RESTRICTIONS = ("rank-one-projective", "rank-one", "general")
DEFAULT_MEASURES = ("d", "p", "jm", "g")


def worker_cap() -> int:
    """Worker limit from ``INCOMPAT_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("INCOMPAT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SearchConfig:
    d: int
    outcome_counts: tuple | None = None
    k: int = 2
    measures: tuple = DEFAULT_MEASURES
    samples: int = 1000
    seed: int = 0
    restriction: str = "rank-one-projective"
    include: tuple = ()  # named constructions evaluated before the random samples
    include_random: bool = False
    tol: float = 1e-8
    keep_log: bool = False
    checkpoint: str | None = None
    checkpoint_every: int = 100
    workers: int | None = None

    def __post_init__(self):
        if self.outcome_counts is None:
            self.outcome_counts = (self.d,) * self.k
        self.outcome_counts = tuple(int(n) for n in self.outcome_counts)
        self.k = len(self.outcome_counts)
        kinds = [NoiseModelKind.parse(m) for m in self.measures]
        if NoiseModelKind.RANDOM in kinds and not self.include_random:
            # the random-noise minimum is 1/2 for every dimension; nothing to search for
            kinds.remove(NoiseModelKind.RANDOM)
        self.measures = tuple(k.value for k in kinds)
        self.include = tuple(self.include)
        if self.samples < 1:
            raise ValueError("sample count must be at least 1")
        if self.restriction not in RESTRICTIONS:
            raise DomainError(f"unknown restriction {self.restriction!r}")
        if self.restriction == "rank-one-projective" and any(n != self.d for n in self.outcome_counts):
            raise DomainError("rank-one projective sampling needs n = d outcomes")
        if self.restriction == "rank-one" and any(n < self.d for n in self.outcome_counts):
            raise DomainError("rank-one POVMs need at least d outcomes")
        if math.prod(self.outcome_counts) > MAX_PARENT_OUTCOMES:
            raise TooLarge("parent POVM would have too many outcomes")

    def key(self) -> dict:
        """Fields that must agree for a checkpoint to be resumed."""
        return {
            "d": self.d,
            "outcome_counts": list(self.outcome_counts),
            "measures": list(self.measures),
            "seed": self.seed,
            "restriction": self.restriction,
            "include": list(self.include),
        }


@dataclass
class SearchRecord:
    config: SearchConfig
    best_eta: dict = field(default_factory=dict)
    best_set: dict = field(default_factory=dict)
    best_index: dict = field(default_factory=dict)
    samples_done: int = 0
    log: list = field(default_factory=list)

    @property
    def chi(self) -> dict:
        return dict(self.best_eta)

    def to_dict(self) -> dict:
        return {
            "config": self.config.key(),
            "seed": self.config.seed,
            "samples_done": self.samples_done,
            "best_eta": self.best_eta,
            "best_index": self.best_index,
            "best_set": {m: s.to_dict() for m, s in self.best_set.items()},
        }

    @classmethod
    def from_dict(cls, cfg: SearchConfig, data: dict) -> "SearchRecord":
        return cls(
            cfg,
            best_eta={m: float(v) for m, v in data["best_eta"].items()},
            best_set={m: MeasurementSet.from_dict(v) for m, v in data["best_set"].items()},
            best_index=dict(data.get("best_index", {})),
            samples_done=int(data["samples_done"]),
        )


def haar_pair_povm(d: int, n: int, rng) -> Povm:
    """Haar-random measurement with ``n`` outcomes.

    ``n = d``: a Haar basis; ``n > d``: rank-one POVM from a Haar isometry;
    ``n < d``: a Haar basis grouped into ``n`` contiguous blocks of near-equal rank.
    """
    if n >= d:
        return random_rank_one_povm(d, n, rng) if n > d else Povm.from_unitary(linalg.haar_unitary(d, rng))
    u = linalg.haar_unitary(d, rng)
    proj = np.einsum("ib,jb->bij", u, u.conj())
    groups = np.array_split(np.arange(d), n)
    return Povm(np.stack([proj[g].sum(axis=0) for g in groups]))


def sample_set(cfg: SearchConfig, index: int) -> MeasurementSet:
    rng = np.random.default_rng([cfg.seed, index])
    out = []
    for n in cfg.outcome_counts:
        if cfg.restriction == "rank-one-projective":
            out.append(Povm.from_unitary(linalg.haar_unitary(cfg.d, rng)))
        elif cfg.restriction == "rank-one":
            out.append(random_rank_one_povm(cfg.d, n, rng))
        else:
            out.append(random_povm(cfg.d, n, rng))
    return MeasurementSet(out)


def _evaluate(args):
    s, measures, tol = args
    return {m: robustness(s, m, tol=tol) for m in measures}


def _candidates(cfg: SearchConfig, start: int, stop: int):
    n_inc = len(cfg.include)
    for i in range(start, stop):
        if i < n_inc:
            yield i, named_pair(cfg.include[i])
        else:
            yield i, sample_set(cfg, i - n_inc)


def _load_checkpoint(cfg: SearchConfig) -> SearchRecord | None:
    if not cfg.checkpoint or not Path(cfg.checkpoint).exists():
        return None
    data = json.loads(Path(cfg.checkpoint).read_text())
    if data.get("config") != cfg.key():
        log.warning("checkpoint %s was written for a different search; starting afresh", cfg.checkpoint)
        return None
    return SearchRecord.from_dict(cfg, data)


def _save_checkpoint(rec: SearchRecord) -> None:
    path = Path(rec.config.checkpoint)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(rec.to_dict()))
    tmp.replace(path)


def estimate_chi(cfg: SearchConfig) -> SearchRecord:
    """Smallest sampled robustness for each requested measure.

    Named constructions in ``cfg.include`` are evaluated first and count
    towards ``samples_done``.  Updates of the best record are applied in
    sample order, so ties resolve to the earliest sample whatever the worker
    count.
    """
    rec = _load_checkpoint(cfg) or SearchRecord(cfg)
    total = cfg.samples + len(cfg.include)
    workers = min(cfg.workers or worker_cap(), worker_cap())
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while rec.samples_done < total:
            stop = min(total, rec.samples_done + max(1, cfg.checkpoint_every))
            batch = list(_candidates(cfg, rec.samples_done, stop))
            jobs = [(s, cfg.measures, cfg.tol) for _, s in batch]
            results = pool.map(_evaluate, jobs) if pool else map(_evaluate, jobs)
            for (i, s), vals in zip(batch, results):
                for m, v in vals.items():
                    if m not in rec.best_eta or v < rec.best_eta[m]:
                        rec.best_eta[m] = v
                        rec.best_set[m] = s
                        rec.best_index[m] = i
                if cfg.keep_log:
                    rec.log.append({"index": i, **vals})
            rec.samples_done = stop
            if cfg.checkpoint:
                _save_checkpoint(rec)
    finally:
        if pool:
            pool.shutdown()
    return rec


# --------------------------------------------------------------------------
# The qutrit path through the dev, qMUB and MUB pairs


def theta_leg_unitary(theta: float) -> np.ndarray:
    """Basis unitary of the first leg; ``pi/4`` gives the dev basis and ``pi/2`` the qMUB basis."""
    c, s = math.cos(theta), math.sin(theta)
    r = 1 / math.sqrt(2)
    return np.array([[r, s * r, c * r], [r, -s * r, -c * r], [0.0, -c, s]])


def qmub_to_mub_unitary() -> np.ndarray:
    """Unitary ``V`` with ``V^dagger B^qMUB V = B^MUB`` (outcome order preserved)."""
    s2, s3 = math.sqrt(2), math.sqrt(3)
    return np.array([
        [s2 / s3, (s3 + 3j) / (6 * s2), (s3 - 3j) / (6 * s2)],
        [0, (s3 - 1j) / (2 * s2), (s3 + 1j) / (2 * s2)],
        [1 / s3, (-s3 - 3j) / 6, (-s3 + 3j) / 6],
    ])


def devil_path(theta=None, t=None) -> list:
    """Points ``(leg, parameter, MeasurementSet)`` on the two legs of the qutrit path.

    The first measurement is always the computational basis.  ``theta`` values
    lie in ``[pi/4, pi/2]``; ``t`` values lie in ``[0, 1]`` and give
    ``e^{itH} B^qMUB e^{-itH}`` with ``H`` the principal logarithm of
    ``V^dagger``.
    """
    A = Povm.computational(3)
    out = []
    for th in ([] if theta is None else np.atleast_1d(theta)):
        if not (math.pi / 4 - 1e-12 <= th <= math.pi / 2 + 1e-12):
            raise DomainError("theta must lie in [pi/4, pi/2]")
        out.append(("theta", float(th), MeasurementSet([A, Povm.from_unitary(theta_leg_unitary(th))])))
    ts = [] if t is None else np.atleast_1d(t)
    if len(ts):
        H = linalg.principal_log(qmub_to_mub_unitary().conj().T)
        B = named_pair("qMUB3")[1]
        for tt in ts:
            if not (-1e-12 <= tt <= 1 + 1e-12):
                raise DomainError("t must lie in [0, 1]")
            out.append(("t", float(tt), MeasurementSet([A, B.conjugate(linalg.expi(H, tt))])))
    return out


# --------------------------------------------------------------------------
# Figure data


FIGURES = ("fig_runex", "fig_devil", "fig_chi")


@dataclass
class Table:
    columns: list
    rows: list

    def to_csv(self, digits: int = 12) -> str:
        lines = [",".join(self.columns)]
        for r in self.rows:
            lines.append(",".join(v if isinstance(v, str) else f"{v:.{digits}g}" for v in r))
        return "\n".join(lines) + "\n"

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def figure_curves(target: str, resolution: int = 50, tol: float = 1e-9, dims: Sequence[int] = range(2, 9)) -> Table:
    """Tabulated curves.

    * ``fig_runex``: the qubit pair at angle ``theta in [0, pi/4]``: SDP values
      of the five measures next to their closed forms;
    * ``fig_devil``: SDP values of ``d, p, jm, g`` along the qutrit path
      (``resolution`` points per leg);
    * ``fig_chi``: per dimension, the MUB and embedded-qubit-MUB values.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if target == "fig_runex":
        cols = ["theta"]
        kinds = [k.value for k in NoiseModelKind]
        cols += [f"eta_{k}" for k in kinds] + [f"closed_{k}" for k in kinds]
        rows = []
        for th in np.linspace(0, math.pi / 4, resolution):
            s = qubit_theta_pair(th)
            rows.append([float(th)] + [robustness(s, k, tol) for k in kinds]
                        + [bounds.theta_closed_form(th, k) for k in kinds])
        return Table(cols, rows)
    if target == "fig_devil":
        kinds = ["d", "p", "jm", "g"]
        pts = devil_path(theta=np.linspace(math.pi / 4, math.pi / 2, resolution),
                         t=np.linspace(0, 1, resolution)[1:])
        rows = []
        for pos, (leg, par, s) in enumerate(pts):
            rows.append([float(pos), leg, par] + [robustness(s, k, tol) for k in kinds])
        return Table(["position", "leg", "parameter"] + [f"eta_{k}" for k in kinds], rows)
    if target == "fig_chi":
        cols = ["d", "mub_d", "mub_p", "mub_jm", "mub_g", "qmub_d", "universal_lower_d"]
        rows = []
        for d in dims:
            rows.append([float(d)] + [bounds.mub_closed_form(d, k) for k in ("d", "p", "jm", "g")]
                        + [bounds.qmub_closed_form(d) if d >= 2 else math.nan,
                           bounds.depolarising_pair_lower_bound(d)])
        return Table(cols, rows)
    raise ValueError(f"unknown figure {target!r}; choose from {', '.join(FIGURES)}")
