"""Conic programs over Hermitian PSD cones and a primal-dual interior-point solver.

A :class:`ConicProgram` is a small modelling layer: variables are Hermitian
(or real-symmetric) PSD matrices, free Hermitian matrices, non-negative
scalars or free scalars; constraints are affine matrix equalities, matrix
inequalities (``expr >= rhs`` in the Loewner order) and scalar
(in)equalities.  Each constraint is a list of ``(variable_name, coefficient)``
terms:

* in a matrix constraint a matrix variable carries a real scalar factor and
  a scalar variable carries a Hermitian matrix;
* in a scalar constraint a matrix variable carries a Hermitian matrix ``H``
  (contributing ``Re tr(H V)``) and a scalar variable a real number.

Programs are compiled to the standard form ``min c.x  s.t.  A x = b,
x in K`` using an orthonormal basis of the Hermitian matrices, and solved by
a Mehrotra predictor-corrector method with the HKM search direction.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import linalg

DENSE_LIMIT = 400_000

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
MAX_ITER = "MaxIter"


class SolverFailure(RuntimeError):
    """Raised by callers that need an optimal solution but did not get one."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


# --------------------------------------------------------------------------
# Hermitian <-> vector maps


@lru_cache(maxsize=None)
def hermitian_basis(n: int, cplx: bool = True) -> np.ndarray:
    """Orthonormal basis (trace inner product) of Hermitian / real-symmetric matrices."""
    mats = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1
        mats.append(e)
    r = 1 / np.sqrt(2)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = e[j, i] = r
            mats.append(e)
    if cplx:
        for i in range(n):
            for j in range(i + 1, n):
                e = np.zeros((n, n), dtype=complex)
                e[i, j] = 1j * r
                e[j, i] = -1j * r
                mats.append(e)
    out = np.array(mats) if cplx else np.real(np.array(mats))
    out.setflags(write=False)
    return out


def svec_size(n: int, cplx: bool = True) -> int:
    return n * n if cplx else n * (n + 1) // 2


def svec(m, cplx: bool = True) -> np.ndarray:
    """Coordinates ``Re tr(E_p M)``; batched over leading axes."""
    m = np.asarray(m)
    n = m.shape[-1]
    e = hermitian_basis(n, cplx)
    flat = m.reshape(m.shape[:-2] + (n * n,))
    return np.real(flat @ e.reshape(len(e), n * n).conj().T)


def smat(v, n: int, cplx: bool = True) -> np.ndarray:
    e = hermitian_basis(n, cplx)
    v = np.asarray(v, dtype=float)
    out = (v @ e.reshape(len(e), n * n)).reshape(v.shape[:-1] + (n, n))
    return out


# --------------------------------------------------------------------------
# Modelling layer


@dataclass(frozen=True)
class Variable:
    name: str
    cone: str  # "psd", "free_matrix", "nonneg", "free"
    dim: int = 0
    complex: bool = True

    @property
    def is_matrix(self) -> bool:
        return self.dim > 0


@dataclass
class Constraint:
    name: str
    kind: str  # "eq", "psd" (matrix >=) or "geq" (scalar >=)
    dim: int  # 0 for scalar constraints
    complex: bool
    terms: list
    rhs: object

    @property
    def is_matrix(self) -> bool:
        return self.dim > 0


@dataclass
class FeasibilityReport:
    """Residuals of a candidate point against a program."""

    residuals: dict  # constraint name -> equality residual or inequality violation
    cone_violations: dict  # variable name -> cone violation (>= 0)
    objective: float
    tol: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def max_cone_violation(self) -> float:
        return max(self.cone_violations.values(), default=0.0)

    @property
    def feasible(self) -> bool:
        return self.max_residual <= self.tol and self.max_cone_violation <= self.tol

    def worst(self, n: int = 3) -> list[tuple[str, float]]:
        items = list(self.residuals.items()) + list(self.cone_violations.items())
        return sorted(items, key=lambda kv: -kv[1])[:n]


@dataclass
class ConicSolution:
    status: str
    objective: float
    dual_objective: float
    primal: dict
    dual: dict
    dual_slack: dict
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    solve_time: float
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class ConicProgram:
    def __init__(self, sense: str = "max"):
        if sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        self.sense = sense
        self.variables: dict[str, Variable] = {}
        self.constraints: list[Constraint] = []
        self._cnames: set[str] = set()
        self.objective_terms: list = []
        self.objective_constant = 0.0

    # -- variables
    def _add_var(self, var: Variable) -> str:
        if var.name in self.variables:
            raise ValueError(f"duplicate variable {var.name!r}")
        self.variables[var.name] = var
        return var.name

    def add_psd(self, name: str, dim: int, cplx: bool = True) -> str:
        return self._add_var(Variable(name, "psd", int(dim), cplx))

    def add_free_matrix(self, name: str, dim: int, cplx: bool = True) -> str:
        return self._add_var(Variable(name, "free_matrix", int(dim), cplx))

    def add_nonneg(self, name: str) -> str:
        return self._add_var(Variable(name, "nonneg"))

    def add_free(self, name: str) -> str:
        return self._add_var(Variable(name, "free"))

    # -- constraints
    def _check_terms(self, terms, dim, cplx):
        out = []
        for name, coef in terms:
            var = self.variables.get(name)
            if var is None:
                raise KeyError(f"unknown variable {name!r}")
            if dim:
                if var.is_matrix:
                    if var.dim != dim or var.complex != cplx:
                        raise ValueError(f"variable {name!r} does not match constraint shape")
                    coef = float(coef)
                else:
                    coef = np.asarray(coef, dtype=complex if cplx else float)
                    if coef.shape != (dim, dim):
                        raise ValueError(f"coefficient of {name!r} must be {dim}x{dim}")
            else:
                if var.is_matrix:
                    coef = np.asarray(coef, dtype=complex if var.complex else float)
                    if coef.shape != (var.dim, var.dim):
                        raise ValueError(f"coefficient of {name!r} must be {var.dim}x{var.dim}")
                else:
                    coef = float(coef)
            out.append((name, coef))
        return out

    def _add_constraint(self, con: Constraint):
        if con.name in self._cnames:
            raise ValueError(f"duplicate constraint {con.name!r}")
        self._cnames.add(con.name)
        self.constraints.append(con)
        return con.name

    def add_matrix_constraint(self, name, terms, rhs, kind="eq", dim=None, cplx=True):
        """``sum(terms) == rhs`` (kind ``"eq"``) or ``sum(terms) >= rhs`` (kind ``"psd"``)."""
        if kind not in ("eq", "psd"):
            raise ValueError("matrix constraints are 'eq' or 'psd'")
        if dim is None:
            rhs = np.asarray(rhs)
            dim = rhs.shape[0]
        rhs = np.zeros((dim, dim)) if rhs is None else np.asarray(rhs)
        rhs = rhs.astype(complex if cplx else float)
        terms = self._check_terms(terms, dim, cplx)
        return self._add_constraint(Constraint(name, kind, dim, cplx, terms, rhs))

    def add_scalar_constraint(self, name, terms, rhs=0.0, kind="eq"):
        """``sum(terms) == rhs``, ``>= rhs`` (``"geq"``) or ``<= rhs`` (``"leq"``)."""
        terms = self._check_terms(terms, 0, True)
        rhs = float(rhs)
        if kind == "leq":
            terms = [(n, -c) for n, c in terms]
            rhs, kind = -rhs, "geq"
        if kind not in ("eq", "geq"):
            raise ValueError("scalar constraints are 'eq', 'geq' or 'leq'")
        return self._add_constraint(Constraint(name, kind, 0, False, terms, rhs))

    def set_objective(self, terms, constant: float = 0.0):
        self.objective_terms = self._check_terms(terms, 0, True)
        self.objective_constant = float(constant)

    # -- evaluation
    def _eval(self, terms, dim, assignment):
        if dim:
            acc = np.zeros((dim, dim), dtype=complex)
            for name, coef in terms:
                val = assignment[name]
                var = self.variables[name]
                acc = acc + (coef * np.asarray(val) if var.is_matrix else float(val) * coef)
            return acc
        acc = 0.0
        for name, coef in terms:
            var = self.variables[name]
            val = assignment[name]
            if var.is_matrix:
                acc += float(np.real(np.sum(coef * np.asarray(val).T)))
            else:
                acc += coef * float(val)
        return acc

    def objective_value(self, assignment: Mapping) -> float:
        return self._eval(self.objective_terms, 0, assignment) + self.objective_constant

    def check_feasible(self, assignment: Mapping, tol: float = 1e-7) -> FeasibilityReport:
        """Per-constraint residuals and per-variable cone violations of a point.

        Equality residuals are Frobenius norms; inequality entries are the
        amount by which the inequality is violated (0 when satisfied).
        """
        residuals = {}
        for con in self.constraints:
            lhs = self._eval(con.terms, con.dim, assignment)
            diff = lhs - con.rhs
            if con.kind == "eq":
                residuals[con.name] = float(np.linalg.norm(diff)) if con.dim else abs(float(diff))
            elif con.kind == "psd":
                residuals[con.name] = max(0.0, -linalg.min_eigenvalue(diff))
            else:
                residuals[con.name] = max(0.0, -float(diff))
        cones = {}
        for var in self.variables.values():
            val = assignment[var.name]
            if var.cone == "psd":
                herm = linalg.hermitian_residual(np.asarray(val))
                cones[var.name] = max(herm, -linalg.min_eigenvalue(val), 0.0)
            elif var.cone == "nonneg":
                cones[var.name] = max(0.0, -float(val))
            elif var.cone == "free_matrix":
                cones[var.name] = linalg.hermitian_residual(np.asarray(val))
        return FeasibilityReport(residuals, cones, self.objective_value(assignment), tol)

    # -- transformations
    def real_embedding(self) -> "ConicProgram":
        """Equivalent program with every complex matrix replaced by a real symmetric one.

        ``X = R + iS`` maps to ``[[R, -S], [S, R]]``.  Linear functionals of a
        complex variable become ``1/2 <embed(L), Y>``, complex matrix
        equalities become one scalar equality per basis element, and matrix
        inequalities are embedded directly (embedding preserves positivity).
        """
        def emb(m):
            m = np.asarray(m, dtype=complex)
            return np.block([[m.real, -m.imag], [m.imag, m.real]])

        out = ConicProgram(self.sense)
        for v in self.variables.values():
            if v.is_matrix and v.complex:
                out._add_var(Variable(v.name, v.cone, 2 * v.dim, False))
            else:
                out._add_var(v)

        def scalar_terms(terms, basis_el=None):
            res = []
            for name, coef in terms:
                var = self.variables[name]
                if basis_el is None:
                    if var.is_matrix and var.complex:
                        res.append((name, 0.5 * emb(coef)))
                    else:
                        res.append((name, coef))
                else:
                    # coefficient of the p-th coordinate of a complex matrix expression
                    if var.is_matrix:
                        res.append((name, 0.5 * coef * emb(basis_el)))
                    else:
                        res.append((name, float(np.real(np.sum(basis_el * coef.T)))))
            return res

        for con in self.constraints:
            if con.dim and con.complex:
                if con.kind == "eq":
                    basis = hermitian_basis(con.dim, True)
                    for p, e in enumerate(basis):
                        rhs = float(np.real(np.sum(e * con.rhs.T)))
                        out.add_scalar_constraint(f"{con.name}#{p}", scalar_terms(con.terms, e), rhs)
                else:
                    terms = [
                        (n, c if self.variables[n].is_matrix else emb(c)) for n, c in con.terms
                    ]
                    out.add_matrix_constraint(con.name, terms, emb(con.rhs), "psd", 2 * con.dim, False)
            elif con.dim:
                out._add_constraint(con)
            else:
                out._add_constraint(Constraint(con.name, con.kind, 0, False, scalar_terms(con.terms), con.rhs))
        out.set_objective(scalar_terms(self.objective_terms), self.objective_constant)
        return out

    def to_text(self) -> str:
        """Human-readable dump for debugging."""
        def fmt(c):
            if np.ndim(c) == 0:
                return f"{float(c):+.6g}"
            return "[" + "; ".join(" ".join(f"{z.real:+.4g}{z.imag:+.4g}j" for z in row) for row in np.asarray(c)) + "]"

        lines = [f"{self.sense}imise " + " ".join(f"{fmt(c)}*{n}" for n, c in self.objective_terms)
                 + (f" {self.objective_constant:+.6g}" if self.objective_constant else "")]
        lines.append("variables:")
        for v in self.variables.values():
            shape = f"{v.dim}x{v.dim} {'herm' if v.complex else 'sym'}" if v.is_matrix else "scalar"
            lines.append(f"  {v.name}: {v.cone} {shape}")
        lines.append("constraints:")
        op = {"eq": "==", "psd": ">=", "geq": ">="}
        for c in self.constraints:
            lhs = " ".join(f"{fmt(coef)}*{n}" for n, coef in c.terms)
            lines.append(f"  {c.name}: {lhs} {op[c.kind]} {fmt(c.rhs)}")
        return "\n".join(lines)

    def compile(self) -> "StandardForm":
        return StandardForm.from_program(self)

    def solve(self, **options) -> ConicSolution:
        return solve(self, **options)


# --------------------------------------------------------------------------
# Standard form


@dataclass
class _Group:
    n: int
    cplx: bool
    start: int
    count: int

    @property
    def nsv(self) -> int:
        return svec_size(self.n, self.cplx)

    @property
    def stop(self) -> int:
        return self.start + self.count * self.nsv


class StandardForm:
    """``min c.x  s.t.  A x = b`` over a product of PSD blocks, an LP block and free variables."""

    def __init__(self):
        self.A = None
        self.b = None
        self.c = None
        self.groups: list[_Group] = []
        self.lp = slice(0, 0)
        self.free = slice(0, 0)
        self.var_cols: dict = {}
        self.rows: dict = {}
        self.sense = "min"
        self.obj_const = 0.0
        self.program = None

    @property
    def n_cone(self) -> int:
        return self.lp.stop

    @classmethod
    def from_program(cls, prog: ConicProgram) -> "StandardForm":
        sf = cls()
        sf.program = prog
        sf.sense = prog.sense
        sf.obj_const = prog.objective_constant

        # collect cone blocks (variables + slacks)
        psd_items = [(v.name, v.dim, v.complex) for v in prog.variables.values() if v.cone == "psd"]
        psd_items += [(f"__slack:{c.name}", c.dim, c.complex) for c in prog.constraints if c.kind == "psd"]
        lp_items = [v.name for v in prog.variables.values() if v.cone == "nonneg"]
        lp_items += [f"__slack:{c.name}" for c in prog.constraints if c.kind == "geq"]
        free_items = [(v.name, v.dim, v.complex) for v in prog.variables.values() if v.cone in ("free", "free_matrix")]

        col = 0
        keys = []
        for _, n, cplx in psd_items:
            if (n, cplx) not in keys:
                keys.append((n, cplx))
        for n, cplx in keys:
            members = [it for it in psd_items if it[1] == n and it[2] == cplx]
            g = _Group(n, cplx, col, len(members))
            for j, (name, _, _) in enumerate(members):
                s = g.start + j * g.nsv
                sf.var_cols[name] = ("psd", slice(s, s + g.nsv), n, cplx)
            sf.groups.append(g)
            col = g.stop
        lp_start = col
        for name in lp_items:
            sf.var_cols[name] = ("nonneg", slice(col, col + 1), 0, False)
            col += 1
        sf.lp = slice(lp_start, col)
        free_start = col
        for name, n, cplx in free_items:
            size = svec_size(n, cplx) if n else 1
            sf.var_cols[name] = ("free", slice(col, col + size), n, cplx)
            col += size
        sf.free = slice(free_start, col)
        n_cols = col

        rows, cols, vals = [], [], []
        b = []
        r = 0
        for con in prog.constraints:
            if con.dim:
                nsv = svec_size(con.dim, con.complex)
                rr = np.arange(r, r + nsv)
                for name, coef in con.terms:
                    kind, sl, n, cplx = sf.var_cols[name]
                    if n:
                        rows.append(rr)
                        cols.append(np.arange(sl.start, sl.stop))
                        vals.append(np.full(nsv, coef))
                    else:
                        v = svec(coef, con.complex)
                        nz = np.nonzero(np.abs(v) > 0)[0]
                        rows.append(rr[nz])
                        cols.append(np.full(len(nz), sl.start))
                        vals.append(v[nz])
                if con.kind == "psd":
                    sl = sf.var_cols[f"__slack:{con.name}"][1]
                    rows.append(rr)
                    cols.append(np.arange(sl.start, sl.stop))
                    vals.append(-np.ones(nsv))
                b.append(svec(con.rhs, con.complex))
                sf.rows[con.name] = slice(r, r + nsv)
                r += nsv
            else:
                for name, coef in con.terms:
                    kind, sl, n, cplx = sf.var_cols[name]
                    if n:
                        v = svec(coef, cplx)
                        nz = np.nonzero(np.abs(v) > 0)[0]
                        rows.append(np.full(len(nz), r))
                        cols.append(sl.start + nz)
                        vals.append(v[nz])
                    else:
                        rows.append(np.array([r]))
                        cols.append(np.array([sl.start]))
                        vals.append(np.array([coef]))
                if con.kind == "geq":
                    sl = sf.var_cols[f"__slack:{con.name}"][1]
                    rows.append(np.array([r]))
                    cols.append(np.array([sl.start]))
                    vals.append(np.array([-1.0]))
                b.append(np.array([con.rhs]))
                sf.rows[con.name] = slice(r, r + 1)
                r += 1
        m = r
        if rows:
            A = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, n_cols)
            ).tocsr()
        else:
            A = sp.csr_matrix((m, n_cols))
        A.sum_duplicates()
        sf.A = A
        sf.b = np.concatenate(b) if b else np.zeros(0)
        c = np.zeros(n_cols)
        for name, coef in prog.objective_terms:
            kind, sl, n, cplx = sf.var_cols[name]
            if n:
                c[sl] += svec(coef, cplx)
            else:
                c[sl.start] += coef
        sf.c = -c if prog.sense == "max" else c
        return sf

    def unpack(self, x: np.ndarray) -> dict:
        out = {}
        for name, (kind, sl, n, cplx) in self.var_cols.items():
            if name.startswith("__slack:"):
                continue
            out[name] = smat(x[sl], n, cplx) if n else float(x[sl.start])
        return out

    def unpack_rows(self, y: np.ndarray) -> dict:
        out = {}
        for con in self.program.constraints:
            sl = self.rows[con.name]
            out[con.name] = smat(y[sl], con.dim, con.complex) if con.dim else float(y[sl.start])
        return out


# --------------------------------------------------------------------------
# Interior-point method


class _Cone:
    """Batched operations on the cone part of the variable vector."""

    def __init__(self, sf: StandardForm):
        self.groups = sf.groups
        self.lp = sf.lp
        self.n_cone = sf.n_cone
        self.nu = sum(g.n * g.count for g in self.groups) + (self.lp.stop - self.lp.start)
        self.bases = [hermitian_basis(g.n, g.cplx) for g in self.groups]
        self.flat = [e.reshape(len(e), g.n * g.n) for e, g in zip(self.bases, self.groups)]
        # sparsity pattern of the block-diagonal scaling operator
        indptr = [0]
        indices = []
        for g in self.groups:
            nsv = g.nsv
            for j in range(g.count):
                cols = np.arange(g.start + j * nsv, g.start + (j + 1) * nsv)
                indices.append(np.tile(cols, nsv))
            indptr.extend([nsv] * (nsv * g.count))
        nlp = self.lp.stop - self.lp.start
        indices.append(np.arange(self.lp.start, self.lp.stop))
        indptr.extend([1] * nlp)
        self.w_indptr = np.cumsum(indptr)
        self.w_indices = np.concatenate(indices) if indices else np.zeros(0, dtype=int)

    def mats(self, v):
        out = []
        for g, f in zip(self.groups, self.flat):
            blk = v[g.start:g.stop].reshape(g.count, g.nsv)
            m = (blk @ f).reshape(g.count, g.n, g.n)
            out.append(m if g.cplx else m.real)
        return out

    def vecs(self, mats, lp):
        parts = []
        for m, g, f in zip(mats, self.groups, self.flat):
            parts.append(np.real(m.reshape(g.count, g.n * g.n) @ f.conj().T).ravel())
        parts.append(lp)
        return np.concatenate(parts)

    def identity(self, scale=1.0):
        mats = [np.broadcast_to(scale * np.eye(g.n), (g.count, g.n, g.n)) for g in self.groups]
        return self.vecs(mats, np.full(self.lp.stop - self.lp.start, scale))

    def step_length(self, v, dv, vm=None):
        """Largest alpha with ``v + alpha dv`` in the cone (inf if unbounded)."""
        alpha = np.inf
        vm = self.mats(v) if vm is None else vm
        for m, dm in zip(vm, self.mats(dv)):
            try:
                l = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                return 0.0
            li = np.linalg.inv(l)
            t = li @ dm @ li.conj().transpose(0, 2, 1)
            w = np.linalg.eigvalsh(0.5 * (t + t.conj().transpose(0, 2, 1)))[:, 0]
            lo = w.min()
            if lo < 0:
                alpha = min(alpha, -1.0 / lo)
        x, dx = v[self.lp], dv[self.lp]
        neg = dx < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-x[neg] / dx[neg])))
        return alpha


def _factor(M, Af):
    if Af is None:
        try:
            return ("chol", scipy.linalg.cho_factor(M, lower=True, check_finite=False))
        except (np.linalg.LinAlgError, ValueError):
            return ("lu", scipy.linalg.lu_factor(M + 1e-14 * np.max(np.abs(np.diag(M))) * np.eye(len(M)), check_finite=False))
    nf = Af.shape[1]
    K = np.block([[M, Af], [Af.T, np.zeros((nf, nf))]])
    return ("lu", scipy.linalg.lu_factor(K, check_finite=False))


def _back(fac, rhs):
    kind, f = fac
    if kind == "chol":
        return scipy.linalg.cho_solve(f, rhs, check_finite=False)
    return scipy.linalg.lu_solve(f, rhs, check_finite=False)


def _ipm(sf: StandardForm, tol: float, max_iter: int, verbose: bool = False):
    A, b, c = sf.A, sf.b, sf.c
    m, n = A.shape
    cone = _Cone(sf)
    nc = cone.n_cone
    Ac = A[:, :nc].tocsr()
    dense = m * nc <= DENSE_LIMIT
    if dense:
        Ac = Ac.toarray()
        AcT = Ac.T
        Ag = [Ac[:, g.start:g.stop].reshape(m, g.count, g.nsv) for g in cone.groups]
        AgT = [np.ascontiguousarray(a.transpose(1, 0, 2)) for a in Ag]
        Alp = Ac[:, cone.lp]
    else:
        AcT = Ac.T.tocsr()
    Af = A[:, nc:].toarray() if n > nc else None
    cc, cf = c[:nc], c[nc:]

    anorm = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel()) if m else np.zeros(0)
    bnorm, cnorm = np.linalg.norm(b), np.linalg.norm(c)
    zeta = max(10.0, np.sqrt(cone.nu), float(np.max((1 + np.abs(b)) / (1 + anorm), initial=1.0)) * np.sqrt(cone.nu))
    eta = max(10.0, np.sqrt(cone.nu), float(np.max(anorm, initial=0.0)), cnorm)
    x = np.concatenate([cone.identity(zeta), np.zeros(n - nc)])
    z = cone.identity(eta)
    y = np.zeros(m)

    status = MAX_ITER
    history = []
    best = None
    it = 0
    stall = 0
    for it in range(max_iter + 1):
        xc = x[:nc]
        rp = b - A @ x
        rd = cc - AcT @ y - z
        rdf = cf - (Af.T @ y if Af is not None else 0.0)
        pobj = float(c @ x)
        dobj = float(b @ y)
        mu = float(xc @ z) / max(cone.nu, 1)
        pinf = np.linalg.norm(rp) / (1 + bnorm)
        dinf = np.sqrt(np.linalg.norm(rd) ** 2 + np.linalg.norm(rdf) ** 2) / (1 + cnorm)
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        compl = float(xc @ z) / (1 + abs(pobj) + abs(dobj))
        err = max(pinf, dinf, relgap, compl)
        history.append((pobj, dobj, pinf, dinf, relgap))
        if verbose:
            print(f"{it:3d} pobj={pobj:+.10e} dobj={dobj:+.10e} pinf={pinf:.2e} dinf={dinf:.2e} gap={relgap:.2e}")
        if best is None or err < best[0]:
            best = (err, x.copy(), y.copy(), z.copy())
        if err <= tol:
            status = OPTIMAL
            break
        if dobj > 1e10 * (1 + abs(pobj)) and dinf < 1e-6:
            status = INFEASIBLE
            break
        if pobj < -1e10 * (1 + abs(dobj)) and pinf < 1e-6:
            status = UNBOUNDED
            break
        if it == max_iter or stall >= 4:
            break

        xm = cone.mats(x)
        zm = cone.mats(z)
        zinv = []
        wblocks = []
        for X, Z, g, f in zip(xm, zm, cone.groups, cone.flat):
            Zi = np.linalg.inv(Z)
            Zi = 0.5 * (Zi + Zi.conj().transpose(0, 2, 1))
            zinv.append(Zi)
            # W_pq = Re tr(E_p X E_q Z^{-1}) via kron(X, Z^{-T}) acting on row-major vec
            K = (X[:, :, None, :, None] * Zi.transpose(0, 2, 1)[:, None, :, None, :]).reshape(
                g.count, g.n * g.n, g.n * g.n
            )
            W = np.real(f.conj() @ K @ f.T)
            wblocks.append(0.5 * (W + W.transpose(0, 2, 1)))
        xl, zl = x[cone.lp], z[cone.lp]
        wl = xl / zl
        if dense:
            M = (Alp * wl) @ Alp.T
            for a_g, a_t, w in zip(Ag, AgT, wblocks):
                aw = np.matmul(a_t, w)
                M += aw.transpose(1, 0, 2).reshape(m, -1) @ a_g.reshape(m, -1).T

            def wapply(v):
                parts = [
                    np.matmul(w, v[g.start:g.stop].reshape(g.count, g.nsv, 1)).ravel()
                    for g, w in zip(cone.groups, wblocks)
                ]
                parts.append(wl * v[cone.lp])
                return np.concatenate(parts)
        else:
            wdata = np.concatenate([w.ravel() for w in wblocks] + [wl])
            Wsp = sp.csr_matrix((wdata, cone.w_indices, cone.w_indptr), shape=(nc, nc))
            M = (Ac @ Wsp @ AcT).toarray()
            wapply = Wsp.dot
        M = 0.5 * (M + M.T)
        fac = _factor(M, Af)

        def direction(h):
            r1 = rp - Ac @ (h - wapply(rd))
            if Af is not None:
                sol = _back(fac, np.concatenate([r1, rdf]))
                dy, dxf = sol[:m], sol[m:]
            else:
                dy, dxf = _back(fac, r1), np.zeros(0)
            dz = rd - AcT @ dy
            dxc = h - wapply(dz)
            return np.concatenate([dxc, dxf]), dy, dz

        # predictor
        dx, dy, dz = direction(-xc)
        ap = min(1.0, cone.step_length(xc, dx[:nc], xm))
        ad = min(1.0, cone.step_length(z, dz, zm))
        mu_aff = float((xc + ap * dx[:nc]) @ (z + ad * dz)) / max(cone.nu, 1)
        expo = max(1.0, 3 * min(ap, ad) ** 2)
        sigma = min(1.0, (max(mu_aff, 0.0) / mu) ** expo) if mu > 0 else 0.0

        # corrector
        dxm = cone.mats(dx[:nc])
        dzm = cone.mats(dz)
        hm = []
        for X, Zi, dX, dZ in zip(xm, zinv, dxm, dzm):
            hm.append(sigma * mu * Zi - X - dX @ dZ @ Zi)
        hl = sigma * mu / zl - xl - dx[cone.lp] * dz[cone.lp] / zl
        h = cone.vecs(hm, hl)
        dx, dy, dz = direction(h)
        ap = cone.step_length(xc, dx[:nc], xm)
        ad = cone.step_length(z, dz, zm)
        gamma = 0.9 + 0.09 * min(1.0, min(ap, ad))
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        if max(ap, ad) < 1e-8:
            stall += 1
        x = x + ap * dx
        y = y + ad * dy
        z = z + ad * dz

    if status == MAX_ITER and best is not None:
        _, x, y, z = best
    return status, x, y, z, it, history


def solve(prog: ConicProgram, tol: float = 1e-9, max_iter: int = 100, verbose: bool = False) -> ConicSolution:
    """Solve a :class:`ConicProgram` with the interior-point method.

    The reported ``dual`` maps constraint names to multipliers oriented so
    that, for a maximisation ``max c.x s.t. A x = b``, the dual program is
    ``min b.y s.t. A^T y - c in K``; for minimisation it is
    ``max b.y s.t. c - A^T y in K``.
    """
    t0 = time.perf_counter()
    sf = prog.compile()
    status, x, y, z, it, history = _ipm(sf, tol, max_iter, verbose)
    sign = -1.0 if prog.sense == "max" else 1.0
    y_rep = sign * y
    pobj = sign * float(sf.c @ x) + prog.objective_constant
    dobj = float(sf.b @ y_rep) + prog.objective_constant
    rp = sf.b - sf.A @ x
    rd = sf.c - sf.A.T @ y
    rd[: sf.n_cone] -= z
    zfull = np.concatenate([z, np.zeros(sf.A.shape[1] - sf.n_cone)])
    return ConicSolution(
        status=status,
        objective=pobj,
        dual_objective=dobj,
        primal=sf.unpack(x),
        dual=sf.unpack_rows(y_rep),
        dual_slack=sf.unpack(zfull),
        primal_residual=float(np.linalg.norm(rp)),
        dual_residual=float(np.linalg.norm(rd)),
        gap=abs(pobj - dobj),
        iterations=it,
        solve_time=time.perf_counter() - t0,
        info={"history": history, "x": x, "y": y, "z": z},
    )
