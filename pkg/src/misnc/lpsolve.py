"""Dense two-phase simplex returning basic optimal solutions.

Small LPs only. Every variable is bounded below by zero. Pivoting follows
Bland's rule, so ties go to the lowest column index and runs are
reproducible. An optional secondary objective breaks ties among primary
optima lexicographically. A finished solve can warm-start a later solve of
the same constraint system under a different objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_SENSES = ("<=", "=", ">=")


class LpError(RuntimeError):
    """Pivoting stalled past the iteration cap."""


@dataclass
class LinearProgram:
    """``min c.x`` subject to rows ``a.x (<=|=|>=) b`` and ``x >= 0``."""

    variables: list[str] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    rows: list[tuple[dict[int, float], str, float]] = field(default_factory=list)
    secondary: dict[int, float] | None = None

    def __post_init__(self):
        self._pos = {name: k for k, name in enumerate(self.variables)}

    def add_variable(self, name: str) -> int:
        if name in self._pos:
            raise ValueError(f"duplicate variable {name!r}")
        self._pos[name] = len(self.variables)
        self.variables.append(name)
        return self._pos[name]

    def var(self, name: str) -> int:
        return self._pos[name]

    def _resolve(self, coeffs: Mapping) -> dict[int, float]:
        out: dict[int, float] = {}
        for key, val in coeffs.items():
            k = self._pos[key] if isinstance(key, str) else int(key)
            if not 0 <= k < len(self.variables):
                raise ValueError(f"coefficient references undeclared variable {key!r}")
            val = float(val)
            if not np.isfinite(val):
                raise ValueError(f"non-finite coefficient for {key!r}")
            out[k] = out.get(k, 0.0) + val
        return out

    def add_constraint(self, coeffs: Mapping, sense: str, rhs: float) -> None:
        if sense not in _SENSES:
            raise ValueError(f"sense must be one of {_SENSES}, got {sense!r}")
        self.rows.append((self._resolve(coeffs), sense, float(rhs)))

    def set_objective(self, coeffs: Mapping) -> None:
        self.objective = self._resolve(coeffs)

    def set_secondary(self, coeffs: Mapping | None) -> None:
        self.secondary = None if coeffs is None else self._resolve(coeffs)

    def cost_vector(self, coeffs: Mapping[int, float] | None = None) -> np.ndarray:
        c = np.zeros(len(self.variables))
        for k, v in (self.objective if coeffs is None else coeffs).items():
            c[k] = v
        return c

    def dense(self) -> tuple[np.ndarray, np.ndarray, list[str]]:
        A = np.zeros((len(self.rows), len(self.variables)))
        b = np.zeros(len(self.rows))
        senses = []
        for i, (coeffs, sense, rhs) in enumerate(self.rows):
            for k, v in coeffs.items():
                A[i, k] = v
            b[i] = rhs
            senses.append(sense)
        return A, b, senses


@dataclass
class LpSolution:
    status: str
    values: dict[str, float]
    objective: float
    basic: bool
    x: np.ndarray | None = None
    iterations: int = 0
    state: "_Tableau | None" = field(default=None, repr=False)


@dataclass
class _Tableau:
    """Canonical form ``T = B^-1 [A | b]`` with basis column indices."""

    T: np.ndarray
    basis: np.ndarray
    n_struct: int
    key: object


def _standard_form(lp: LinearProgram):
    A, b, senses = lp.dense()
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    senses = [
        {"<=": ">=", ">=": "<=", "=": "="}[s] if f else s for s, f in zip(senses, flip)
    ]
    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    T = np.zeros((m, n + n_slack + n_art + 1))
    T[:, :n] = A
    T[:, -1] = b
    basis = np.empty(m, dtype=int)
    art_cols = []
    js, ja = n, n + n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            T[i, js] = 1.0
            basis[i] = js
            js += 1
        elif s == ">=":
            T[i, js] = -1.0
            js += 1
            T[i, ja] = 1.0
            basis[i] = ja
            art_cols.append(ja)
            ja += 1
        else:
            T[i, ja] = 1.0
            basis[i] = ja
            art_cols.append(ja)
            ja += 1
    return T, basis, n, n + n_slack, art_cols


def _pivot(T: np.ndarray, rows: list[np.ndarray], r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    for d in rows:
        d -= d[j] * T[r]


def _run(T, basis, d, cap, allowed=None, extra=()):
    """Bland-rule primal simplex on reduced-cost row ``d`` (last entry = -obj).

    Returns (status, iterations). ``allowed`` masks admissible entering
    columns; ``extra`` rows are updated alongside ``d``.
    """
    ncols = T.shape[1] - 1
    it = 0
    while True:
        cand = d[:ncols] < -TOL
        if allowed is not None:
            cand &= allowed
        enter = np.flatnonzero(cand)
        if enter.size == 0:
            return OPTIMAL, it
        j = int(enter[0])
        col = T[:, j]
        pos = col > TOL
        if not pos.any():
            return UNBOUNDED, it
        ratios = np.full(col.shape, np.inf)
        ratios[pos] = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL * max(1.0, abs(best)))
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, [d, *extra], r, j)
        basis[r] = j
        it += 1
        if it > cap:
            raise LpError(f"simplex exceeded {cap} pivots")


def _reduced(T, basis, c):
    d = np.zeros(T.shape[1])
    d[: c.size] = c
    cb = np.zeros(basis.size)
    inb = basis < c.size
    cb[inb] = c[basis[inb]]
    d -= cb @ T
    return d


def _finish(lp, tab: _Tableau, c, cap, it0) -> LpSolution:
    T, basis = tab.T, tab.basis
    d = _reduced(T, basis, c)
    status, it = _run(T, basis, d, cap)
    it += it0
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, {}, -np.inf, False, iterations=it)
    if lp.secondary is not None:
        c2 = lp.cost_vector(lp.secondary)
        d2 = _reduced(T, basis, c2)
        ncols = T.shape[1] - 1
        for _ in range(cap):
            allowed = np.abs(d[:ncols]) <= TOL
            status2, it2 = _run(T, basis, d2, cap, allowed=allowed, extra=(d,))
            it += it2
            # secondary pivots may leave primary reduced costs slightly negative
            if status2 == OPTIMAL and not (d[:ncols] < -TOL).any():
                break
            if status2 == UNBOUNDED:
                break
            _, it3 = _run(T, basis, d, cap, extra=(d2,))
            it += it3
    x_all = np.zeros(T.shape[1] - 1)
    x_all[basis] = T[:, -1]
    x = x_all[: tab.n_struct].copy()
    x[np.abs(x) < 1e-12] = 0.0
    x = np.maximum(x, 0.0)
    obj = float(lp.cost_vector() @ x)
    values = {name: float(x[k]) for k, name in enumerate(lp.variables)}
    return LpSolution(OPTIMAL, values, obj, True, x=x, iterations=it, state=tab)


def _constraint_key(lp: LinearProgram):
    return id(lp.rows), len(lp.rows), len(lp.variables)


def solve_lp(lp: LinearProgram, warm_start: LpSolution | None = None) -> LpSolution:
    """Solve ``lp``; on success the returned point is a basic solution.

    ``warm_start`` may be a previous optimal solution of an LP sharing the
    same ``rows`` object (same constraints, new objective). Phase one is
    then skipped.
    """
    n = len(lp.variables)
    cap = 50 * (n + len(lp.rows))
    c = lp.cost_vector()
    if (warm_start is not None and warm_start.state is not None
            and warm_start.state.key == _constraint_key(lp)):
        prev = warm_start.state
        tab = _Tableau(prev.T.copy(), prev.basis.copy(), prev.n_struct, prev.key)
        return _finish(lp, tab, c, cap, 0)

    T, basis, n_struct, first_art, art_cols = _standard_form(lp)
    it = 0
    if art_cols:
        c1 = np.zeros(T.shape[1] - 1)
        c1[art_cols] = 1.0
        d1 = _reduced(T, basis, c1)
        status, it = _run(T, basis, d1, cap)
        if -d1[-1] > TOL * max(1.0, np.abs(T[:, -1]).max()):
            return LpSolution(INFEASIBLE, {}, np.nan, False, iterations=it)
        # drive artificials out of the basis; drop rows that stay redundant
        keep = np.ones(T.shape[0], dtype=bool)
        for r in range(T.shape[0]):
            if basis[r] >= first_art:
                nz = np.flatnonzero(np.abs(T[r, :first_art]) > TOL)
                if nz.size:
                    _pivot(T, [], r, int(nz[0]))
                    basis[r] = int(nz[0])
                else:
                    keep[r] = False
        T = np.hstack([T[keep, :first_art], T[keep, -1:]])
        basis = basis[keep]
    tab = _Tableau(T, basis, n_struct, _constraint_key(lp))
    return _finish(lp, tab, c, cap, it)


def with_objective(lp: LinearProgram, coeffs: Mapping, secondary: Mapping | None = None
                   ) -> LinearProgram:
    """Copy of ``lp`` sharing its constraint rows, with a new objective."""
    out = LinearProgram(list(lp.variables))
    out.rows = lp.rows
    out.set_objective(coeffs)
    out.set_secondary(secondary if secondary is not None else lp.secondary)
    return out


def check_feasible(lp: LinearProgram, x: Sequence[float], tol: float = TOL) -> bool:
    """True if ``x`` satisfies every row and sign bound of ``lp`` within ``tol``."""
    x = np.asarray(x, dtype=float)
    if (x < -tol).any():
        return False
    for coeffs, sense, rhs in lp.rows:
        lhs = sum(v * x[k] for k, v in coeffs.items())
        scale = tol * max(1.0, abs(rhs))
        if sense == "<=" and lhs > rhs + scale:
            return False
        if sense == ">=" and lhs < rhs - scale:
            return False
        if sense == "=" and abs(lhs - rhs) > scale:
            return False
    return True
