"""Linear programs: a dense two-phase tableau simplex plus a HiGHS route for large models.

Problems are stated as

    minimize c @ x  subject to  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  lb <= x <= ub

with finite lower bounds. Both routes return primal values and the duals
needed to certify optimality through complementary slackness.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

DENSE_LIMIT = 400_000  # rows * columns of the standard-form tableau handled by the dense simplex


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n(self) -> int:
        return len(self.c)

    def tableau_size(self) -> int:
        n_ub, n_eq = self.A_ub.shape[0], self.A_eq.shape[0]
        n_box = int(np.sum(np.isfinite(self.ub)))
        rows = n_ub + n_eq + n_box
        return rows * (self.n + n_ub + n_box + rows)


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration-limit
    x: np.ndarray | None
    objective: float
    iterations: int
    seconds: float
    method: str
    y_ub: np.ndarray | None = None  # multipliers (<= 0 in the minimization sign convention)
    y_eq: np.ndarray | None = None
    z_lb: np.ndarray | None = None  # reduced costs at lower bounds (>= 0)
    z_ub: np.ndarray | None = None  # reduced costs at upper bounds (<= 0)
    message: str = ""
    extra: dict = field(default_factory=dict)


class LpBuilder:
    """Accumulates named variable blocks and sparse constraint blocks."""

    def __init__(self):
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self.n = 0
        self.blocks: dict[str, np.ndarray] = {}
        self._rows = {"ub": [], "eq": []}
        self._m = {"ub": 0, "eq": 0}

    def add(self, name: str, shape, lb=0.0, ub=np.inf, cost=0.0) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape).tolist())
        size = int(np.prod(shape))
        idx = np.arange(self.n, self.n + size).reshape(shape)
        for store, val in ((self._lb, lb), (self._ub, ub), (self._c, cost)):
            store.append(np.broadcast_to(np.asarray(val, dtype=float), shape).ravel().copy())
        self.n += size
        self.blocks[name] = idx
        return idx

    def cost(self, cols, vals) -> None:
        """Add to the objective coefficients of existing variables."""
        c = np.concatenate(self._c) if self._c else np.zeros(0)
        np.add.at(c, np.asarray(cols, dtype=int).ravel(), np.broadcast_to(np.asarray(vals, dtype=float).ravel(), np.shape(np.ravel(cols))))
        self._c = [c]

    def rows(self, kind: str, row, col, val, rhs) -> None:
        """Append constraint rows; ``row`` indexes into ``rhs`` (local numbering)."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        row, col = np.broadcast_arrays(np.asarray(row, dtype=int).ravel(), np.asarray(col, dtype=int).ravel())
        val = np.broadcast_to(np.asarray(val, dtype=float).ravel(), row.shape)
        self._rows[kind].append((row + self._m[kind], col, val.copy(), rhs))
        self._m[kind] += len(rhs)

    def le(self, coefs: dict[int, float], rhs: float) -> None:
        self.rows("ub", np.zeros(len(coefs), dtype=int), list(coefs), list(coefs.values()), [rhs])

    def eq(self, coefs: dict[int, float], rhs: float) -> None:
        self.rows("eq", np.zeros(len(coefs), dtype=int), list(coefs), list(coefs.values()), [rhs])

    def _matrix(self, kind: str):
        parts = self._rows[kind]
        m = self._m[kind]
        if not parts:
            return sp.csr_matrix((0, self.n)), np.zeros(0)
        ri = np.concatenate([p[0] for p in parts])
        ci = np.concatenate([p[1] for p in parts])
        v = np.concatenate([p[2] for p in parts])
        keep = v != 0.0
        A = sp.csr_matrix((v[keep], (ri[keep], ci[keep])), shape=(m, self.n))
        A.sum_duplicates()
        return A, np.concatenate([p[3] for p in parts])

    def build(self) -> LinearProgram:
        A_ub, b_ub = self._matrix("ub")
        A_eq, b_eq = self._matrix("eq")
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)  # noqa: E731
        return LinearProgram(cat(self._c), A_ub, b_ub, A_eq, b_eq, cat(self._lb), cat(self._ub))


# --------------------------------------------------------------------------- dense simplex


def _nonnegative_columns(lp: LinearProgram):
    """Rewrite x = offset + M s with s >= 0.

    Variables bounded below shift by lb; variables bounded only above are
    mirrored (x = ub - s); free variables split into two nonnegative parts.
    """
    n = lp.n
    lo_ok, hi_ok = np.isfinite(lp.lb), np.isfinite(lp.ub)
    cols, signs, offset, ub = [], [], np.zeros(n), []
    for j in range(n):
        if lo_ok[j]:
            offset[j] = lp.lb[j]
            cols.append(j), signs.append(1.0), ub.append(lp.ub[j] - lp.lb[j])
        elif hi_ok[j]:
            offset[j] = lp.ub[j]
            cols.append(j), signs.append(-1.0), ub.append(np.inf)
        else:
            cols += [j, j]
            signs += [1.0, -1.0]
            ub += [np.inf, np.inf]
    M = sp.csr_matrix((signs, (cols, np.arange(len(cols)))), shape=(n, len(cols)))
    shifted = LinearProgram(
        M.T @ lp.c,
        sp.csr_matrix(lp.A_ub @ M),
        lp.b_ub - lp.A_ub @ offset,
        sp.csr_matrix(lp.A_eq @ M),
        lp.b_eq - lp.A_eq @ offset,
        np.zeros(len(cols)),
        np.array(ub, dtype=float),
    )
    return shifted, M, offset


def _standard_form(lp: LinearProgram):
    """x = lb + s, rows: A_ub s + slack = b_ub - A_ub lb, s_j + w_j = ub_j - lb_j, A_eq s = b_eq - A_eq lb."""
    n = lp.n
    if not np.all(np.isfinite(lp.lb)):
        raise ValueError("standard form needs finite lower bounds")
    A_ub = lp.A_ub.toarray()
    A_eq = lp.A_eq.toarray()
    box = np.where(np.isfinite(lp.ub))[0]
    m_ub, m_eq, m_box = len(A_ub), len(A_eq), len(box)
    n_slack = m_ub + m_box
    m = m_ub + m_box + m_eq
    A = np.zeros((m, n + n_slack))
    b = np.zeros(m)
    A[:m_ub, :n] = A_ub
    A[:m_ub, n : n + m_ub] = np.eye(m_ub)
    b[:m_ub] = lp.b_ub - A_ub @ lp.lb
    r = np.arange(m_box)
    A[m_ub + r, box] = 1.0
    A[m_ub + r, n + m_ub + r] = 1.0
    b[m_ub : m_ub + m_box] = lp.ub[box] - lp.lb[box]
    A[m_ub + m_box :, :n] = A_eq
    b[m_ub + m_box :] = lp.b_eq - A_eq @ lp.lb
    c = np.concatenate([lp.c, np.zeros(n_slack)])
    return A, b, c, box, (m_ub, m_box, m_eq)


def _pivot(T: np.ndarray, r: int, k: int) -> None:
    T[r] /= T[r, k]
    col = T[:, k].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _bland(T: np.ndarray, basis: list[int], allowed: int, max_iter: int, tol: float) -> tuple[str, int]:
    """Minimize the objective in the last row of T. Columns >= ``allowed`` never enter."""
    it = 0
    m = len(basis)
    while True:
        red = T[-1, :allowed]
        cand = np.where(red < -tol)[0]
        if not len(cand):
            return "optimal", it
        if it >= max_iter:
            return "iteration-limit", it
        k = int(cand[0])
        col = T[:m, k]
        pos = col > tol
        if not pos.any():
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.where(ratios <= best + tol * max(1.0, abs(best)))[0]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, k)
        basis[r] = k
        it += 1


def solve_simplex(lp: LinearProgram, max_iter: int = 50_000, tol: float = 1e-10) -> LpResult:
    """Two-phase tableau simplex with Bland's anti-cycling rule."""
    t0 = time.perf_counter()
    orig = lp
    if not np.all(np.isfinite(lp.lb)):
        lp, M, offset = _nonnegative_columns(lp)
    else:
        M = None
    A, b, c, box, (m_ub, m_box, m_eq) = _standard_form(lp)
    m, nn = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    # phase 1: artificial per row
    T = np.zeros((m + 1, nn + m + 1))
    T[:m, :nn] = A
    T[:m, nn : nn + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :nn] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(nn, nn + m))
    status, it1 = _bland(T, basis, nn + m, max_iter, tol)
    if status == "iteration-limit":
        return LpResult(status, None, np.nan, it1, time.perf_counter() - t0, "simplex")
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -T[-1, -1] > 1e-8 * scale:
        return LpResult("infeasible", None, np.nan, it1, time.perf_counter() - t0, "simplex", message="phase 1 residual")
    # drive remaining artificials out of the basis
    for r in range(m):
        if basis[r] >= nn:
            nz = np.where(np.abs(T[r, :nn]) > 1e-9)[0]
            if len(nz):
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
    keep = [r for r in range(m) if basis[r] < nn]  # rows still holding an artificial are redundant
    T2 = np.zeros((len(keep) + 1, nn + 1))
    T2[:-1, :nn] = T[keep, :nn]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[r] for r in keep]
    T2[-1, :nn] = c
    for r, j in enumerate(basis2):
        T2[-1] -= c[j] * T2[r]
    status, it2 = _bland(T2, basis2, nn, max_iter - it1, tol)
    secs = time.perf_counter() - t0
    if status != "optimal":
        return LpResult(status, None, np.nan, it1 + it2, secs, "simplex")
    xs = np.zeros(nn)
    for r, j in enumerate(basis2):
        xs[j] = T2[r, -1]
    x = lp.lb + xs[: lp.n]
    # duals of the standard-form rows: y = c_B B^-1, recovered by a least-squares solve over all rows
    B = A[:, basis2]
    y = np.linalg.lstsq(B.T, c[basis2], rcond=None)[0]
    y = np.where(neg, -y, y)  # undo the row sign flips
    if M is not None:
        # box rows of the shifted problem belong to columns that kept a finite range, all with sign +1
        x = offset + M @ xs[: lp.n]
        box = M.tocsc().indices[box]
    return _result_from_duals(orig, x, y, m_ub, m_box, box, it1 + it2, secs, "simplex")


def _result_from_duals(lp, x, y, m_ub, m_box, box, iters, secs, method) -> LpResult:
    y_ub = y[:m_ub]
    y_box = y[m_ub : m_ub + m_box]
    y_eq = y[m_ub + m_box :]
    red = lp.c - lp.A_ub.T @ y_ub - lp.A_eq.T @ y_eq
    z_ub = np.zeros(lp.n)
    z_ub[box] = y_box
    upper_only = ~np.isfinite(lp.lb) & np.isfinite(lp.ub)
    z_ub[upper_only] = red[upper_only]
    z_lb = red - z_ub
    return LpResult("optimal", x, float(lp.c @ x), iters, secs, method, y_ub, y_eq, z_lb, z_ub)


# --------------------------------------------------------------------------- HiGHS


def solve_highs(lp: LinearProgram) -> LpResult:
    t0 = time.perf_counter()
    res = linprog(
        lp.c,
        A_ub=lp.A_ub if lp.A_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.A_ub.shape[0] else None,
        A_eq=lp.A_eq if lp.A_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.A_eq.shape[0] else None,
        bounds=np.column_stack([lp.lb, np.where(np.isfinite(lp.ub), lp.ub, np.inf)]),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    secs = time.perf_counter() - t0
    status = {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded"}.get(res.status, "infeasible")
    if status != "optimal":
        return LpResult(status, None, np.nan, int(res.nit), secs, "highs", message=res.message)
    y_ub = res.ineqlin.marginals if lp.A_ub.shape[0] else np.zeros(0)
    y_eq = res.eqlin.marginals if lp.A_eq.shape[0] else np.zeros(0)
    return LpResult(
        "optimal", res.x, float(res.fun), int(res.nit), secs, "highs",
        y_ub, y_eq, res.lower.marginals, res.upper.marginals,
    )


def solve_lp(lp: LinearProgram, method: str = "auto") -> LpResult:
    if method == "auto":
        method = "simplex" if lp.tableau_size() <= DENSE_LIMIT else "highs"
    if method == "simplex":
        return solve_simplex(lp)
    if method == "highs":
        return solve_highs(lp)
    raise ValueError(f"unknown LP method {method!r}")


def complementary_slackness(lp: LinearProgram, res: LpResult) -> float:
    """Largest violation of dual feasibility or complementary slackness, scaled by the cost magnitude."""
    if res.status != "optimal":
        raise ValueError("certificate only defined for optimal results")
    x = res.x
    scale = max(1.0, float(np.abs(lp.c).max(initial=0.0)))
    worst = 0.0
    if lp.A_ub.shape[0]:
        slack = lp.b_ub - lp.A_ub @ x
        worst = max(worst, float(np.max(np.abs(res.y_ub * slack), initial=0.0)))
        worst = max(worst, float(np.max(res.y_ub, initial=0.0)))  # multipliers must be <= 0
    lo = np.isfinite(lp.lb)
    worst = max(worst, float(np.max(np.abs(res.z_lb[lo] * (x[lo] - lp.lb[lo])), initial=0.0)))
    worst = max(worst, float(np.max(-res.z_lb[lo], initial=0.0)))
    worst = max(worst, float(np.max(np.abs(res.z_lb[~lo]), initial=0.0)))  # free below: no multiplier
    fin = np.isfinite(lp.ub)
    if fin.any():
        gap_hi = lp.ub[fin] - x[fin]
        worst = max(worst, float(np.max(np.abs(res.z_ub[fin] * gap_hi), initial=0.0)))
        worst = max(worst, float(np.max(res.z_ub[fin], initial=0.0)))
    worst = max(worst, float(np.max(np.abs(res.z_ub[~fin]), initial=0.0)))
    # stationarity: c = A_ub' y_ub + A_eq' y_eq + z_lb + z_ub
    stat = lp.c - lp.A_ub.T @ res.y_ub - lp.A_eq.T @ res.y_eq - res.z_lb - res.z_ub
    worst = max(worst, float(np.max(np.abs(stat), initial=0.0)))
    return worst / scale
