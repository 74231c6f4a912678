"""Dense LP (two-phase simplex) and strictly convex QP (primal active set) solvers.

Everything in this module is a pure function of its inputs: no global state,
no randomness, so repeated calls with identical inputs return bit-identical
results.  Problems are small and dense by design; sparse storage, cones and
integer variables are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Default tolerances: feasibility/stationarity, and the looser tolerance used
# to decide whether a constraint counts as active.
FEAS_TOL = 1e-8
ACTIVE_TOL = 1e-7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class NumericalError(RuntimeError):
    """Raised when a solver exceeds its iteration budget or loses precision."""


def _as_matrix(a, rows, cols, name):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        a = a.reshape(rows if rows is not None else 0, cols)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {a.shape}")
    if rows is not None and a.shape[0] != rows:
        raise ValueError(f"{name} has {a.shape[0]} rows, expected {rows}")
    if a.shape[1] != cols:
        raise ValueError(f"{name} has {a.shape[1]} columns, expected {cols}")
    return a


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class QPProblem:
    """min ½·xᵀPx + dᵀx  s.t.  A·x ≤ b, with P symmetric positive definite.

    A non-symmetric P is replaced by (P + Pᵀ)/2 at construction; only the
    symmetric part is observable in the objective value.  Positive
    definiteness is verified by a Cholesky factorization, which is kept for
    reuse by the solver.
    """

    P: np.ndarray
    d: np.ndarray
    A: np.ndarray
    b: np.ndarray
    chol: np.ndarray = field(repr=False, compare=False, default=None)

    def __init__(self, P, d, A=None, b=None):
        P = np.asarray(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"P must be square, got shape {P.shape}")
        P = 0.5 * (P + P.T)
        n = P.shape[0]
        d = np.asarray(d, dtype=float).reshape(-1)
        if d.shape[0] != n:
            raise ValueError(f"d has length {d.shape[0]}, expected {n}")
        if A is None:
            A = np.zeros((0, n))
            b = np.zeros(0)
        A = _as_matrix(A, None, n, "A")
        b = np.asarray(b, dtype=float).reshape(-1)
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"b has length {b.shape[0]}, expected {A.shape[0]}")
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            raise ValueError("P is not positive definite") from None
        P = P.copy()
        _freeze(P, d, A, b)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "chol", L)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.d @ x)


@dataclass(frozen=True)
class LPProblem:
    """min dᵀx  s.t.  A·x ≤ b, optional variable bounds lb ≤ x ≤ ub
    and optional equality rows A_eq·x = b_eq.

    Bounds default to free variables; use 0.0 entries in ``lb`` for
    nonnegativity.  ±inf entries mean unbounded.
    """

    d: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def __init__(self, d, A=None, b=None, lb=None, ub=None, A_eq=None, b_eq=None):
        d = np.asarray(d, dtype=float).reshape(-1)
        n = d.shape[0]
        if A is None:
            A = np.zeros((0, n))
            b = np.zeros(0)
        A = _as_matrix(A, None, n, "A")
        b = np.asarray(b, dtype=float).reshape(-1)
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"b has length {b.shape[0]}, expected {A.shape[0]}")
        lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).reshape(-1).copy()
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).reshape(-1).copy()
        if lb.shape[0] != n or ub.shape[0] != n:
            raise ValueError("bounds must match the number of variables")
        if np.any(lb > ub):
            raise ValueError("lb > ub for some variable")
        if A_eq is None:
            A_eq = np.zeros((0, n))
            b_eq = np.zeros(0)
        A_eq = _as_matrix(A_eq, None, n, "A_eq")
        b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
        if b_eq.shape[0] != A_eq.shape[0]:
            raise ValueError("b_eq length mismatch")
        _freeze(d, A, b, lb, ub, A_eq, b_eq)
        for name, val in [("d", d), ("A", A), ("b", b), ("lb", lb), ("ub", ub),
                          ("A_eq", A_eq), ("b_eq", b_eq)]:
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class SolveResult:
    status: str
    x: Optional[np.ndarray]
    lam: Optional[np.ndarray]
    active_set: tuple
    objective: Optional[float]
    niter: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class KKTReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float
    passed: bool


def check_kkt(p: QPProblem, x, lam, tol: float = FEAS_TOL) -> KKTReport:
    """Residual norms of the KKT system of ``p`` at a candidate (x, λ).

    Reports the max-norms of stationarity P·x + d + Aᵀλ, primal violation
    max(A·x − b, 0), dual violation max(−λ, 0) and complementarity
    λ_i·(A_i·x − b_i).  Pure report: never raises on a bad point.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if x.shape[0] != p.n or lam.shape[0] != p.m:
        raise ValueError("dimension mismatch in check_kkt")
    stat = p.P @ x + p.d
    if p.m:
        stat = stat + p.A.T @ lam
        slack = p.A @ x - p.b
        primal = float(max(np.max(slack), 0.0))
        dual = float(max(np.max(-lam), 0.0))
        comp = float(np.max(np.abs(lam * slack)))
    else:
        primal = dual = comp = 0.0
    stat_norm = float(np.max(np.abs(stat))) if stat.size else 0.0
    passed = max(stat_norm, primal, dual, comp) <= tol
    return KKTReport(stat_norm, primal, dual, comp, passed)


# ---------------------------------------------------------------------------
# Simplex
# ---------------------------------------------------------------------------

# After this many consecutive degenerate pivots the pricing rule switches to
# Bland's rule, which guarantees termination; Dantzig pricing is used
# otherwise because it needs far fewer pivots in practice.
_DEGENERATE_STREAK = 30


def _pivot_loop(T, basis, num_real, tol, maxiter):
    """Run simplex pivots on tableau T in place until optimal or unbounded.

    T has shape (m+1, ncols+1): constraint rows with rhs in the last column,
    and the reduced-cost row last.  ``basis`` maps rows to column indices.
    Columns with index >= num_real (artificials) are never re-entered.
    Returns "optimal" or "unbounded".
    """
    m = T.shape[0] - 1
    cost = T[-1]
    bland = False
    streak = 0
    for _ in range(maxiter):
        rc = cost[:num_real]
        if bland:
            negs = np.flatnonzero(rc < -tol)
            if negs.size == 0:
                return OPTIMAL
            j = int(negs[0])
        else:
            j = int(np.argmin(rc))
            if rc[j] >= -tol:
                return OPTIMAL
        col = T[:m, j]
        pos = col > tol
        if not np.any(pos):
            return UNBOUNDED
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        rmin = np.min(ratios)
        ties = np.flatnonzero(ratios <= rmin + 1e-12)
        # among tied rows, leave the one with the smallest basis index
        i = int(ties[np.argmin(basis[ties])])
        if rmin <= 1e-12:
            streak += 1
            if streak >= _DEGENERATE_STREAK:
                bland = True
        else:
            streak = 0
            bland = False
        piv = T[i, j]
        T[i] /= piv
        colv = T[:, j].copy()
        colv[i] = 0.0
        T -= np.outer(colv, T[i])
        T[:, j] = 0.0
        T[i, j] = 1.0
        basis[i] = j
    raise NumericalError("simplex exceeded its iteration budget")


def _standard_form_simplex(c, A, b, tol=1e-9, maxiter=None):
    """min cᵀz s.t. A·z = b, z ≥ 0 by the two-phase tableau simplex.

    Returns (status, z, objective, y) where y are the row duals
    (y = c_B·B⁻¹), computed from the final basis.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1).copy()
    c = np.asarray(c, dtype=float).reshape(-1)
    m, n = A.shape
    if maxiter is None:
        maxiter = 2000 + 12 * (m + n)
    A = A.copy()
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # Phase 1: artificial variable per row.
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)
    status = _pivot_loop(T, basis, n, tol, maxiter)
    if status != OPTIMAL or -T[-1, -1] > 1e-7:
        return INFEASIBLE, None, None, None

    # Drive any lingering artificials out of the basis; drop redundant rows.
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n:
            row = T[i, :n]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            if cand.size == 0:
                keep[i] = False
                continue
            j = int(cand[0])
            piv = T[i, j]
            T[i] /= piv
            colv = T[:, j].copy()
            colv[i] = 0.0
            T -= np.outer(colv, T[i])
            T[:, j] = 0.0
            T[i, j] = 1.0
            basis[i] = j
    if not np.all(keep):
        rows = np.flatnonzero(keep)
        T = np.vstack([T[rows], T[-1:]])
        basis = basis[rows]
        m = rows.size

    # Phase 2: real costs, artificial columns removed.
    T2 = np.zeros((m + 1, n + 1))
    T2[:m, :n] = T[:m, :n]
    T2[:m, -1] = T[:m, -1]
    T2[-1, :n] = c
    for i in range(m):
        j = basis[i]
        if np.abs(T2[-1, j]) > 0:
            T2[-1] -= T2[-1, j] * T2[i]
    status = _pivot_loop(T2, basis, n, tol, maxiter)
    if status == UNBOUNDED:
        return UNBOUNDED, None, None, None
    z = np.zeros(n)
    z[basis] = T2[:m, -1]
    obj = float(c @ z)
    y = _basis_duals(A, b, c, basis, neg)
    return OPTIMAL, z, obj, y


def _basis_duals(A, b, c, basis, neg):
    B = A[:, basis]
    try:
        y = np.linalg.solve(B.T, c[basis])
    except np.linalg.LinAlgError:
        y, *_ = np.linalg.lstsq(B.T, c[basis], rcond=None)
    y = y.copy()
    y[neg] *= -1.0  # undo the row sign normalization
    return y


def solve_lp(p: LPProblem, tol: float = FEAS_TOL, maxiter: int = None) -> SolveResult:
    """Solve an LP with the two-phase simplex method.

    The optimum, when it exists, is a vertex of the feasible region.  Dantzig
    pricing with a Bland's-rule fallback prevents cycling.  ``lam`` holds the
    multipliers of the inequality rows in the convention
    d + Aᵀλ + A_eqᵀν − μ_lb + μ_ub = 0 with λ ≥ 0.
    """
    n = p.n
    m = p.m
    m_eq = p.A_eq.shape[0]

    # Split x into shifted / sign-split parts so every variable is >= 0.
    finite_lb = np.isfinite(p.lb)
    free = ~finite_lb
    cols = []          # (variable index, sign) per standard-form column
    for j in range(n):
        cols.append((j, 1.0))
    for j in np.flatnonzero(free):
        cols.append((j, -1.0))
    ncols = len(cols)

    def expand(row):
        out = np.zeros(ncols)
        out[:n] = row
        for k in range(n, ncols):
            j, s = cols[k]
            out[k] = s * row[j]
        return out

    shift = np.where(finite_lb, p.lb, 0.0)
    ub_rows = np.flatnonzero(np.isfinite(p.ub))
    n_ub = ub_rows.size
    rows_A = np.zeros((m + n_ub + m_eq, ncols))
    rhs = np.zeros(m + n_ub + m_eq)
    for i in range(m):
        rows_A[i] = expand(p.A[i])
        rhs[i] = p.b[i] - p.A[i] @ shift
    for r, j in enumerate(ub_rows):
        e = np.zeros(n)
        e[j] = 1.0
        rows_A[m + r] = expand(e)
        rhs[m + r] = p.ub[j] - shift[j]
    for i in range(m_eq):
        rows_A[m + n_ub + i] = expand(p.A_eq[i])
        rhs[m + n_ub + i] = p.b_eq[i] - p.A_eq[i] @ shift

    n_ineq = m + n_ub
    # slack per inequality row
    S = np.zeros((rows_A.shape[0], n_ineq))
    S[:n_ineq] = np.eye(n_ineq)
    A_std = np.hstack([rows_A, S])
    c_std = np.concatenate([expand(p.d), np.zeros(n_ineq)])

    status, z, _, y = _standard_form_simplex(c_std, A_std, rhs, maxiter=maxiter)
    if status != OPTIMAL:
        return SolveResult(status, None, None, (), None)

    x = shift.copy()
    for k, (j, s) in enumerate(cols):
        x[j] += s * z[k]
    lam = -y[:m] if m else np.zeros(0)
    lam = np.where(np.abs(lam) < 1e-12, 0.0, lam)
    obj = float(p.d @ x)
    resid = p.A @ x - p.b if m else np.zeros(0)
    active = tuple(int(i) for i in np.flatnonzero(np.abs(resid) <= ACTIVE_TOL))
    # duality-gap sanity check against the recovered row prices
    gap = obj - (y @ rhs if y is not None else obj)
    if abs(gap) > 1e-6 * (1.0 + abs(obj)):
        raise NumericalError(f"LP duality gap {gap:.3e} exceeds tolerance")
    return SolveResult(OPTIMAL, x, lam, active, obj)


# ---------------------------------------------------------------------------
# Active-set QP
# ---------------------------------------------------------------------------


def _cho_solve(L, rhs):
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def _phase1_point(A, b):
    """A feasible point for A·x ≤ b via min t s.t. A·x − t ≤ b, t ≥ 0."""
    m, n = A.shape
    d = np.zeros(n + 1)
    d[-1] = 1.0
    A1 = np.hstack([A, -np.ones((m, 1))])
    lb = np.full(n + 1, -np.inf)
    lb[-1] = 0.0
    res = solve_lp(LPProblem(d, A1, b, lb=lb))
    if not res.optimal or res.objective > 1e-7:
        return None
    return res.x[:n]


def solve_qp(p: QPProblem, tol: float = FEAS_TOL, maxiter: int = None) -> SolveResult:
    """Primal active-set method for a strictly convex QP.

    Starts from x = 0 when feasible, otherwise from a phase-1 LP vertex.
    Equality-constrained subproblems are solved through the Schur complement
    of the cached Cholesky factor of P.  When several constraints block a
    step equally the lowest index enters the working set; the most negative
    multiplier (lowest index on ties) leaves it.
    """
    n, m = p.n, p.m
    L = p.chol
    if maxiter is None:
        maxiter = 100 + 50 * (n + m)

    if m == 0:
        x = -_cho_solve(L, p.d)
        return SolveResult(OPTIMAL, x, np.zeros(0), (), p.objective(x), 1)

    if np.all(p.b >= 0):
        x = np.zeros(n)
    else:
        x = _phase1_point(p.A, p.b)
        if x is None:
            return SolveResult(INFEASIBLE, None, None, (), None)

    A, b = p.A, p.b
    pinv_rows = {}

    def pinv_row(i):
        v = pinv_rows.get(i)
        if v is None:
            v = _cho_solve(L, A[i])
            pinv_rows[i] = v
        return v

    # initial working set: greedily independent active rows, by index
    resid = A @ x - b
    W: list[int] = []
    M = np.zeros((0, 0))
    basis_rows = np.zeros((0, n))

    def try_add(i):
        nonlocal M, basis_rows
        row = A[i]
        if len(W) >= n:
            return False
        if len(W):
            proj = row - basis_rows.T @ (basis_rows @ row)
        else:
            proj = row
        nrm = np.linalg.norm(proj)
        if nrm <= 1e-10 * max(1.0, np.linalg.norm(row)):
            return False
        u = pinv_row(i)
        if len(W):
            col = A[W] @ u
            Mn = np.zeros((len(W) + 1, len(W) + 1))
            Mn[:-1, :-1] = M
            Mn[:-1, -1] = col
            Mn[-1, :-1] = col
            Mn[-1, -1] = row @ u
            M = Mn
        else:
            M = np.array([[row @ u]])
        basis_rows = np.vstack([basis_rows, proj / nrm])
        W.append(i)
        return True

    def remove(pos):
        nonlocal M, basis_rows
        del W[pos]
        M = np.delete(np.delete(M, pos, axis=0), pos, axis=1)
        # re-orthonormalize the remaining rows
        basis_rows = _orthonormal_rows(A[W]) if W else np.zeros((0, n))

    for i in np.flatnonzero(resid >= -ACTIVE_TOL):
        try_add(int(i))

    niter = 0
    for _ in range(maxiter):
        niter += 1
        g = p.P @ x + p.d
        u = _cho_solve(L, g)
        if W:
            rhs = -(A[W] @ u)
            try:
                nu = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                nu, *_ = np.linalg.lstsq(M, rhs, rcond=None)
            step = -u - sum(nu[k] * pinv_row(i) for k, i in enumerate(W))
        else:
            nu = np.zeros(0)
            step = -u
        if np.max(np.abs(step)) <= max(tol, 1e-12):
            if len(nu) == 0 or np.min(nu) >= -max(tol, 1e-9):
                lam = np.zeros(m)
                for k, i in enumerate(W):
                    lam[i] = max(nu[k], 0.0) if nu.size else 0.0
                resid = A @ x - b
                active = tuple(int(i) for i in np.flatnonzero(np.abs(resid) <= ACTIVE_TOL))
                return SolveResult(OPTIMAL, x, lam, active, p.objective(x), niter)
            remove(int(np.argmin(nu)))
            continue
        # ratio test against constraints outside the working set
        Ap = A @ step
        mask = np.ones(m, dtype=bool)
        mask[W] = False
        mask &= Ap > 1e-12
        alpha = 1.0
        block = -1
        if np.any(mask):
            idx = np.flatnonzero(mask)
            ratios = (b[idx] - A[idx] @ x) / Ap[idx]
            ratios = np.maximum(ratios, 0.0)
            k = int(np.argmin(ratios))
            if ratios[k] < alpha - 1e-12:
                cand = idx[ratios <= ratios[k] + 1e-12]
                block = int(cand.min())
                alpha = float(ratios[k])
        x = x + alpha * step
        if block >= 0:
            if not try_add(block):
                raise NumericalError("dependent blocking constraint")
    raise NumericalError("active-set QP exceeded its iteration budget")


def _orthonormal_rows(R):
    out = []
    for row in R:
        v = row.copy()
        for q in out:
            v -= (q @ v) * q
        nrm = np.linalg.norm(v)
        if nrm > 1e-12:
            out.append(v / nrm)
    return np.array(out) if out else np.zeros((0, R.shape[1]))
