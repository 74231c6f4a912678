"""Inverse-optimization fit: make observed decisions KKT-stationary.

Given observations (û_k, x̂_k) and an objective template linear in unknown
coefficients c, the fit minimizes a norm of the stacked KKT residuals

    stationarity (k, j):   ∂f0/∂x_j + Σ_j' c_j'·∂φ_j'/∂x_j + Σ_i λ_{k,i}·∂g_i/∂x_j
    complementarity (k, i): −λ_{k,i}·g_i(û_k, x̂_k)

over c and per-observation multipliers λ_k ≥ 0.  Every residual is affine in
the unknowns, so the L1 and L∞ fits are linear programs and the squared-L2
fit is a quadratic program.

Two exact routes are implemented for the default L1 norm.  The direct route
builds the full LP in (c, λ, slacks).  The reduced route eliminates λ_k
observation by observation: for fixed c the inner minimum over λ_k ≥ 0 equals
the support function  max { yᵀs_k(c) : ‖y‖∞ ≤ 1, G_k·y ≥ −w_k }  of a small
polytope in decision space (dimension n ≤ 3), so the fit collapses to a
master LP over c and one epigraph variable per observation, solved through
its dual in standard simplex form.  The two routes agree by LP duality and
are cross-checked in the test-suite; the reduced one is orders of magnitude
faster for large K.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .solvers import (
    LPProblem,
    QPProblem,
    NumericalError,
    OPTIMAL,
    solve_lp,
    solve_qp,
    _standard_form_simplex,
)
from .problems import (
    Dataset,
    LinearConstraints,
    template_forward_solve,
)

L1 = "l1"
LINF = "linf"
L2SQ = "l2sq"

# Tiny preference for small-magnitude coefficients, used only to select a
# deterministic point of the optimal face when the residual minimum is
# degenerate (noiseless data routinely leaves some coefficient directions
# unpenalized when observations sit on constraint boundaries).
DEFAULT_SHRINK = 1e-8


@dataclass(frozen=True)
class ResidualSystem:
    """Assembled KKT residual data, affine in the unknowns (c, λ)."""

    template: object
    S: list            # per k: (n_k, J) basis-gradient rows (masked coords dropped)
    h: list            # per k: (n_k,) known-gradient rows
    G: list            # per k: (m, n_k) constraint jacobian columns at unmasked coords
    w: list            # per k: (m,) complementarity weights |g_i(û_k, x̂_k)|
    masks: list        # per k: (n,) bool, False where the stationarity row was dropped
    dataset: Dataset
    J: int
    m: int
    homogeneous: bool
    lower: np.ndarray
    upper: np.ndarray
    dropped_rows: int

    @property
    def K(self) -> int:
        return len(self.S)

    @property
    def n_stationarity_rows(self) -> int:
        return int(sum(s.shape[0] for s in self.S))

    @property
    def n_complementarity_rows(self) -> int:
        return self.K * self.m


@dataclass(frozen=True)
class FitResult:
    c_hat: np.ndarray
    lambda_hat: np.ndarray
    residual_norm: float
    norm_kind: str
    normalized: bool
    objective_value: float = field(default=np.nan, compare=False)

    def to_json(self) -> str:
        return json.dumps({
            "c_hat": [float(v) for v in self.c_hat],
            "residual_norm": float(self.residual_norm),
            "norm_kind": self.norm_kind,
            "normalized": bool(self.normalized),
        })


def assemble_kkt_system(template, constraints, data: Dataset) -> ResidualSystem:
    """Build the stationarity and complementarity residual data.

    Stationarity rows at coordinates where a basis gradient is singular
    (√x at x = 0) are dropped: the exact condition there is a subgradient
    inclusion, and dual feasibility λ ≥ 0 is all that remains of it.
    Observation constraint values are clipped at zero from above, so the
    complementarity weight of an active constraint is exactly zero.
    """
    if isinstance(constraints, LinearConstraints):
        G_full = constraints.jacobian_x()
    else:
        raise TypeError("constraints must be LinearConstraints (or nonneg_constraints)")
    S, h, G, w, masks = [], [], [], [], []
    dropped = 0
    for k in range(data.K):
        u, x = data.U[k], data.X[k]
        mask = np.asarray(template.stationarity_mask(u, x), dtype=bool)
        dropped += int(np.sum(~mask))
        S.append(template.basis_grads(u, x)[mask])
        h.append(template.grad_f0(u, x)[mask])
        G.append(G_full[:, mask])
        g_val = constraints.values(u, x)
        w.append(np.maximum(-g_val, 0.0))
        masks.append(mask)
    return ResidualSystem(
        template=template, S=S, h=h, G=G, w=w, masks=masks, dataset=data,
        J=template.J, m=G_full.shape[0], homogeneous=template.homogeneous,
        lower=np.asarray(template.fit_lower, float),
        upper=np.asarray(template.fit_upper, float),
        dropped_rows=dropped,
    )


def residual_norm_of(sys: ResidualSystem, c, lam, norm_kind: str = L1) -> float:
    """Recompute Σ_k φ(r_stat_k, r_comp_k) at a candidate (c, λ)."""
    c = np.asarray(c, float).reshape(sys.J)
    lam = np.asarray(lam, float).reshape(sys.K, sys.m)
    total = 0.0
    for k in range(sys.K):
        r_stat = sys.S[k] @ c + sys.h[k] + sys.G[k].T @ lam[k]
        r_comp = sys.w[k] * lam[k]
        if norm_kind == L1:
            total += float(np.sum(np.abs(r_stat)) + np.sum(np.abs(r_comp)))
        elif norm_kind == LINF:
            vals = np.concatenate([np.abs(r_stat), np.abs(r_comp)])
            total += float(np.max(vals)) if vals.size else 0.0
        elif norm_kind == L2SQ:
            total += float(np.sum(r_stat ** 2) + np.sum(r_comp ** 2))
        else:
            raise ValueError(f"unknown norm {norm_kind!r}")
    return total


def _shrink_signs(sys: ResidualSystem) -> np.ndarray:
    sign = np.zeros(sys.J)
    sign[sys.lower >= 0] = 1.0
    sign[sys.upper <= 0] = -1.0
    return sign


def fit_objective(sys: ResidualSystem, norm_kind: str = L1, method: str = "auto",
                  shrink: float = DEFAULT_SHRINK) -> FitResult:
    """Minimize the chosen residual norm subject to λ ≥ 0.

    L1 and L∞ reduce to linear programs, squared L2 to a QP.  ``method``
    picks the L1 route: "reduced" (support-function elimination of λ, fast),
    "dense" (direct LP), or "auto".  Homogeneous templates get the
    normalization row Σ_j c_j = J appended, which costs no generality since
    predictions are invariant to positive scaling of the coefficients.
    """
    if norm_kind == L1:
        if method == "auto":
            max_dim = max((s.shape[1] for s in sys.G), default=0)
            method = "reduced" if max_dim <= 3 else "dense"
        if method == "reduced":
            return _fit_l1_reduced(sys, shrink)
        return _fit_dense_lp(sys, L1, shrink)
    if norm_kind == LINF:
        return _fit_dense_lp(sys, LINF, shrink)
    if norm_kind == L2SQ:
        return _fit_l2sq(sys, shrink)
    raise ValueError(f"unknown norm {norm_kind!r}")


# ---------------------------------------------------------------------------
# Direct LP route
# ---------------------------------------------------------------------------


def _fit_dense_lp(sys: ResidualSystem, norm_kind: str, shrink: float) -> FitResult:
    """One LP over (c, λ_1..λ_K, per-row |·| slacks / per-k maxima)."""
    K, J, m = sys.K, sys.J, sys.m
    n_rows = [s.shape[0] for s in sys.S]
    n_slack = sum(n_rows) if norm_kind == L1 else K
    nv = J + K * m + n_slack
    d = np.zeros(nv)
    lb = np.full(nv, -np.inf)
    ub = np.full(nv, np.inf)
    lb[:J] = sys.lower
    ub[:J] = sys.upper
    lb[J:] = 0.0
    sgn = _shrink_signs(sys)
    d[:J] = shrink * sgn
    rows = []
    rhs = []
    off = J + K * m
    for k in range(K):
        lam_cols = slice(J + k * m, J + (k + 1) * m)
        nk = n_rows[k]
        if norm_kind == L1:
            t_cols = [off + i for i in range(nk)]
            off += nk
        for j in range(nk):
            t_col = t_cols[j] if norm_kind == L1 else J + K * m + k
            for sign in (1.0, -1.0):
                row = np.zeros(nv)
                row[:J] = sign * sys.S[k][j]
                row[lam_cols] = sign * sys.G[k][:, j]
                row[t_col] = -1.0
                rows.append(row)
                rhs.append(-sign * sys.h[k][j])
        if norm_kind == L1:
            d[[off - nk + i for i in range(nk)]] = 1.0
            lam_obj = sys.w[k]
            d[lam_cols] = lam_obj
        else:
            # complementarity rows enter the per-observation max
            for i in range(m):
                row = np.zeros(nv)
                row[J + k * m + i] = sys.w[k][i]
                row[J + K * m + k] = -1.0
                rows.append(row)
                rhs.append(0.0)
    if norm_kind == LINF:
        d[J + K * m:] = 1.0
    A_eq = b_eq = None
    if sys.homogeneous:
        r = np.zeros(nv)
        r[:J] = 1.0
        A_eq, b_eq = r.reshape(1, -1), np.array([float(J)])
    res = solve_lp(LPProblem(d, np.array(rows), np.array(rhs), lb=lb, ub=ub,
                             A_eq=A_eq, b_eq=b_eq))
    if not res.optimal:
        raise NumericalError(f"residual LP is {res.status}; this cannot happen "
                             "for a well-formed system")
    c_hat = res.x[:J]
    lam = res.x[J:J + K * m].reshape(K, m)
    lam = np.maximum(lam, 0.0)
    value = residual_norm_of(sys, c_hat, lam, norm_kind)
    return FitResult(c_hat, lam, value, norm_kind, sys.homogeneous,
                     objective_value=float(res.objective))


# ---------------------------------------------------------------------------
# Reduced L1 route
# ---------------------------------------------------------------------------


def _fit_l1_reduced(sys: ResidualSystem, shrink: float) -> FitResult:
    """Support-function elimination of λ, then one master LP in (c, τ).

    For fixed c, the k-th observation's contribution is
        F_k(c) = min_{λ≥0} ‖s_k(c) + G_kᵀλ‖₁ + w_kᵀλ
               = max { yᵀ s_k(c) : ‖y‖∞ ≤ 1, G_k y ≥ −w_k }
    by LP duality, a maximum over the vertices V_k of a polytope of dimension
    n_k ≤ 3.  The master  min Σ_k τ_k  s.t.  τ_k ≥ vᵀ(S_k c + h_k)  is solved
    through its own dual, whose standard form has only J + K equality rows;
    the master optimum (c*, τ*) is read off the row prices.  Multipliers are
    then recovered per observation from K tiny LPs.
    """
    K, J = sys.K, sys.J
    verts = [_dual_polytope_vertices(sys.G[k], sys.w[k]) for k in range(K)]
    active = [k for k in range(K) if len(verts[k])]
    sgn = _shrink_signs(sys)
    sigma = shrink * sgn

    # dual standard form: variables are one μ per (k, vertex), one multiplier
    # per finite coefficient bound, and the split normalization price.
    cols = []
    costs = []
    n_rows = J + len(active)
    for pos, k in enumerate(active):
        Sv = sys.S[k]
        hv = sys.h[k]
        for v in verts[k]:
            col = np.zeros(n_rows)
            col[:J] = Sv.T @ v
            col[J + pos] = 1.0
            cols.append(col)
            costs.append(-float(v @ hv))
    for j in range(J):
        if np.isfinite(sys.lower[j]):
            col = np.zeros(n_rows)
            col[j] = -1.0
            cols.append(col)
            costs.append(-float(sys.lower[j]))
        if np.isfinite(sys.upper[j]):
            col = np.zeros(n_rows)
            col[j] = 1.0
            cols.append(col)
            costs.append(float(sys.upper[j]))
    if sys.homogeneous:
        for s in (1.0, -1.0):
            col = np.zeros(n_rows)
            col[:J] = s
            cols.append(col)
            costs.append(s * float(J))
    A = np.column_stack(cols) if cols else np.zeros((n_rows, 0))
    b = np.concatenate([-sigma, np.ones(len(active))])
    status, _, dual_obj, y = _standard_form_simplex(np.asarray(costs), A, b)
    if status != OPTIMAL:
        raise NumericalError(f"reduced residual LP is {status}")
    c_hat = np.clip(y[:J], sys.lower, sys.upper)
    lam = _recover_multipliers(sys, c_hat)
    value = residual_norm_of(sys, c_hat, lam, L1)
    return FitResult(c_hat, lam, value, L1, sys.homogeneous,
                     objective_value=float(-dual_obj))


def _dual_polytope_vertices(G, w):
    """Vertices of {y : ‖y‖∞ ≤ 1, G·y ≥ −w} for dimension ≤ 3.

    The polytope always contains y = 0 because w ≥ 0.  Dimension 2 uses
    polygon clipping; 1 and 3 use direct enumeration.
    """
    m, n = G.shape
    if n == 0:
        return []
    if n == 1:
        lo, hi = -1.0, 1.0
        for i in range(m):
            g = G[i, 0]
            if g > 1e-13:
                lo = max(lo, -w[i] / g)
            elif g < -1e-13:
                hi = min(hi, -w[i] / g)
            elif w[i] < -1e-12:
                return []
        if lo > hi:
            return []
        return [np.array([lo]), np.array([hi])]
    if n == 2:
        poly = [np.array(p, float) for p in
                [(-1, -1), (1, -1), (1, 1), (-1, 1)]]
        for i in range(m):
            poly = _clip_polygon(poly, -G[i], w[i])
            if not poly:
                return []
        return _dedupe_points(poly)
    # n == 3: basic enumeration over constraint triples
    halfA = np.vstack([np.eye(n), -np.eye(n), -G])
    halfb = np.concatenate([np.ones(2 * n), w])
    pts = []
    rows = range(halfA.shape[0])
    for tri in itertools.combinations(rows, 3):
        sub = halfA[list(tri)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, halfb[list(tri)])
        if np.all(halfA @ v <= halfb + 1e-9):
            pts.append(v)
    return _dedupe_points(pts)


def _clip_polygon(poly, a, b, tol=1e-12):
    """Clip a convex polygon to the halfplane a·y ≤ b (Sutherland–Hodgman)."""
    if not poly:
        return []
    out = []
    vals = [a @ p - b for p in poly]
    np_ = len(poly)
    for i in range(np_):
        pcur, vcur = poly[i], vals[i]
        pnext, vnext = poly[(i + 1) % np_], vals[(i + 1) % np_]
        if vcur <= tol:
            out.append(pcur)
        if (vcur < -tol and vnext > tol) or (vcur > tol and vnext < -tol):
            t = vcur / (vcur - vnext)
            out.append(pcur + t * (pnext - pcur))
    return out


def _dedupe_points(pts, tol=1e-10):
    out = []
    for p in pts:
        if not any(np.max(np.abs(p - q)) <= tol for q in out):
            out.append(np.asarray(p, float))
    return out


def _recover_multipliers(sys: ResidualSystem, c) -> np.ndarray:
    """Optimal λ_k ≥ 0 per observation at the fitted coefficients (small LPs)."""
    K, m = sys.K, sys.m
    lam = np.zeros((K, m))
    for k in range(K):
        s = sys.S[k] @ c + sys.h[k]
        nk = s.shape[0]
        if nk == 0:
            continue
        # variables (λ, t): min w·λ + 1·t  s.t. ±(s + Gᵀλ) ≤ t
        nv = m + nk
        d = np.concatenate([sys.w[k], np.ones(nk)])
        rows = np.zeros((2 * nk, nv))
        rhs = np.zeros(2 * nk)
        GT = sys.G[k].T  # (nk, m)
        rows[:nk, :m] = GT
        rows[:nk, m:] = -np.eye(nk)
        rhs[:nk] = -s
        rows[nk:, :m] = -GT
        rows[nk:, m:] = -np.eye(nk)
        rhs[nk:] = s
        lb = np.zeros(nv)
        res = solve_lp(LPProblem(d, rows, rhs, lb=lb))
        if not res.optimal:
            raise NumericalError("multiplier recovery LP failed")
        lam[k] = np.maximum(res.x[:m], 0.0)
    return lam


# ---------------------------------------------------------------------------
# Squared-L2 route
# ---------------------------------------------------------------------------


def _fit_l2sq(sys: ResidualSystem, shrink: float, ridge: float = 1e-10) -> FitResult:
    """Least-squares residual fit as a bound-constrained QP over (c, λ).

    A tiny ridge keeps the Gram matrix positive definite when degenerate
    observations leave flat directions.  Intended for moderate K; the LP
    norms are the scalable routes.
    """
    K, J, m = sys.K, sys.J, sys.m
    nv = J + K * m
    rows = []
    const = []
    for k in range(K):
        nk = sys.S[k].shape[0]
        blk = np.zeros((nk, nv))
        blk[:, :J] = sys.S[k]
        blk[:, J + k * m:J + (k + 1) * m] = sys.G[k].T
        rows.append(blk)
        const.append(sys.h[k])
        comp = np.zeros((m, nv))
        comp[:, J + k * m:J + (k + 1) * m] = np.diag(sys.w[k])
        rows.append(comp)
        const.append(np.zeros(m))
    M = np.vstack(rows)
    h = np.concatenate(const)
    P = 2.0 * (M.T @ M + ridge * np.eye(nv))
    d = 2.0 * (M.T @ h)
    d[:J] += shrink * _shrink_signs(sys)
    cons_rows = [np.hstack([-np.eye(J), np.zeros((J, K * m))]),
                 np.hstack([np.zeros((K * m, J)), -np.eye(K * m)])]
    cons_rhs = [-sys.lower, np.zeros(K * m)]
    finite_up = np.isfinite(sys.upper)
    if np.any(finite_up):
        up = np.zeros((int(finite_up.sum()), nv))
        for r, j in enumerate(np.flatnonzero(finite_up)):
            up[r, j] = 1.0
        cons_rows.append(up)
        cons_rhs.append(sys.upper[finite_up])
    if sys.homogeneous:
        row = np.zeros(nv)
        row[:J] = 1.0
        cons_rows.append(np.vstack([row, -row]))
        cons_rhs.append(np.array([float(J), -float(J)]))
    A = np.vstack(cons_rows)
    bb = np.concatenate([np.where(np.isfinite(v), v, 1e30) for v in cons_rhs])
    res = solve_qp(QPProblem(P, d, A, bb))
    if not res.optimal:
        raise NumericalError(f"residual QP is {res.status}")
    c_hat = np.clip(res.x[:J], sys.lower, sys.upper)
    lam = np.maximum(res.x[J:].reshape(K, m), 0.0)
    value = residual_norm_of(sys, c_hat, lam, L2SQ)
    return FitResult(c_hat, lam, value, L2SQ, sys.homogeneous,
                     objective_value=float(res.objective))


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict(template, c_hat, constraints, u_new, tol: float = 1e-8) -> np.ndarray:
    """Decision prediction at a new parameter: solve the fitted forward model."""
    return template_forward_solve(template, c_hat, constraints, u_new, tol=tol)


def predict_many(template, c_hat, constraints, U, tol: float = 1e-8) -> np.ndarray:
    from .problems import SeparableTemplate, _separable_argmin
    U = np.atleast_2d(np.asarray(U, float))
    if isinstance(template, SeparableTemplate):
        c = template.check_coefficients(c_hat)
        return _separable_argmin(template, c, U)
    return np.vstack([predict(template, c_hat, constraints, u, tol=tol) for u in U])
