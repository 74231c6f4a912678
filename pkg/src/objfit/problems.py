"""Parametric problem families, objective templates and data generation.

Two forward families are modeled: a quadratic program whose linear objective
term and constraint right-hand sides depend affinely on an external parameter
vector u, and a consumer-demand problem min pᵀx − U(x) over x ≥ 0 whose
parameter is the price vector.  Objective templates describe families
f(u, x, c) = f0(u, x) + Σ_j c_j·φ_j(u, x) that are linear in the unknown
coefficient vector c, which is what the inverse fit imputes.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .solvers import (
    FEAS_TOL,
    OPTIMAL,
    LPProblem,
    QPProblem,
    SolveResult,
    solve_lp,
    solve_qp,
)

# Coordinates this close to zero are treated as sitting on the boundary when
# a basis gradient is singular there (e.g. d√x/dx at x = 0).
BOUNDARY_EPS = 1e-9


# ---------------------------------------------------------------------------
# Constraint descriptions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearConstraints:
    """g(u, x) = A·x − b − F·u ≤ 0."""

    A: np.ndarray
    b: np.ndarray
    F: np.ndarray

    def __init__(self, A, b, F=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if F is None:
            F = np.zeros((A.shape[0], 0))
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if b.shape[0] != A.shape[0] or F.shape[0] != A.shape[0]:
            raise ValueError("constraint row counts disagree")
        for name, val in [("A", A), ("b", b), ("F", F)]:
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def rhs(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        return self.b + (self.F @ u if self.F.shape[1] else 0.0)

    def values(self, u, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.rhs(u)

    def jacobian_x(self) -> np.ndarray:
        return self.A


def nonneg_constraints(n: int) -> LinearConstraints:
    """The orthant x ≥ 0 written as −x ≤ 0."""
    return LinearConstraints(-np.eye(n), np.zeros(n), np.zeros((n, 0)))


# ---------------------------------------------------------------------------
# Objective templates
# ---------------------------------------------------------------------------


class QuadraticTemplate:
    """f(u, x, c) = ½·xᵀ(P0 + Σ c_j·B_j)x + (d0(u) + Σ c_j·e_j)ᵀx.

    ``basis_P[j]`` is the symmetric matrix B_j, ``basis_d[j]`` the constant
    vector e_j.  ``d0`` may be None (homogeneous template), a constant vector,
    or a callable u → n-vector for objectives whose linear term depends on u
    in an arbitrary way.  Convexity in x requires P(c) = P0 + Σ c_j·B_j ≻ 0,
    which holds on the declared coefficient bounds for the built-in variants.
    """

    def __init__(self, n, basis_P, basis_d=None, P0=None, d0=None,
                 lower=None, upper=None, fit_lower=None, fit_upper=None,
                 name="quadratic"):
        self.n = int(n)
        self.basis_P = [0.5 * (np.asarray(B, float) + np.asarray(B, float).T)
                        for B in basis_P]
        self.J = len(self.basis_P)
        if basis_d is None:
            basis_d = [np.zeros(n)] * self.J
        self.basis_d = [np.asarray(e, float).reshape(n) for e in basis_d]
        self.P0 = np.zeros((n, n)) if P0 is None else np.asarray(P0, float)
        self.d0 = d0
        self.lower = np.full(self.J, -np.inf) if lower is None else np.asarray(lower, float)
        self.upper = np.full(self.J, np.inf) if upper is None else np.asarray(upper, float)
        # fit-time bounds may be tighter than the admissible range, e.g. a
        # strictly positive floor on curvatures keeps fitted models solvable
        self.fit_lower = self.lower if fit_lower is None else np.asarray(fit_lower, float)
        self.fit_upper = self.upper if fit_upper is None else np.asarray(fit_upper, float)
        self.name = name

    @property
    def homogeneous(self) -> bool:
        return self.d0 is None and not np.any(self.P0)

    def _d0(self, u) -> np.ndarray:
        if self.d0 is None:
            return np.zeros(self.n)
        if callable(self.d0):
            return np.asarray(self.d0(np.asarray(u, float).reshape(-1)), float).reshape(self.n)
        return np.asarray(self.d0, float).reshape(self.n)

    def quadratic_part(self, c) -> np.ndarray:
        c = np.asarray(c, float).reshape(self.J)
        P = self.P0.copy()
        for cj, B in zip(c, self.basis_P):
            P += cj * B
        return P

    def linear_part(self, u, c) -> np.ndarray:
        c = np.asarray(c, float).reshape(self.J)
        d = self._d0(u).copy()
        for cj, e in zip(c, self.basis_d):
            d += cj * e
        return d

    def value(self, u, x, c) -> float:
        x = np.asarray(x, float).reshape(self.n)
        return float(0.5 * x @ self.quadratic_part(c) @ x + self.linear_part(u, c) @ x)

    def grad_f0(self, u, x) -> np.ndarray:
        return self.P0 @ np.asarray(x, float) + self._d0(u)

    def basis_grads(self, u, x) -> np.ndarray:
        x = np.asarray(x, float).reshape(self.n)
        out = np.empty((self.n, self.J))
        for j in range(self.J):
            out[:, j] = self.basis_P[j] @ x + self.basis_d[j]
        return out

    def stationarity_mask(self, u, x) -> np.ndarray:
        return np.ones(self.n, dtype=bool)

    def check_coefficients(self, c):
        c = np.asarray(c, float).reshape(self.J)
        if np.any(c < self.lower - 1e-9) or np.any(c > self.upper + 1e-9):
            raise ValueError(f"coefficients {c} violate template bounds")
        return c


_SCALAR_KINDS = {
    # value, derivative, (convex iff sign of coefficient in this set)
    "neg_sqrt": (lambda t: -np.sqrt(np.maximum(t, 0.0)),
                 lambda t: -0.5 / np.sqrt(np.maximum(t, BOUNDARY_EPS)),
                 +1, True),
    "neg_square": (lambda t: -t * t, lambda t: -2.0 * t, -1, False),
    "neg_two_linear": (lambda t: -2.0 * t, lambda t: -2.0 * np.ones_like(t), 0, False),
}


class SeparableTemplate:
    """f(u, x, c) = uᵀx + Σ_j c_j·Σ_{i∈coords_j} φ_kind(x_i) over x ≥ 0.

    The parameter u acts as the per-coordinate price.  All basis kinds are
    per-coordinate scalars, so the forward problem splits into independent
    one-dimensional convex problems solved by derivative bisection.
    """

    def __init__(self, n, basis, lower=None, upper=None, name="separable"):
        self.n = int(n)
        self.basis = []
        for kind, coords in basis:
            if kind not in _SCALAR_KINDS:
                raise ValueError(f"unknown scalar basis kind {kind!r}")
            self.basis.append((kind, tuple(int(i) for i in coords)))
        self.J = len(self.basis)
        self.lower = np.full(self.J, -np.inf) if lower is None else np.asarray(lower, float)
        self.upper = np.full(self.J, np.inf) if upper is None else np.asarray(upper, float)
        self.fit_lower = self.lower
        self.fit_upper = self.upper
        self.name = name

    homogeneous = False  # f0 = uᵀx never vanishes

    def check_coefficients(self, c):
        c = np.asarray(c, float).reshape(self.J)
        for cj, (kind, _) in zip(c, self.basis):
            sign = _SCALAR_KINDS[kind][2]
            if sign > 0 and cj < -1e-12:
                raise ValueError(f"coefficient for {kind} must be >= 0, got {cj}")
            if sign < 0 and cj > 1e-12:
                raise ValueError(f"coefficient for {kind} must be <= 0, got {cj}")
        if np.any(c < self.lower - 1e-9) or np.any(c > self.upper + 1e-9):
            raise ValueError(f"coefficients {c} violate template bounds")
        return c

    def value(self, u, x, c) -> float:
        u = np.asarray(u, float).reshape(self.n)
        x = np.asarray(x, float).reshape(self.n)
        c = np.asarray(c, float).reshape(self.J)
        total = float(u @ x)
        for cj, (kind, coords) in zip(c, self.basis):
            fn = _SCALAR_KINDS[kind][0]
            total += cj * float(np.sum(fn(x[list(coords)])))
        return total

    def grad_f0(self, u, x) -> np.ndarray:
        return np.asarray(u, float).reshape(self.n).copy()

    def basis_grads(self, u, x) -> np.ndarray:
        x = np.asarray(x, float).reshape(self.n)
        out = np.zeros((self.n, self.J))
        for j, (kind, coords) in enumerate(self.basis):
            dfn = _SCALAR_KINDS[kind][1]
            idx = list(coords)
            out[idx, j] = dfn(x[idx])
        return out

    def stationarity_mask(self, u, x) -> np.ndarray:
        """Coordinates where every basis gradient is well defined."""
        x = np.asarray(x, float).reshape(self.n)
        mask = np.ones(self.n, dtype=bool)
        for kind, coords in self.basis:
            if _SCALAR_KINDS[kind][3]:  # singular at the boundary
                for i in coords:
                    if x[i] < BOUNDARY_EPS:
                        mask[i] = False
        return mask

    def coordinate_derivative(self, u, t, c):
        """d/dt of the per-coordinate objective, vectorized over coordinates.

        ``t`` is an array of candidate values per coordinate.
        """
        u = np.asarray(u, float)
        t = np.asarray(t, float)
        c = np.asarray(c, float).reshape(self.J)
        g = np.broadcast_to(u, t.shape).astype(float, copy=True)
        for cj, (kind, coords) in zip(c, self.basis):
            if cj == 0.0:
                continue
            dfn = _SCALAR_KINDS[kind][1]
            idx = list(coords)
            g[..., idx] += cj * dfn(t[..., idx])
        return g


def sqrt_utility_template(n: int) -> SeparableTemplate:
    """Concave-root utility: f = pᵀx − Σ_j c_j·√x_j with c ≥ 0."""
    return SeparableTemplate(
        n,
        [("neg_sqrt", (j,)) for j in range(n)],
        lower=np.zeros(n),
        name="sqrt-utility",
    )


def quadratic_utility_template(n: int) -> SeparableTemplate:
    """Mis-specified utility: f = pᵀx − Σ_i (q·x_i² + 2·r·x_i), c = (q, r).

    Convexity needs q ≤ 0; monotonicity of the utility on the observed range
    needs r ≥ 0.
    """
    all_coords = tuple(range(n))
    return SeparableTemplate(
        n,
        [("neg_square", all_coords), ("neg_two_linear", all_coords)],
        lower=np.array([-np.inf, 0.0]),
        upper=np.array([0.0, np.inf]),
        name="quadratic-utility",
    )


# Strictly positive floor keeping fitted quadratic coefficients invertible:
# a zero curvature coefficient would make the fitted forward problem lose
# positive definiteness and the prediction undefined.
QUAD_COEF_FLOOR = 1e-6


def diag_quadratic_template(n: int, d0=None, name="diag-quadratic") -> QuadraticTemplate:
    """Imputes the per-coordinate curvatures: f = Σ_j c_j·x_j² + d0(u)ᵀx."""
    basis_P = [2.0 * np.outer(_unit(n, j), _unit(n, j)) for j in range(n)]
    return QuadraticTemplate(
        n, basis_P, d0=d0, lower=np.zeros(n),
        fit_lower=np.full(n, QUAD_COEF_FLOOR), name=name,
    )


def _unit(n, j):
    e = np.zeros(n)
    e[j] = 1.0
    return e


# ---------------------------------------------------------------------------
# Problem instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class POPInstance:
    """Parametric QP family: min (Q·x + H·u + c)ᵀx  s.t.  A·x ≤ b + F·u,
    with u restricted to an axis-aligned box.

    The certificate that every u in the box admits a feasible x only needs
    the box corners: the phase-1 infeasibility measure min_x max_i
    (A_i·x − b_i − F_i·u) is convex in u, so nonpositivity at the corners
    extends to their convex hull.
    """

    Q: np.ndarray
    H: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    F: np.ndarray
    u_box: np.ndarray

    def __init__(self, Q, H, c, A, b, F, u_box, certify=True):
        Q = np.atleast_2d(np.asarray(Q, float))
        n = Q.shape[0]
        H = np.atleast_2d(np.asarray(H, float))
        q = H.shape[1]
        c = np.asarray(c, float).reshape(n)
        A = np.atleast_2d(np.asarray(A, float))
        m = A.shape[0]
        b = np.asarray(b, float).reshape(m)
        F = np.atleast_2d(np.asarray(F, float))
        u_box = np.asarray(u_box, float).reshape(q, 2)
        if Q.shape != (n, n) or H.shape != (n, q) or A.shape != (m, n) or F.shape != (m, q):
            raise ValueError("inconsistent dimensions in POPInstance")
        if np.any(u_box[:, 0] >= u_box[:, 1]):
            raise ValueError("u_box must have lower < upper per coordinate")
        try:
            np.linalg.cholesky(0.5 * (Q + Q.T) + 1e-14 * np.eye(n))
        except np.linalg.LinAlgError:
            raise ValueError("Q must be positive definite") from None
        for name, val in [("Q", Q), ("H", H), ("c", c), ("A", A), ("b", b),
                          ("F", F), ("u_box", u_box)]:
            val = np.ascontiguousarray(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if certify and not self.feasible_everywhere():
            raise ValueError("constraint set is empty somewhere in u_box")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.H.shape[1]

    def constraints(self) -> LinearConstraints:
        return LinearConstraints(self.A, self.b, self.F)

    def box_corners(self) -> np.ndarray:
        q = self.q
        corners = np.empty((2 ** q, q))
        for k in range(2 ** q):
            for i in range(q):
                corners[k, i] = self.u_box[i, (k >> i) & 1]
        return corners

    def feasible_everywhere(self, tol=1e-7) -> bool:
        checks = np.vstack([self.box_corners(), self.u_box.mean(axis=1)])
        for u in checks:
            if _phase1_value(self.A, self.b + self.F @ u) > tol:
                return False
        return True

    def contains_u(self, u, tol=1e-9) -> bool:
        u = np.asarray(u, float).reshape(self.q)
        return bool(np.all(u >= self.u_box[:, 0] - tol) and np.all(u <= self.u_box[:, 1] + tol))


def _phase1_value(A, rhs) -> float:
    m, n = A.shape
    d = np.zeros(n + 1)
    d[-1] = 1.0
    A1 = np.hstack([A, -np.ones((m, 1))])
    lb = np.full(n + 1, -np.inf)
    lb[-1] = 0.0
    res = solve_lp(LPProblem(d, A1, rhs, lb=lb))
    return res.objective if res.optimal else np.inf


@dataclass(frozen=True)
class UtilityInstance:
    """A single consumer-demand problem: min pᵀx − U(x) s.t. x ≥ 0."""

    p: np.ndarray
    n: int

    def __init__(self, p):
        p = np.asarray(p, float).reshape(-1)
        if np.any(p <= 0):
            raise ValueError("prices must be strictly positive")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "n", p.shape[0])

    def constraints(self) -> LinearConstraints:
        return nonneg_constraints(self.n)


def instantiate_qp(pop: POPInstance, u) -> QPProblem:
    """The plain QP obtained by freezing the parameter: P = Q + Qᵀ,
    d = H·u + c, constraints A·x ≤ b + F·u."""
    u = np.asarray(u, float).reshape(pop.q)
    if not pop.contains_u(u):
        raise ValueError(f"u={u} lies outside the parameter box")
    P = pop.Q + pop.Q.T
    d = pop.H @ u + pop.c
    return QPProblem(P, d, pop.A, pop.b + pop.F @ u)


def forward_solve(pop: POPInstance, u, tol: float = FEAS_TOL) -> SolveResult:
    return solve_qp(instantiate_qp(pop, u), tol=tol)


# ---------------------------------------------------------------------------
# Template forward solves
# ---------------------------------------------------------------------------


def template_forward_solve(template, c, constraints, u, tol: float = FEAS_TOL) -> np.ndarray:
    """Optimal decision of min_x f(u, x, c) subject to the constraints.

    Quadratic templates instantiate a QP; separable templates solve
    per-coordinate scalar problems on x ≥ 0.  Coefficients outside the
    template's admissible range are rejected.
    """
    c = template.check_coefficients(c)
    if isinstance(template, SeparableTemplate):
        if constraints is not None and not _is_nonneg_orthant(constraints):
            raise ValueError("separable templates require the x >= 0 orthant")
        return _separable_argmin(template, c, np.asarray(u, float).reshape(1, -1))[0]
    P = template.quadratic_part(c)
    d = template.linear_part(u, c)
    try:
        qp = QPProblem(P, d, constraints.A, constraints.rhs(u)) if constraints is not None \
            else QPProblem(P, d)
    except ValueError as exc:
        raise ValueError(f"coefficients {c} give a non-convex objective: {exc}") from None
    res = solve_qp(qp, tol=tol)
    if not res.optimal:
        raise ValueError(f"forward problem is {res.status} at u={u}")
    return res.x


def _is_nonneg_orthant(constraints) -> bool:
    return (
        isinstance(constraints, LinearConstraints)
        and constraints.A.shape[0] == constraints.A.shape[1]
        and np.array_equal(constraints.A, -np.eye(constraints.A.shape[0]))
        and not np.any(constraints.b)
        and not np.any(constraints.F)
    )


def _separable_argmin(template: SeparableTemplate, c, U) -> np.ndarray:
    """Vectorized per-coordinate minimizer over x ≥ 0 for rows of U.

    The derivative of each coordinate objective is nondecreasing, so the
    minimizer is 0 when the one-sided derivative at 0⁺ is nonnegative and the
    bisection root of the derivative otherwise.
    """
    U = np.asarray(U, float)
    K, n = U.shape
    lo = np.zeros((K, n))
    probe = np.full((K, n), BOUNDARY_EPS)
    g0 = template.coordinate_derivative(U, probe, c)
    interior = g0 < 0
    if not np.any(interior):
        return lo
    hi = np.ones((K, n))
    for _ in range(200):
        g_hi = template.coordinate_derivative(U, hi, c)
        grow = interior & (g_hi <= 0)
        if not np.any(grow):
            break
        hi[grow] *= 4.0
        if np.max(hi) > 1e12:
            raise ValueError("separable forward problem appears unbounded below")
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        g_mid = template.coordinate_derivative(U, mid, c)
        take_hi = g_mid < 0
        lo = np.where(interior & take_hi, mid, lo)
        hi = np.where(interior & ~take_hi, mid, hi)
    out = 0.5 * (lo + hi)
    out[~interior] = 0.0
    return out


# ---------------------------------------------------------------------------
# Random generation and datasets
# ---------------------------------------------------------------------------


def generate_random_pop(n: int, m: int, q: int, seed, u_box=None,
                        max_tries: int = 200) -> POPInstance:
    """Random parametric QP with a certified-nonempty constraint set.

    Curvatures are diagonal on the scale of the bundled reference instance;
    all other data is uniform on [−1, 1], with right-hand sides built from an
    interior point plus slack so the u = 0 problem is comfortably feasible.
    Deterministic in ``seed``.
    """
    if n < 1 or m < 1 or q < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    box = np.array([[-10.0, 10.0]] * q) if u_box is None else np.asarray(u_box, float)
    for _ in range(max_tries):
        Q = np.diag(rng.uniform(0.5, 20.0, n))
        H = rng.uniform(-1, 1, (n, q))
        c = rng.uniform(-1, 1, n)
        A = rng.uniform(-1, 1, (m, n))
        F = rng.uniform(-1, 1, (m, q))
        x0 = rng.uniform(-1, 1, n)
        b = A @ x0 + rng.uniform(0.5, 5.0, m)
        try:
            return POPInstance(Q, H, c, A, b, F, box)
        except ValueError:
            continue
    raise ValueError(f"could not certify a feasible instance in {max_tries} tries")


@dataclass(frozen=True)
class Dataset:
    """Observed parameter/decision pairs plus generation provenance."""

    U: np.ndarray
    X: np.ndarray
    provenance: dict = field(default_factory=dict, compare=False)
    duals: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, float))
        X = np.atleast_2d(np.asarray(self.X, float))
        if U.shape[0] != X.shape[0]:
            raise ValueError("U and X must have the same number of rows")
        U.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "X", X)

    @property
    def K(self) -> int:
        return self.U.shape[0]

    @property
    def q(self) -> int:
        return self.U.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def subset(self, k: int) -> "Dataset":
        prov = dict(self.provenance)
        prov["K"] = int(k)
        duals = None if self.duals is None else self.duals[:k]
        return Dataset(self.U[:k], self.X[:k], prov, duals)


@dataclass(frozen=True)
class TemplateTruth:
    """A ground-truth objective given as (template, coefficients, constraints)."""

    template: object
    c_true: np.ndarray
    constraints: Optional[LinearConstraints]

    def __init__(self, template, c_true, constraints):
        object.__setattr__(self, "template", template)
        object.__setattr__(self, "c_true", np.asarray(c_true, float).reshape(-1))
        object.__setattr__(self, "constraints", constraints)


def sample_box(box, K, rng) -> np.ndarray:
    box = np.asarray(box, float).reshape(-1, 2)
    return rng.uniform(box[:, 0], box[:, 1], size=(K, box.shape[0]))


def generate_dataset(model, box, K: int, seed, noise_sigma: float = 0.0,
                     generator_id: str = None) -> Dataset:
    """Draw u uniformly over ``box`` and record exact forward optima.

    ``model`` is a POPInstance or a TemplateTruth.  Observations are
    noiseless by default; ``noise_sigma`` adds zero-mean Gaussian noise to
    the decisions when explicitly requested.  Deterministic in ``seed``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    U = sample_box(box, K, rng)
    if isinstance(model, POPInstance):
        X = np.empty((K, model.n))
        lams = np.empty((K, model.m))
        for k in range(K):
            res = forward_solve(model, U[k])
            if not res.optimal:
                raise ValueError(f"forward problem {res.status} at u={U[k]}")
            X[k] = res.x
            lams[k] = res.lam
        gen = generator_id or "pop"
    elif isinstance(model, TemplateTruth):
        t, c = model.template, model.c_true
        if isinstance(t, SeparableTemplate):
            t.check_coefficients(c)
            X = _separable_argmin(t, c, U)
            grads = np.empty_like(X)
            for k in range(K):
                grads[k] = t.grad_f0(U[k], X[k]) + t.basis_grads(U[k], X[k]) @ c
            lams = np.where(X <= BOUNDARY_EPS, np.maximum(grads, 0.0), 0.0)
        else:
            X = np.empty((K, t.n))
            m = model.constraints.m if model.constraints is not None else 0
            lams = np.empty((K, m))
            for k in range(K):
                P = t.quadratic_part(c)
                d = t.linear_part(U[k], c)
                cons = model.constraints
                qp = QPProblem(P, d, cons.A, cons.rhs(U[k])) if cons is not None \
                    else QPProblem(P, d)
                res = solve_qp(qp)
                if not res.optimal:
                    raise ValueError(f"forward problem {res.status} at u={U[k]}")
                X[k] = res.x
                lams[k] = res.lam
        gen = generator_id or f"template:{t.name}"
    else:
        raise TypeError(f"unsupported model type {type(model)!r}")
    if noise_sigma:
        X = X + rng.normal(0.0, noise_sigma, X.shape)
    prov = {"generator": gen, "seed": _seed_repr(seed), "K": int(K),
            "noise_sigma": float(noise_sigma)}
    return Dataset(U, X, prov, lams)


def _seed_repr(seed):
    try:
        return int(seed)
    except (TypeError, ValueError):
        return str(seed)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_pop(pop: POPInstance, path: str) -> None:
    payload = {
        "n": pop.n, "m": pop.m, "q": pop.q,
        "Q": _round17(pop.Q), "H": _round17(pop.H), "c": _round17(pop.c),
        "A": _round17(pop.A), "b": _round17(pop.b), "F": _round17(pop.F),
        "u_box": _round17(pop.u_box),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_pop(path: str) -> POPInstance:
    with open(path) as fh:
        data = json.load(fh)
    n, m, q = data["n"], data["m"], data["q"]
    return POPInstance(
        np.reshape(data["Q"], (n, n)), np.reshape(data["H"], (n, q)),
        np.reshape(data["c"], (n,)), np.reshape(data["A"], (m, n)),
        np.reshape(data["b"], (m,)), np.reshape(data["F"], (m, q)),
        np.reshape(data["u_box"], (q, 2)),
    )


def _round17(a):
    return [float(f"{v:.17g}") for v in np.asarray(a, float).ravel()]


def save_dataset(ds: Dataset, path: str) -> None:
    """CSV with header u_1..u_q,x_1..x_n plus a JSON provenance sidecar."""
    header = [f"u_{i + 1}" for i in range(ds.q)] + [f"x_{j + 1}" for j in range(ds.n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(ds.K):
            w.writerow([f"{v:.17g}" for v in np.concatenate([ds.U[k], ds.X[k]])])
    with open(_sidecar_path(path), "w") as fh:
        json.dump(ds.provenance, fh, indent=1)
        fh.write("\n")


def load_dataset(path: str) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    q = sum(1 for h in header if h.startswith("u_"))
    vals = np.array([[float(v) for v in row] for row in rows[1:]])
    prov = {}
    side = _sidecar_path(path)
    if os.path.exists(side):
        with open(side) as fh:
            prov = json.load(fh)
    return Dataset(vals[:, :q], vals[:, q:], prov)


def _sidecar_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return root + ".meta.json"


# ---------------------------------------------------------------------------
# Bundled reference instance (2 variables, 4 parameter-coupled constraints)
# ---------------------------------------------------------------------------


def reference_tpop(u_box=None) -> POPInstance:
    """A fixed 2-variable instance with strongly parameter-dependent
    constraints, used throughout the test-suite and the bundled benchmarks."""
    Q = np.diag([1.3040, 19.4545])
    H = np.array([[1.0, 0.0], [-1.0, 1.0]])
    c = np.array([1.0, 1.0])
    A = np.array([
        [0.2294, 0.0],
        [0.0, 0.1890],
        [0.5436, -0.5889],
        [0.2210, 0.0],
    ])
    b = np.array([2.5237, 4.2679, 2.8088, 3.2535])
    F = np.array([
        [0.0, -0.9733],
        [-0.8658, -0.4634],
        [-0.4757, -0.3624],
        [-0.9753, 0.0],
    ])
    box = np.array([[-10.0, 10.0], [-10.0, 10.0]]) if u_box is None else u_box
    return POPInstance(Q, H, c, A, b, F, box)


def reference_psi_ladder() -> list:
    """Three linear-coefficient maps of increasing nonlinearity in u for the
    reference instance's objective, from affine to deep rational."""

    def linear(u):
        return np.array([1.0 + u[0], u[1] - u[0] + 1.0])

    def rational(u):
        return np.array([
            (1.0 + u[0]) / (1.0 - u[0]),
            (u[1] - u[0] + 1.0) ** 3 / (u[1] - 1.0) ** 2,
        ])

    def rational_deep(u):
        return np.array([
            u[0] / (1.0 - 2.0 * u[0]) ** 4,
            (u[1] - u[0]) ** 3 / (3.0 * u[1] - 5.0) ** 5,
        ])

    return [("linear", linear), ("rational", rational), ("rational-deep", rational_deep)]
