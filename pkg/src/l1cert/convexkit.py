"""Convex solver contracts: dense linear programs and the composite problem.

Two entry points are consumed by the rest of the package.

``solve_lp``
    Dense LP ``min c^T z  s.t.  G z <= g,  E z = e,  lb <= z <= ub`` solved with
    the HiGHS dual simplex (through :func:`scipy.optimize.linprog`).  Every
    solution is re-validated here: primal feasibility, dual feasibility from
    the reported multipliers, and the primal/dual objective gap.  A solution
    that fails the checks is reported as ``IterLimit`` rather than ``Optimal``.

``solve_composite``
    ``min_h nu(h)  s.t.  ||A^T h - e_i||_inf <= gamma`` where ``nu`` is the
    nu-norm of a :class:`~l1cert.model.NuNormParams`.  After the standard lift
    it is a second-order cone program, solved with Clarabel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

import clarabel

__all__ = [
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "LpProblem",
    "SolveStatus",
    "solve_lp",
    "solve_composite",
    "polytope_support",
]


@dataclass(frozen=True)
class Tolerances:
    """Global accuracy targets quoted by solvers, certificates and tests."""

    feasibility: float = 1e-8
    gap: float = 1e-7
    inner: float = 1e-9  # tolerance handed to the underlying solvers

    def to_dict(self):
        return {"feasibility": self.feasibility, "gap": self.gap, "inner": self.inner}


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class LpProblem:
    """``min c^T z  s.t.  G z <= g,  E z = e,  lb <= z <= ub``.

    Missing blocks are ``None``.  Variables are free unless ``lb``/``ub`` are
    given (use ``-inf``/``inf`` entries for one-sided bounds).
    """

    c: np.ndarray
    G: np.ndarray | None = None
    g: np.ndarray | None = None
    E: np.ndarray | None = None
    e: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "c", c)
        N = c.shape[0]
        for mat, rhs in (("G", "g"), ("E", "e")):
            M = getattr(self, mat)
            r = getattr(self, rhs)
            if M is None:
                if r is not None and np.size(r) > 0:
                    raise ValueError(f"{rhs} given without {mat}")
                object.__setattr__(self, mat, None)
                object.__setattr__(self, rhs, None)
                continue
            if not sp.issparse(M):
                M = np.atleast_2d(np.asarray(M, dtype=float))
            r = np.asarray(r, dtype=float).ravel()
            if M.shape[1] != N or M.shape[0] != r.shape[0]:
                raise ValueError(f"{mat}/{rhs} have inconsistent dimensions {M.shape} / {r.shape}, n={N}")
            if M.shape[0] == 0:
                M, r = None, None
            object.__setattr__(self, mat, M)
            object.__setattr__(self, rhs, r)
        for name in ("lb", "ub"):
            b = getattr(self, name)
            if b is not None:
                b = np.broadcast_to(np.asarray(b, dtype=float), (N,)).copy()
            object.__setattr__(self, name, b)
        finite = [c] + [np.asarray(x.data if sp.issparse(x) else x) for x in (self.G, self.g, self.E, self.e)
                        if x is not None]
        if not all(np.all(np.isfinite(x)) for x in finite):
            raise ValueError("LP data must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class SolveStatus:
    """Outcome of a solve.

    ``residuals`` holds ``(primal_feas, dual_feas, gap)``: the largest scaled
    constraint violation, the largest scaled violation of the dual
    constraints, and ``|primal - dual| / (1 + |primal|)``.
    """

    state: str
    objective: float = float("nan")
    primal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residuals: tuple = (float("nan"), float("nan"), float("nan"))
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.state == "Optimal"

    def to_dict(self):
        return {"state": self.state, "objective": self.objective,
                "residuals": {"primal_feas": self.residuals[0], "dual_feas": self.residuals[1],
                              "gap": self.residuals[2]},
                "message": self.message}


# Attempted in order; the first answer passing validation is returned.  The
# default simplex is usually exact to rounding; badly scaled data sometimes
# needs the interior-point path (with crossover) or tighter tolerances.
_HIGHS_ATTEMPTS = (
    ("highs-ds", {}),
    ("highs-ipm", {}),
    ("highs-ds", {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}),
)


def _matvec(M, z):
    return np.asarray(M @ z).ravel()


def _rmatvec(M, y):
    return np.asarray(M.T @ y).ravel()


def solve_lp(p: LpProblem, tol: Tolerances = DEFAULT_TOLERANCES) -> SolveStatus:
    """Solve a dense LP and validate the answer.

    Returns
    -------
    SolveStatus
        ``state`` is one of ``Optimal``, ``Infeasible``, ``Unbounded`` or
        ``IterLimit``.  For ``Optimal`` the primal feasibility violation is at
        most ``tol.feasibility`` (relative to ``1 + ||rhs||_inf``) and the
        duality gap at most ``tol.gap`` relative.  The dual vector stacks the
        multipliers of ``G`` then ``E`` (nonpositive for ``G`` rows, following
        the sensitivity sign convention of HiGHS).
    """
    N = p.n_vars
    if p.lb is None and p.ub is None:
        bounds = (None, None)
    else:
        lb = np.full(N, -np.inf) if p.lb is None else p.lb
        ub = np.full(N, np.inf) if p.ub is None else p.ub
        bounds = np.column_stack([lb, ub])
    st = None
    for method, options in _HIGHS_ATTEMPTS:
        st = _solve_once(p, bounds, method, options, tol)
        if st.state in ("Optimal", "Infeasible", "Unbounded"):
            return st
    return st


def _solve_once(p: LpProblem, bounds, method, options, tol) -> SolveStatus:
    res = linprog(p.c, A_ub=p.G, b_ub=p.g, A_eq=p.E, b_eq=p.e, bounds=bounds, method=method, options=options)
    if res.status == 2:
        return SolveStatus("Infeasible", message=res.message)
    if res.status == 3:
        return SolveStatus("Unbounded", message=res.message)
    if res.status != 0 or res.x is None:
        return SolveStatus("IterLimit", message=res.message)

    z = np.asarray(res.x, dtype=float)
    scale = 1.0
    viol = 0.0
    dual_parts = []
    grad = p.c.copy()
    dual_obj = 0.0
    if p.G is not None:
        scale = max(scale, float(np.abs(p.g).max(initial=0.0)))
        viol = max(viol, float(np.max(_matvec(p.G, z) - p.g, initial=0.0)))
        lam = np.asarray(res.ineqlin.marginals, dtype=float)
        grad -= _rmatvec(p.G, lam)
        dual_obj += float(p.g @ lam)
        dual_parts.append(lam)
        viol_dual_sign = float(np.max(lam, initial=0.0))
    else:
        viol_dual_sign = 0.0
    if p.E is not None:
        scale = max(scale, float(np.abs(p.e).max(initial=0.0)))
        viol = max(viol, float(np.abs(_matvec(p.E, z) - p.e).max(initial=0.0)))
        mu = np.asarray(res.eqlin.marginals, dtype=float)
        grad -= _rmatvec(p.E, mu)
        dual_obj += float(p.e @ mu)
        dual_parts.append(mu)
    if p.lb is not None or p.ub is not None:
        lo = np.asarray(res.lower.marginals, dtype=float)
        hi = np.asarray(res.upper.marginals, dtype=float)
        grad -= lo + hi
        if p.lb is not None:
            fin = np.isfinite(p.lb)
            viol = max(viol, float(np.max(p.lb[fin] - z[fin], initial=0.0)))
            dual_obj += float(p.lb[fin] @ lo[fin])
        if p.ub is not None:
            fin = np.isfinite(p.ub)
            viol = max(viol, float(np.max(z[fin] - p.ub[fin], initial=0.0)))
            dual_obj += float(p.ub[fin] @ hi[fin])
    primal_feas = viol / (1.0 + scale)
    dual_feas = max(float(np.abs(grad).max(initial=0.0)), viol_dual_sign) / (1.0 + float(np.abs(p.c).max(initial=0.0)))
    obj = float(p.c @ z)
    gap = abs(obj - dual_obj) / (1.0 + abs(obj))
    dual = np.concatenate(dual_parts) if dual_parts else np.zeros(0)
    state = "Optimal"
    msg = res.message
    if not (primal_feas <= tol.feasibility and gap <= tol.gap and dual_feas <= tol.feasibility * 10):
        state = "IterLimit"
        msg = f"solution failed validation (primal_feas={primal_feas:.3g}, dual_feas={dual_feas:.3g}, gap={gap:.3g})"
    return SolveStatus(state, obj, z, dual, (primal_feas, dual_feas, gap), msg)


def polytope_support(U, g, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Solve the support LP ``max {g^T M z : C z <= c, E z = 0}`` of a polytope.

    The LP is posed as a minimization, so the support value is
    ``-status.objective`` when the status is ``Optimal``.
    """
    d = U.M.T @ np.asarray(g, dtype=float)
    E = U.E
    st = solve_lp(LpProblem(c=-d, G=U.C, g=U.c, E=E, e=None if E is None else np.zeros(E.shape[0])), tol)
    return st


_CLARABEL_MAP = {
    "Solved": "Optimal",
    "PrimalInfeasible": "Infeasible",
    "DualInfeasible": "Unbounded",
}


def _clarabel_settings(tol: Tolerances):
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = tol.inner
    s.tol_gap_rel = tol.inner
    s.tol_feas = tol.inner
    s.max_threads = 1
    s.max_iter = 200
    return s


def _composite_value(U, coef, h, tol):
    """Exact nu(h) for the closed-form variants; LP for polytopes."""
    if U.variant == "zero":
        sup = 0.0
    elif U.variant == "box_image":
        sup = U.L * float(np.abs(U.M.T @ h).sum())
    else:
        st = polytope_support(U, h, tol)
        if st.state != "Optimal":
            return float("nan")
        sup = max(0.0, -st.objective)
    return sup + coef * float(np.linalg.norm(h))


def solve_composite(A, i: int, gamma: float, params, tol: Tolerances = DEFAULT_TOLERANCES):
    """Minimize ``nu(h)`` subject to ``||A^T h - e_i||_inf <= gamma``.

    Parameters
    ----------
    A : SensingMatrix
    i : int
        Column index (0-based).
    gamma : float
        Feasibility level, ``gamma >= 0``.
    params : NuNormParams

    Returns
    -------
    h : ndarray, shape (m,)
    value : float
        ``nu(h)`` evaluated on the returned ``h`` (not the solver's objective).
    status : SolveStatus

    Notes
    -----
    For ``gamma >= 1`` the answer is ``h = 0``.  When ``nu`` vanishes
    identically (``sigma = 0`` and a trivial uncertainty set) every feasible
    ``h`` is optimal with value 0; the feasible ``h`` of least Euclidean norm
    is returned so that downstream certificates remain well defined.

    Lift: variables ``(h, t, w)`` for box images with
    ``nu = L * sum(w) + coef * t``, ``|M^T h| <= w``, ``||h||_2 <= t``; for
    polytopes the support term is replaced by its LP dual
    ``min c^T lam  s.t.  C^T lam + E^T mu = M^T h, lam >= 0``.
    """
    Amat = np.asarray(getattr(A, "entries", A), dtype=float)
    m, n = Amat.shape
    if not 0 <= i < n:
        raise IndexError(f"column index {i} out of range for n={n}")
    if not gamma >= 0:
        raise ValueError("gamma must be >= 0")
    U = params.uncertainty
    if U.dim != m:
        raise ValueError(f"uncertainty set lives in R^{U.dim}, expected R^{m}")
    if gamma >= 1.0:
        h = np.zeros(m)
        st = SolveStatus("Optimal", 0.0, h, np.zeros(0), (0.0, 0.0, 0.0), "h = 0 is feasible for gamma >= 1")
        return h, 0.0, st
    if gamma == 0.0 and m <= n and np.linalg.matrix_rank(Amat) == m:
        # A^T h = e_i has at most one solution; take it directly when it exists
        e = np.zeros(n)
        e[i] = 1.0
        h, *_ = np.linalg.lstsq(Amat.T, e, rcond=None)
        viol = float(np.abs(Amat.T @ h - e).max())
        if viol <= tol.feasibility:
            U0 = params.uncertainty
            value = 0.0 if (params.noise_coef == 0.0 and U0.is_trivial) else \
                _composite_value(U0, params.noise_coef, h, tol)
            st = SolveStatus("Optimal", value, h, np.zeros(0), (viol, 0.0, 0.0), "unique feasible point")
            return h, value, st

    coef = params.noise_coef
    degenerate = coef == 0.0 and U.is_trivial
    box = U.variant == "box_image" and U.L > 0 and not degenerate
    poly = U.variant == "polytope" and not degenerate
    k = U.M.shape[1] if (box or poly) else 0

    # variable layout: h (m), t (1), then w (k) for box images or lam (r), mu (q) for polytopes
    if poly:
        r = U.C.shape[0]
        qe = 0 if U.E is None else U.E.shape[0]
        N = m + 1 + r + qe
    else:
        r = qe = 0
        N = m + 1 + k
    q = np.zeros(N)
    q[m] = 1.0 if degenerate else coef
    if box:
        q[m + 1:] = U.L
    if poly:
        q[m + 1:m + 1 + r] = U.c

    e = np.zeros(n)
    e[i] = 1.0
    At = sp.csc_matrix(Amat.T)
    Z = lambda a, b: sp.csc_matrix((a, b))  # noqa: E731
    blocks_G, rhs = [], []
    blocks_G.append(sp.hstack([At, Z(n, N - m)]))
    rhs.append(e + gamma)
    blocks_G.append(sp.hstack([-At, Z(n, N - m)]))
    rhs.append(gamma - e)
    n_nonneg = 2 * n
    eq_G, eq_rhs = [], []
    if box:
        Mt = sp.csc_matrix(U.M.T)
        I = sp.identity(k, format="csc")
        blocks_G.append(sp.hstack([Mt, Z(k, 1), -I]))
        blocks_G.append(sp.hstack([-Mt, Z(k, 1), -I]))
        rhs += [np.zeros(k), np.zeros(k)]
        n_nonneg += 2 * k
    if poly:
        blocks_G.append(sp.hstack([Z(r, m + 1), -sp.identity(r, format="csc"), Z(r, qe)]))
        rhs.append(np.zeros(r))
        n_nonneg += r
        parts = [-sp.csc_matrix(U.M.T), Z(k, 1), sp.csc_matrix(U.C.T)]
        if qe:
            parts.append(sp.csc_matrix(U.E.T))
        eq_G.append(sp.hstack(parts))
        eq_rhs.append(np.zeros(k))
    soc = sp.hstack([sp.csc_matrix(np.vstack([np.eye(1, m + 1, m) * -1.0,
                                              np.hstack([-np.eye(m), np.zeros((m, 1))])])),
                     Z(m + 1, N - m - 1)])
    cones = []
    if eq_G:
        cones.append(clarabel.ZeroConeT(k))
    cones += [clarabel.NonnegativeConeT(n_nonneg), clarabel.SecondOrderConeT(m + 1)]
    G = sp.vstack(eq_G + blocks_G + [soc], format="csc")
    b = np.concatenate(eq_rhs + rhs + [np.zeros(m + 1)])
    P = sp.csc_matrix((N, N))
    solver = clarabel.DefaultSolver(P, q, G, b, cones, _clarabel_settings(tol))
    sol = solver.solve()
    name = str(sol.status).split(".")[-1]
    state = _CLARABEL_MAP.get(name, "IterLimit")
    if name == "AlmostSolved" and max(sol.r_prim, sol.r_dual) <= tol.gap:
        # reduced-accuracy exit; accepted only if the checks below also pass
        state = "Optimal"
    x = np.asarray(sol.x, dtype=float)
    h = x[:m].copy()
    feas = max(0.0, float(np.abs(Amat.T @ h - e).max()) - gamma)
    value = 0.0 if degenerate else _composite_value(U, coef, h, tol)
    obj = float(sol.obj_val)
    gap = abs(obj - float(sol.obj_val_dual)) / (1.0 + abs(obj))
    msg = f"clarabel status {name}, {sol.iterations} iterations"
    if state == "Optimal" and (feas > tol.feasibility or not np.isfinite(value)):
        state = "IterLimit"
        msg += f"; returned h violates the constraint by {feas:.3g}"
    elif state == "Optimal" and gap > tol.gap:
        state = "IterLimit"
        msg += f"; duality gap {gap:.3g} above tolerance"
    status = SolveStatus(state, value, h, np.asarray(sol.z, dtype=float), (feas, 0.0, gap), msg)
    return h, value, status
