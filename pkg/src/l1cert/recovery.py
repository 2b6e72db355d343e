"""l1 recovery routines: contrast-based (regular, penalized), Dantzig, Lasso.

Regular recovery::

    min ||v||_1  s.t.  |h_i^T (A v - y)| <= rho_i,  i = 1..n

Penalized recovery::

    min ||v||_1 + theta * s * ||H^T (A v - y)||_inf

Dantzig selector (optionally with a signal-side nuisance ``w`` in ``V``)::

    min ||v||_1  s.t.  |[A^T (A (v + w) - y)]_i| <= rho_i

Lasso (same optional nuisance)::

    min ||v||_1 + penalty * ||A (v + w) - y||_2^2

The first three are LPs solved through :mod:`l1cert.convexkit`.  The plain
Lasso is solved by accelerated proximal gradient with adaptive restart and
a final support polish; the nuisance-aware Lasso is a small QP handed to
Clarabel.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

import clarabel

from .convexkit import DEFAULT_TOLERANCES, LpProblem, SolveStatus, Tolerances, solve_lp
from .errors import DimensionError, ParameterError, SolverError
from .model import NoiseModel, SensingMatrix, UncertaintySet
from .synthesis import ContrastCertificate

__all__ = [
    "RecoveryResult",
    "recover_regular",
    "recover_penalized",
    "recover_dantzig",
    "recover_lasso",
    "lasso_ideal_sweep",
    "dantzig_rho",
    "lasso_auto_penalty",
    "soft_threshold",
]


@dataclass(frozen=True)
class RecoveryResult:
    x_hat: np.ndarray
    method: str
    objective: float
    status: SolveStatus
    rho_used: Any = None
    theta_used: float | None = None
    penalty_used: float | None = None
    nuisance_hat: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def errors(self, x) -> dict[str, float]:
        """``||x_hat - x||_p`` for p in (1, 2, inf)."""
        d = self.x_hat - np.asarray(x, dtype=float)
        return {"1": float(np.abs(d).sum()), "2": float(np.linalg.norm(d)), "inf": float(np.abs(d).max())}

    def to_dict(self) -> dict[str, Any]:
        rho = self.rho_used
        if isinstance(rho, np.ndarray):
            rho = rho.tolist()
        return {"method": self.method, "objective": self.objective, "x_hat": self.x_hat.tolist(),
                "status": self.status.to_dict(), "rho_used": rho, "theta_used": self.theta_used,
                "penalty_used": self.penalty_used, "info": self.info}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def soft_threshold(z, level):
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - level, 0.0)


def _prepare(y, A):
    Amat = A.entries if isinstance(A, SensingMatrix) else np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != Amat.shape[0]:
        raise DimensionError(f"observation has length {y.shape[0]}, expected {Amat.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("observation has non-finite entries")
    return Amat, y


def _l1_lp(n, extra_vars, B, z, rho, tol):
    """``min ||v||_1  s.t.  |B [v; extra] - z| <= rho`` plus box rows added by the caller.

    Rows with ``rho == 0`` become equalities.  Variable layout is
    ``(v, t, extra)``; returns the pieces of an :class:`LpProblem`.
    """
    I = np.eye(n)
    k = extra_vars
    c = np.concatenate([np.zeros(n), np.ones(n), np.zeros(k)])
    Z = np.zeros((n, k))
    G = [np.hstack([I, -I, Z]), np.hstack([-I, -I, Z])]
    g = [np.zeros(n), np.zeros(n)]
    Bv = np.hstack([B[:, :n], np.zeros((B.shape[0], n)), B[:, n:]])
    eq = rho == 0.0
    if np.any(~eq):
        G += [Bv[~eq], -Bv[~eq]]
        g += [z[~eq] + rho[~eq], rho[~eq] - z[~eq]]
    E = Bv[eq] if np.any(eq) else None
    e = z[eq] if np.any(eq) else None
    return c, np.vstack(G), np.concatenate(g), E, e


def _check_status(st: SolveStatus, method: str):
    if not st.ok:
        raise SolverError(f"{method} recovery: solver returned {st.state} ({st.message})", st)


def recover_regular(y, A: SensingMatrix, cert: ContrastCertificate, rho="auto",
                    tol: Tolerances = DEFAULT_TOLERANCES) -> RecoveryResult:
    """Regular l1 recovery with contrast ``cert.H``.

    ``rho="auto"`` uses ``rho_i = nu(h_i)``, the smallest value for which the
    certificate's risk bounds hold.  An explicit ``rho`` (scalar or vector)
    must satisfy ``rho_i >= nu(h_i) - 1e-12``.
    """
    Amat, y = _prepare(y, A)
    m, n = Amat.shape
    if cert.H.shape != (m, n):
        raise DimensionError("certificate does not match the sensing matrix")
    if isinstance(rho, str):
        if rho != "auto":
            raise ParameterError(f"rho must be 'auto' or numeric, got {rho!r}")
        rho_v = cert.nu_cols.copy()
    else:
        rho_v = np.broadcast_to(np.asarray(rho, dtype=float), (n,)).copy()
        if np.any(rho_v < cert.nu_cols - 1e-12):
            raise ParameterError("rho below certified noise level")
    H = cert.H
    c, G, g, E, e = _l1_lp(n, 0, H.T @ Amat, H.T @ y, rho_v, tol)
    st = solve_lp(LpProblem(c=c, G=G, g=g, E=E, e=e), tol)
    _check_status(st, "regular")
    x = st.primal[:n].copy()
    return RecoveryResult(x, "regular", float(np.abs(x).sum()), st, rho_used=rho_v)


def recover_penalized(y, A: SensingMatrix, cert: ContrastCertificate, s: int | None = None,
                      theta: float = 2.0, tol: Tolerances = DEFAULT_TOLERANCES) -> RecoveryResult:
    """Penalized l1 recovery ``min ||v||_1 + theta * s * ||H^T (A v - y)||_inf``."""
    Amat, y = _prepare(y, A)
    m, n = Amat.shape
    if cert.H.shape != (m, n):
        raise DimensionError("certificate does not match the sensing matrix")
    s = cert.s if s is None else int(s)
    if s < 1:
        raise ParameterError("s must be >= 1")
    if not theta > 0:
        raise ParameterError("theta must be > 0")
    B = cert.H.T @ Amat
    z = cert.H.T @ y
    I = np.eye(n)
    O = np.zeros((n, n))
    one = np.ones((n, 1))
    zc = np.zeros((n, 1))
    # variables (v, t, r)
    c = np.concatenate([np.zeros(n), np.ones(n), [theta * s]])
    G = np.vstack([np.hstack([I, -I, zc]), np.hstack([-I, -I, zc]),
                   np.hstack([B, O, -one]), np.hstack([-B, O, -one])])
    g = np.concatenate([np.zeros(2 * n), z, -z])
    st = solve_lp(LpProblem(c=c, G=G, g=g), tol)
    _check_status(st, "penalized")
    x = st.primal[:n].copy()
    obj = float(np.abs(x).sum() + theta * s * np.abs(B @ x - z).max())
    return RecoveryResult(x, "penalized", obj, st, theta_used=float(theta), info={"s": s})


def dantzig_rho(A, noise: NoiseModel, per_column: bool = True):
    """Default Dantzig level.

    ``per_column=True`` gives ``rho_i = sigma * sqrt(2 ln(n/eps)) * ||A_i||_2``;
    otherwise the scalar ``sigma * beta * sqrt(2 ln(n/eps))`` with
    ``beta = max_i ||A_i||_2``.
    """
    Amat = A.entries if isinstance(A, SensingMatrix) else np.asarray(A, dtype=float)
    n = Amat.shape[1]
    coef = noise.sigma * math.sqrt(2.0 * math.log(n / noise.epsilon))
    norms = np.linalg.norm(Amat, axis=0)
    return coef * norms if per_column else coef * float(norms.max())


def _nuisance_blocks(nuisance: UncertaintySet | None, n: int):
    """Return ``(M, G_z, g_z, E_z)`` describing ``w = M z`` or ``None`` if trivial."""
    if nuisance is None or nuisance.is_trivial:
        return None
    if nuisance.dim != n:
        raise DimensionError(f"signal-side nuisance must live in R^{n}, got R^{nuisance.dim}")
    if nuisance.variant == "box_image":
        k = nuisance.M.shape[1]
        Ik = np.eye(k)
        return nuisance.M, np.vstack([Ik, -Ik]), np.full(2 * k, nuisance.L), None
    return nuisance.M, nuisance.C, nuisance.c, nuisance.E


def recover_dantzig(y, A: SensingMatrix, rho="auto", nuisance: UncertaintySet | None = None,
                    noise: NoiseModel | None = None, tol: Tolerances = DEFAULT_TOLERANCES) -> RecoveryResult:
    """Dantzig selector, optionally jointly over a signal-side nuisance ``w in V``.

    ``rho="auto"`` requires ``noise`` and uses the per-column levels of
    :func:`dantzig_rho`.  A trivial ``V`` (absent, zero, or radius 0) runs the
    plain problem.
    """
    Amat, y = _prepare(y, A)
    m, n = Amat.shape
    if isinstance(rho, str):
        if rho != "auto":
            raise ParameterError(f"rho must be 'auto' or numeric, got {rho!r}")
        if noise is None:
            raise ParameterError("rho='auto' needs the noise model")
        rho_v = dantzig_rho(Amat, noise)
    else:
        rho_v = np.broadcast_to(np.asarray(rho, dtype=float), (n,)).copy()
        if np.any(rho_v < 0):
            raise ParameterError("rho must be >= 0")
    Gram = Amat.T @ Amat
    z = Amat.T @ y
    nb = _nuisance_blocks(nuisance, n)
    if nb is None:
        c, G, g, E, e = _l1_lp(n, 0, Gram, z, rho_v, tol)
        st = solve_lp(LpProblem(c=c, G=G, g=g, E=E, e=e), tol)
        _check_status(st, "dantzig")
        x = st.primal[:n].copy()
        return RecoveryResult(x, "dantzig", float(np.abs(x).sum()), st, rho_used=rho_v)
    M, Gz, gz, Ez = nb
    k = M.shape[1]
    B = np.hstack([Gram, Gram @ M])
    c, G, g, E, e = _l1_lp(n, k, B, z, rho_v, tol)
    G = np.vstack([G, np.hstack([np.zeros((Gz.shape[0], 2 * n)), Gz])])
    g = np.concatenate([g, gz])
    if Ez is not None:
        Erows = np.hstack([np.zeros((Ez.shape[0], 2 * n)), Ez])
        E = Erows if E is None else np.vstack([E, Erows])
        e = np.zeros(Ez.shape[0]) if e is None else np.concatenate([e, np.zeros(Ez.shape[0])])
    st = solve_lp(LpProblem(c=c, G=G, g=g, E=E, e=e), tol)
    _check_status(st, "dantzig")
    x = st.primal[:n].copy()
    w = M @ st.primal[2 * n:]
    return RecoveryResult(x, "dantzig", float(np.abs(x).sum()), st, rho_used=rho_v, nuisance_hat=w,
                          info={"nuisance": nuisance.variant})


def lasso_auto_penalty(kappa: float, A, noise: NoiseModel) -> float:
    """``(1 - 2 kappa) / (4 rho)`` with ``rho = sigma * beta * sqrt(2 ln(n/eps))``."""
    if not kappa < 0.5:
        raise ParameterError("automatic Lasso penalty needs kappa < 1/2")
    rho = dantzig_rho(A, noise, per_column=False)
    if rho <= 0:
        raise ParameterError("automatic Lasso penalty needs sigma > 0")
    return (1.0 - 2.0 * kappa) / (4.0 * rho)


def _lasso_objective(Amat, y, pen, v):
    r = Amat @ v - y
    return float(np.abs(v).sum() + pen * (r @ r))


def _lasso_fista(Amat, y, pen, x0=None, max_iter=200000, rtol=1e-8):
    """Accelerated proximal gradient for ``||v||_1 + pen * ||A v - y||^2``.

    Returns ``(v, residual, iterations)`` where ``residual`` is the sup-norm
    of the gradient mapping.  Uses a fixed step ``1 / Lip`` (``Lip`` from the
    spectral norm, so no backtracking is needed), gradient-based adaptive
    restart, and a final polish on the detected support.
    """
    m, n = Amat.shape
    Lip = 2.0 * pen * float(np.linalg.norm(Amat, 2)) ** 2
    if Lip == 0.0:
        return np.zeros(n), 0.0, 0
    Aty = Amat.T @ y
    Gram = Amat.T @ Amat
    target = rtol * (1.0 + float(np.linalg.norm(y)))

    def grad(v):
        return 2.0 * pen * (Gram @ v - Aty)

    def gmap(v):
        vp = soft_threshold(v - grad(v) / Lip, 1.0 / Lip)
        return vp, Lip * float(np.abs(v - vp).max())

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    zk = x.copy()
    t = 1.0
    res = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        x_new = soft_threshold(zk - grad(zk) / Lip, 1.0 / Lip)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if (zk - x_new) @ (x_new - x) > 0:  # restart momentum
            t_new = 1.0
            zk = x_new.copy()
        else:
            zk = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if it % 20 == 0:
            xp, res = gmap(x)
            if res <= target:
                x = xp
                break
            x_pol = _lasso_polish(Gram, Aty, pen, x)
            if x_pol is not None:
                xp2, res2 = gmap(x_pol)
                if res2 <= target:
                    x, res = x_pol, res2
                    break
    else:
        _, res = gmap(x)
    return x, res, it


def _lasso_polish(Gram, Aty, pen, v):
    """Solve the optimality conditions on the support and sign pattern of ``v``."""
    S = np.flatnonzero(v)
    if S.size == 0:
        return None
    sg = np.sign(v[S])
    GS = Gram[np.ix_(S, S)]
    rhs = Aty[S] - sg / (2.0 * pen)
    try:
        vs = np.linalg.solve(GS, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(vs)) or np.any(np.sign(vs) != sg):
        return None
    out = np.zeros_like(v)
    out[S] = vs
    return out


def _lasso_qp(Amat, y, pen, M, Gz, gz, Ez, tol):
    """Nuisance-aware Lasso as a QP over ``(v, t, z, r)`` with ``r = A (v + M z) - y``."""
    m, n = Amat.shape
    k = M.shape[1]
    N = 2 * n + k + m
    P = sp.block_diag([sp.csc_matrix((2 * n + k, 2 * n + k)), 2.0 * pen * sp.identity(m)], format="csc")
    q = np.concatenate([np.zeros(n), np.ones(n), np.zeros(k + m)])
    AM = Amat @ M
    rows_eq = [np.hstack([Amat, np.zeros((m, n)), AM, -np.eye(m)])]
    b_eq = [y]
    if Ez is not None:
        rows_eq.append(np.hstack([np.zeros((Ez.shape[0], 2 * n)), Ez, np.zeros((Ez.shape[0], m))]))
        b_eq.append(np.zeros(Ez.shape[0]))
    I = np.eye(n)
    Znk = np.zeros((n, k + m))
    rows_in = [np.hstack([I, -I, Znk]), np.hstack([-I, -I, Znk]),
               np.hstack([np.zeros((Gz.shape[0], 2 * n)), Gz, np.zeros((Gz.shape[0], m))])]
    b_in = [np.zeros(2 * n), gz]
    Gm = sp.csc_matrix(np.vstack(rows_eq + rows_in))
    b = np.concatenate(b_eq + b_in)
    neq = sum(r.shape[0] for r in rows_eq)
    cones = [clarabel.ZeroConeT(neq), clarabel.NonnegativeConeT(Gm.shape[0] - neq)]
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.tol_gap_abs = tol.inner
    st.tol_gap_rel = tol.inner
    st.tol_feas = tol.inner
    st.max_threads = 1
    sol = clarabel.DefaultSolver(P, q, Gm, b, cones, st).solve()
    name = str(sol.status).split(".")[-1]
    ok = name == "Solved" or (name == "AlmostSolved" and max(sol.r_prim, sol.r_dual) <= tol.gap)
    xv = np.asarray(sol.x, dtype=float)
    gap = abs(sol.obj_val - sol.obj_val_dual) / (1.0 + abs(sol.obj_val))
    status = SolveStatus("Optimal" if ok else "IterLimit", float(sol.obj_val), xv, np.asarray(sol.z),
                         (float(sol.r_prim), float(sol.r_dual), gap), f"clarabel status {name}")
    return xv[:n].copy(), M @ xv[2 * n:2 * n + k], status


def recover_lasso(y, A: SensingMatrix, penalty="auto", nuisance: UncertaintySet | None = None,
                  kappa: float | None = None, noise: NoiseModel | None = None, x0=None,
                  max_iter: int = 200000, tol: Tolerances = DEFAULT_TOLERANCES) -> RecoveryResult:
    """Lasso ``min ||v||_1 + penalty * ||A (v + w) - y||^2`` (``w in V`` optional).

    ``penalty="auto"`` needs ``kappa`` (from a contrast certificate) and
    ``noise``; see :func:`lasso_auto_penalty`.

    Raises
    ------
    SolverError
        If the proximal-gradient residual does not reach
        ``1e-8 * (1 + ||y||)`` within ``max_iter`` iterations.
    """
    Amat, y = _prepare(y, A)
    m, n = Amat.shape
    if isinstance(penalty, str):
        if penalty != "auto":
            raise ParameterError(f"penalty must be 'auto' or numeric, got {penalty!r}")
        if kappa is None or noise is None:
            raise ParameterError("penalty='auto' needs kappa and the noise model")
        pen = lasso_auto_penalty(kappa, Amat, noise)
    else:
        pen = float(penalty)
        if not pen > 0:
            raise ParameterError("Lasso penalty must be > 0")
    nb = _nuisance_blocks(nuisance, n)
    if nb is None:
        x, res, it = _lasso_fista(Amat, y, pen, x0=x0, max_iter=max_iter)
        target = 1e-8 * (1.0 + float(np.linalg.norm(y)))
        obj = _lasso_objective(Amat, y, pen, x)
        st = SolveStatus("Optimal" if res <= target else "IterLimit", obj, x, np.zeros(0), (0.0, res, 0.0),
                         f"proximal gradient, {it} iterations, residual {res:.3g}")
        if not st.ok:
            raise SolverError(f"Lasso did not converge: residual {res:.3g} after {it} iterations", st)
        return RecoveryResult(x, "lasso", obj, st, penalty_used=pen, info={"iterations": it})
    M, Gz, gz, Ez = nb
    x, w, st = _lasso_qp(Amat, y, pen, M, Gz, gz, Ez, tol)
    _check_status(st, "lasso")
    r = Amat @ (x + w) - y
    obj = float(np.abs(x).sum() + pen * (r @ r))
    return RecoveryResult(x, "lasso", obj, st, penalty_used=pen, nuisance_hat=w,
                          info={"nuisance": nuisance.variant})


def lasso_ideal_sweep(y, A: SensingMatrix, x_true, base_penalty: float, k_range=range(-60, 61),
                      p="1", nuisance: UncertaintySet | None = None) -> tuple[RecoveryResult, int]:
    """Oracle Lasso: best penalty on the grid ``base_penalty * 1.05**k``.

    "Best" means the smallest ``||x_hat - x_true||_p`` (``p`` in "1", "2",
    "inf"); this uses the unknown signal and only serves as a benchmark.
    Solutions are warm-started along the grid.

    Returns
    -------
    result : RecoveryResult
        The best recovery (``info["k"]`` holds the grid index).
    k : int
    """
    best, best_k, best_err = None, None, math.inf
    x0 = None
    for k in k_range:
        r = recover_lasso(y, A, base_penalty * 1.05 ** k, nuisance=nuisance, x0=x0)
        x0 = r.x_hat
        err = r.errors(x_true)[str(p)]
        if err < best_err:
            best, best_k, best_err = r, k, err
    info = dict(best.info)
    info["k"] = best_k
    return RecoveryResult(best.x_hat, "lasso_ideal", best.objective, best.status,
                          penalty_used=best.penalty_used, nuisance_hat=best.nuisance_hat, info=info), best_k
