"""Verifiable goodness quantities and contrast-matrix synthesis.

For a sensing matrix ``A`` and a column index ``i`` consider

    gamma_i = min_h ||A^T h - e_i||_inf = max {x_i : ||x||_1 <= 1, A x = 0}

(the two sides are LP duals).  ``gamma_star = max_i gamma_i`` is the smallest
level at which a contrast matrix ``H`` with ``||A^T h_i - e_i||_inf <= gamma``
for all ``i`` exists.  Any such ``H`` certifies, for every ``x``,

    |x_i| <= |h_i^T A x| + gamma * ||x||_1,

so ``||x||_inf <= ||H^T A x||_inf + (kappa / s) ||x||_1`` with
``kappa = s * gamma``.  Among all such ``H`` the one with the smallest
``nu(H) = max_i nu(h_i)`` is obtained column by column from

    Opt_i(gamma) = min_h { nu(h) : ||A^T h - e_i||_inf <= gamma },

and ``omega_star(gamma) = max_i Opt_i(gamma)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ._parallel import pmap
from .convexkit import DEFAULT_TOLERANCES, LpProblem, Tolerances, solve_composite, solve_lp
from .errors import (DimensionError, InfeasibleGammaError, NotCertifiableError, ParameterError,
                     SolverError)
from .model import NoiseModel, NuNormParams, SensingMatrix, UncertaintySet, support_function

__all__ = [
    "GoodnessProfile",
    "ContrastCertificate",
    "gamma_star",
    "omega_star",
    "select_gamma_bar",
    "incoherence_contrast",
    "mutual_incoherence",
    "verify_contrast",
    "symmetrize_contrast",
    "contrast_residuals",
    "nu_columns",
]

ADMISSIBLE_MARGIN = 1e-9  # "s * gamma admissible" means s * gamma <= 1/2 - ADMISSIBLE_MARGIN
DUALITY_TOL = 1e-6
# internal primal/dual sanity check in gamma_star; badly scaled operators (smooth
# convolution kernels) reach ~1e-6 disagreement at HiGHS default accuracy
CROSSCHECK_TOL = 1e-5
RESIDUAL_SLACK = 1e-6
VERIFY_TOL = 1e-8


@dataclass(frozen=True)
class GoodnessProfile:
    """Per-column limits of the verifiable condition.

    ``max_certified_s`` is the largest ``s`` with
    ``s * gamma_star <= 1/2 - 1e-9`` (0 if there is none, ``n`` when
    ``gamma_star == 0``).
    """

    gamma_star: float
    max_certified_s: int
    per_index_gamma: np.ndarray
    per_index_dual: np.ndarray

    def to_dict(self):
        return {"gamma_star": self.gamma_star, "max_certified_s": self.max_certified_s,
                "per_index_gamma": self.per_index_gamma.tolist(),
                "per_index_dual": self.per_index_dual.tolist()}


def _max_certified_s(gs: float, n: int) -> int:
    if gs <= 0.0:
        return n
    return int(min(n, math.floor((0.5 - ADMISSIBLE_MARGIN) / gs)))


@dataclass(frozen=True)
class ContrastCertificate:
    """Contrast matrix together with its verified accuracy parameters.

    Attributes
    ----------
    H : ndarray, shape (m, n)
    gamma_bar : float
        Level with ``||A^T h_i - e_i||_inf <= gamma_bar`` for every column.
    s : int
    kappa : float
        ``s * gamma_bar``.
    omega_star : float
        ``nu(H) = max_i nu(h_i)``.
    nu_cols : ndarray, shape (n,)
        ``nu(h_i)`` evaluated on the stored columns.
    residuals : ndarray, shape (n,)
        ``||A^T h_i - e_i||_inf`` evaluated on the stored columns.
    env : NuNormParams
    a_hash : str
        SHA-256 content hash of ``A``.
    """

    H: np.ndarray
    gamma_bar: float
    s: int
    kappa: float
    omega_star: float
    nu_cols: np.ndarray
    residuals: np.ndarray
    env: NuNormParams
    a_hash: str = ""
    tolerances: Tolerances = DEFAULT_TOLERANCES
    source: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("H", "nu_cols", "residuals"):
            a = np.array(getattr(self, name), dtype=float, copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.kappa != self.s * self.gamma_bar:
            raise ValueError("kappa must equal s * gamma_bar")
        if np.any(self.residuals > self.gamma_bar + RESIDUAL_SLACK):
            j = int(np.argmax(self.residuals - self.gamma_bar))
            raise SolverError(f"column {j} residual {self.residuals[j]:.3g} exceeds gamma_bar "
                              f"{self.gamma_bar:.3g}", index=j)
        if self.nu_cols.size and self.nu_cols.max() > self.omega_star + 1e-9:
            raise ValueError("omega_star must dominate every column nu")

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def admissible(self) -> bool:
        """True when ``kappa < 1/2`` with the package-wide margin."""
        return self.kappa <= 0.5 - ADMISSIBLE_MARGIN

    def with_s(self, s: int) -> "ContrastCertificate":
        """Same matrix, re-labelled for another sparsity level."""
        return ContrastCertificate(self.H, self.gamma_bar, int(s), int(s) * self.gamma_bar, self.omega_star,
                                   self.nu_cols, self.residuals, self.env, self.a_hash, self.tolerances,
                                   self.source, dict(self.extra))

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma_bar": self.gamma_bar,
            "s": self.s,
            "kappa": self.kappa,
            "omega_star": self.omega_star,
            "nu_cols": self.nu_cols.tolist(),
            "residuals": self.residuals.tolist(),
            "env": self.env.to_dict(),
            "a_hash": self.a_hash,
            "tolerances": self.tolerances.to_dict(),
            "source": self.source,
            "extra": self.extra,
            "H": self.H.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ContrastCertificate":
        tol = Tolerances(**d["tolerances"]) if "tolerances" in d else DEFAULT_TOLERANCES
        return cls(np.array(d["H"], dtype=float).reshape(-1, len(d["nu_cols"])), float(d["gamma_bar"]),
                   int(d["s"]), float(d["kappa"]), float(d["omega_star"]), np.array(d["nu_cols"]),
                   np.array(d["residuals"]), NuNormParams.from_dict(d["env"]), d.get("a_hash", ""), tol,
                   d.get("source", ""), d.get("extra", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "ContrastCertificate":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def check_matrix(self, A: SensingMatrix) -> None:
        """Raise if ``A`` is not the matrix this certificate was built for."""
        if A.entries.shape != self.H.shape:
            raise DimensionError(f"certificate is for a {self.H.shape} matrix, got {A.entries.shape}")
        if self.a_hash and A.content_hash() != self.a_hash:
            raise ValueError("certificate was issued for a different sensing matrix")


def _entries(A):
    return A.entries if isinstance(A, SensingMatrix) else np.asarray(A, dtype=float)


def contrast_residuals(A, H) -> np.ndarray:
    """``||A^T h_i - e_i||_inf`` for every column ``h_i`` of ``H``."""
    Amat = _entries(A)
    H = np.asarray(H, dtype=float)
    if H.shape != Amat.shape:
        raise DimensionError(f"contrast shape {H.shape} does not match A {Amat.shape}")
    Z = H.T @ Amat - np.eye(Amat.shape[1])  # row i is (A^T h_i - e_i)^T
    return np.abs(Z).max(axis=1)


def nu_columns(params: NuNormParams, H) -> np.ndarray:
    """``nu(h_i)`` for every column; closed form except for polytopes."""
    H = np.asarray(H, dtype=float)
    U = params.uncertainty
    base = params.noise_coef * np.linalg.norm(H, axis=0)
    if U.variant == "zero":
        return base
    if U.variant == "box_image":
        return base + U.L * np.abs(U.M.T @ H).sum(axis=0)
    return base + np.array([support_function(U, H[:, j]) for j in range(H.shape[1])])


def _make_certificate(A: SensingMatrix, H, gamma: float, s: int, params: NuNormParams, source: str,
                      tol: Tolerances = DEFAULT_TOLERANCES, extra=None) -> ContrastCertificate:
    H = np.asarray(H, dtype=float)
    res = contrast_residuals(A, H)
    nu = nu_columns(params, H)
    return ContrastCertificate(H, float(gamma), int(s), int(s) * float(gamma), float(nu.max(initial=0.0)),
                               nu, res, params, A.content_hash(), tol, source, extra or {})


# --- group structure of Sylvester-Hadamard row samples ---------------------

def _hadamard_signs(A: SensingMatrix) -> np.ndarray | None:
    """Sign matrix ``S`` with ``S[:, i] * A[:, j] == A[:, i ^ j]`` or ``None``.

    Holds for any row-scaled selection of rows of a Sylvester-Hadamard matrix
    with columns in natural order; the identity is checked on the actual
    entries, so a stale or wrong ``hadamard_rows`` tag is harmless.
    """
    rows = A.hadamard_rows
    if rows is None:
        return None
    n = A.n
    if n & (n - 1) or len(rows) != A.m:
        return None
    idx = np.arange(n)
    r = np.asarray(rows)
    # Sylvester entry H[r, c] = (-1)^{popcount(r & c)}
    bits = np.bitwise_and.outer(r, idx)
    pop = np.zeros_like(bits)
    while np.any(bits):
        pop += bits & 1
        bits >>= 1
    S = 1.0 - 2.0 * (pop & 1)
    Amat = A.entries
    for i in range(n):
        if not np.array_equal(S[:, [i]] * Amat, Amat[:, idx ^ i]):
            return None
    return S


def _sign_invariant(params: NuNormParams) -> bool:
    """nu(D h) = nu(h) for every diagonal sign matrix D."""
    return params.uncertainty.variant == "zero"


# --- gamma_star ----------------------------------------------------------

def _gamma_primal(Amat, i, tol):
    m, n = Amat.shape
    e = np.zeros(n)
    e[i] = 1.0
    c = np.zeros(m + 1)
    c[m] = 1.0
    ones = np.ones((n, 1))
    G = np.vstack([np.hstack([Amat.T, -ones]), np.hstack([-Amat.T, -ones])])
    g = np.concatenate([e, -e])
    return solve_lp(LpProblem(c=c, G=G, g=g), tol)


def _gamma_dual(Amat, i, tol):
    m, n = Amat.shape
    # variables (x, z): max x_i  s.t. |x| <= z, sum z <= 1, A x = 0
    c = np.zeros(2 * n)
    c[i] = -1.0
    I = np.eye(n)
    G = np.vstack([np.hstack([I, -I]), np.hstack([-I, -I]), np.hstack([np.zeros(n), np.ones(n)])[None, :]])
    g = np.concatenate([np.zeros(2 * n), [1.0]])
    E = np.hstack([Amat, np.zeros((m, n))])
    return solve_lp(LpProblem(c=c, G=G, g=g, E=E, e=np.zeros(m)), tol)


def gamma_star(A: SensingMatrix, threads: int | None = None,
               tol: Tolerances = DEFAULT_TOLERANCES) -> GoodnessProfile:
    """Compute ``gamma_i`` for every column by the primal LP and its dual.

    Raises
    ------
    SolverError
        If an LP fails, or primal and dual values differ by more than ``CROSSCHECK_TOL``;
        ``index`` carries the failing column.
    """
    Amat = A.entries
    n = A.n
    S = _hadamard_signs(A)
    indices = [0] if S is not None else list(range(n))

    def one(i):
        p = _gamma_primal(Amat, i, tol)
        d = _gamma_dual(Amat, i, tol)
        if not p.ok:
            raise SolverError(f"gamma LP failed for column {i}: {p.message}", p, i)
        if not d.ok:
            raise SolverError(f"dual gamma LP failed for column {i}: {d.message}", d, i)
        pv, dv = p.objective, -d.objective
        if abs(pv - dv) > CROSSCHECK_TOL:
            raise SolverError(f"primal/dual gamma mismatch at column {i}: {pv} vs {dv}", p, i)
        return pv, dv

    vals = pmap(one, indices, threads)
    if S is not None:
        vals = vals * n
    prim = np.array([v[0] for v in vals])
    dual = np.array([v[1] for v in vals])
    gs = float(np.clip(np.maximum(prim, dual), 0.0, 1.0).max())
    prim = np.clip(prim, 0.0, 1.0)
    return GoodnessProfile(gs, _max_certified_s(gs, n), prim, dual)


# --- omega_star ------------------------------------------------------------

def omega_star(A: SensingMatrix, gamma: float, params: NuNormParams, s: int = 1,
               threads: int | None = None, profile: GoodnessProfile | None = None,
               tol: Tolerances = DEFAULT_TOLERANCES) -> ContrastCertificate:
    """Synthesize the optimal contrast matrix at level ``gamma``.

    Column ``i`` of ``H`` solves ``Opt_i(gamma)``; the certificate stores
    ``omega_star = max_i nu(h_i)`` together with the residuals recomputed from
    the returned matrix.

    Raises
    ------
    InfeasibleGammaError
        If ``gamma < gamma_star(A) - 1e-9``.
    SolverError
        If a column subproblem fails.
    """
    if params.m != A.m or params.n != A.n:
        raise DimensionError("nu-norm parameters do not match the sensing matrix")
    gamma = float(gamma)
    if not gamma >= 0:
        raise ParameterError("gamma must be >= 0")
    if gamma >= 1.0:
        return _make_certificate(A, np.zeros((A.m, A.n)), gamma, s, params, "omega_star", tol)
    if profile is None:
        profile = gamma_star(A, threads=threads, tol=tol)
    if gamma < profile.gamma_star - 1e-9:
        raise InfeasibleGammaError(f"condition infeasible at this gamma ({gamma:.6g} < gamma_star "
                                   f"{profile.gamma_star:.6g})")
    g_solve = max(gamma, profile.gamma_star)
    S = _hadamard_signs(A) if _sign_invariant(params) else None

    def one(i):
        h, val, st = solve_composite(A, i, g_solve, params, tol)
        if not st.ok:
            raise SolverError(f"composite problem failed for column {i}: {st.message}", st, i)
        return h

    if S is not None:
        h0 = one(0)
        H = S * h0[:, None]
    else:
        H = np.column_stack(pmap(one, range(A.n), threads))
    return _make_certificate(A, H, gamma, s, params, "omega_star", tol,
                             {"gamma_star": profile.gamma_star, "symmetry": S is not None})


# --- choice of gamma_bar -----------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def select_gamma_bar(A: SensingMatrix, s: int, gamma_plus: float, params: NuNormParams,
                     threads: int | None = None, tau_tol: float = 1e-4, max_iter: int = 200,
                     profile: GoodnessProfile | None = None, tol: Tolerances = DEFAULT_TOLERANCES):
    """Choose ``gamma_bar`` maximizing ``tau`` in ``tau * omega_star(g) <= 1 - 2 s g``.

    The search runs over ``gamma_star <= g <= gamma_plus``.  An outer
    bisection on ``tau`` (to ``tau_tol`` absolute) calls an inner
    golden-section search minimizing the convex margin
    ``tau * omega_star(g) + 2 s g - 1``.  ``omega_star`` evaluations are
    memoized.  When ``omega_star`` vanishes identically every ``g`` is
    optimal and the smallest one, ``gamma_star``, is returned.

    Returns
    -------
    gamma_bar : float
    cert : ContrastCertificate
    """
    s = int(s)
    if s < 1:
        raise ParameterError("s must be >= 1")
    if profile is None:
        profile = gamma_star(A, threads=threads, tol=tol)
    gs = profile.gamma_star
    if s * gs > 0.5 - ADMISSIBLE_MARGIN:
        raise NotCertifiableError(f"sparsity level not certifiable: s * gamma_star = {s * gs:.6g} >= 1/2")
    if not gamma_plus < 1.0 / (2 * s):
        raise ParameterError(f"gamma_plus must be < 1/(2s) = {1.0 / (2 * s):.6g}")
    if gamma_plus < gs:
        raise InfeasibleGammaError(f"gamma_plus {gamma_plus:.6g} below gamma_star {gs:.6g}")

    memo: dict[float, ContrastCertificate] = {}

    def cert_at(g):
        if g not in memo:
            memo[g] = omega_star(A, g, params, s, threads, profile, tol)
        return memo[g]

    def omega(g):
        return cert_at(g).omega_star

    lo_g, hi_g = gs, float(gamma_plus)
    if hi_g - lo_g <= 0.0 or params.degenerate:
        gb = lo_g
        return gb, cert_at(gb)

    def best_margin(tau):
        """Golden-section minimum of the convex margin on [lo_g, hi_g]."""
        a, b = lo_g, hi_g
        best_g, best_v = None, math.inf
        for g in (a, b):
            v = tau * omega(g) + 2 * s * g - 1.0
            if v < best_v:
                best_g, best_v = g, v
        if best_v <= 0.0 and best_g == a:
            return best_g, best_v
        x1 = b - _GOLDEN * (b - a)
        x2 = a + _GOLDEN * (b - a)
        f1 = tau * omega(x1) + 2 * s * x1 - 1.0
        f2 = tau * omega(x2) + 2 * s * x2 - 1.0
        it = 0
        xtol = 1e-4 * (hi_g - lo_g)
        while b - a > xtol and it < max_iter:
            it += 1
            for g, v in ((x1, f1), (x2, f2)):
                if v < best_v or (v == best_v and g < best_g):
                    best_g, best_v = g, v
            if best_v <= 0.0:
                break  # a feasible gamma is all the outer bisection needs
            if f1 <= f2:
                b, x2, f2 = x2, x1, f1
                x1 = b - _GOLDEN * (b - a)
                f1 = tau * omega(x1) + 2 * s * x1 - 1.0
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + _GOLDEN * (b - a)
                f2 = tau * omega(x2) + 2 * s * x2 - 1.0
        for g, v in ((x1, f1), (x2, f2)):
            if v < best_v or (v == best_v and g < best_g):
                best_g, best_v = g, v
        return best_g, best_v

    w_hi = omega(hi_g)
    tau_lo, g_lo = 0.0, lo_g
    tau_hi = (1.0 - 2 * s * lo_g) / w_hi
    # tau_hi is feasible only if the best point attains it; check once
    g_try, v_try = best_margin(tau_hi)
    if v_try <= 0.0:
        tau_lo, g_lo = tau_hi, g_try
    it = 0
    while tau_hi - tau_lo > tau_tol and it < max_iter:
        it += 1
        tau = 0.5 * (tau_lo + tau_hi)
        g_try, v_try = best_margin(tau)
        if v_try <= 0.0:
            tau_lo, g_lo = tau, g_try
        else:
            tau_hi = tau
    cert = cert_at(g_lo)
    extra = dict(cert.extra)
    extra.update({"tau": tau_lo, "tau_upper": tau_hi, "omega_evaluations": len(memo)})
    cert = ContrastCertificate(cert.H, cert.gamma_bar, cert.s, cert.kappa, cert.omega_star, cert.nu_cols,
                               cert.residuals, cert.env, cert.a_hash, cert.tolerances, "select_gamma_bar",
                               extra)
    return g_lo, cert


# --- mutual incoherence --------------------------------------------------------

def mutual_incoherence(A) -> float:
    """``mu(A) = max_{i != j} |A_i^T A_j| / (A_i^T A_i)``."""
    Amat = _entries(A)
    Gm = Amat.T @ Amat
    d = np.diag(Gm).copy()
    if np.any(d == 0.0):
        raise ParameterError("sensing matrix has a zero column")
    if Amat.shape[1] == 1:
        return 0.0
    R = np.abs(Gm) / d[:, None]
    np.fill_diagonal(R, 0.0)
    return float(R.max())


def incoherence_contrast(A: SensingMatrix, params: NuNormParams | None = None,
                         s: int = 1) -> ContrastCertificate:
    """Closed-form contrast ``H(A) = [A_i / (A_i^T A_i)] / (mu + 1)``.

    The certificate level is ``gamma_bar = mu / (mu + 1)``: the diagonal of
    ``I - H^T A`` equals ``gamma_bar`` and its off-diagonal entries are
    bounded by it.  Without ``params`` the nu-norm is taken as identically
    zero (sigma = 0, no nuisance).
    """
    Amat = A.entries
    mu = mutual_incoherence(A)
    d = np.einsum("ij,ij->j", Amat, Amat)
    H = Amat / d[None, :] / (mu + 1.0)
    gb = mu / (mu + 1.0)
    if params is None:
        params = NuNormParams(UncertaintySet.zero(A.m), NoiseModel(0.0, 0.5), A.n)
    return _make_certificate(A, H, gb, s, params, "incoherence", extra={"mu": mu})


# --- verification and symmetrization -------------------------------------------

def verify_contrast(A, H, gamma) -> tuple[bool, np.ndarray]:
    """Check ``||A^T h_i - e_i||_inf <= gamma_i`` for every column.

    ``gamma`` is a scalar or a per-column vector.  This per-column test is a
    sufficient condition for the sup-norm condition on ``H``; exact
    verification of the latter for an arbitrary ``H`` is not attempted.
    """
    res = contrast_residuals(A, H)
    g = np.broadcast_to(np.asarray(gamma, dtype=float), res.shape)
    ok = bool(np.max(res - g, initial=-np.inf) <= VERIFY_TOL)
    return ok, res


def symmetrize_contrast(A, H, kappa: float, s: int, threads: int | None = None,
                        tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Turn a contrast satisfying the sup-norm condition into a per-column one.

    For each ``i`` a matrix game is solved as an LP:
    ``min_{lam in simplex} ||A^T [H, -H] lam - e_i||_inf``.  Column ``i`` of
    the result is ``[H, -H] lam``; it has residual at most ``kappa / s`` when
    the input satisfies the condition, and ``nu`` of the output never exceeds
    ``nu(H)`` for any norm.  Among optimal mixed strategies the LP solver's
    (deterministic) choice is used.

    Raises
    ------
    NotCertifiableError
        If some game value exceeds ``kappa / s`` ("input does not satisfy the
        condition").
    """
    Amat = _entries(A)
    H = np.asarray(H, dtype=float)
    m, n = Amat.shape
    if H.shape != (m, n):
        raise DimensionError("contrast shape does not match A")
    HH = np.hstack([H, -H])
    B = Amat.T @ HH  # n x 2n
    level = float(kappa) / int(s)
    ones = np.ones((n, 1))
    G = np.vstack([np.hstack([B, -ones]), np.hstack([-B, -ones])])
    E = np.hstack([np.ones(2 * n), [0.0]])[None, :]
    lb = np.zeros(2 * n + 1)
    lb[-1] = -np.inf
    c = np.zeros(2 * n + 1)
    c[-1] = 1.0

    def one(i):
        e = np.zeros(n)
        e[i] = 1.0
        st = solve_lp(LpProblem(c=c, G=G, g=np.concatenate([e, -e]), E=E, e=[1.0], lb=lb), tol)
        if not st.ok:
            raise SolverError(f"game LP failed for column {i}: {st.message}", st, i)
        if st.objective > level + VERIFY_TOL:
            raise NotCertifiableError(f"input does not satisfy the condition (column {i}: game value "
                                      f"{st.objective:.6g} > kappa/s = {level:.6g})")
        lam = np.clip(st.primal[:2 * n], 0.0, None)
        lam /= lam.sum()
        return HH @ lam

    return np.column_stack(pmap(one, range(n), threads))
