"""Closed-form risk bounds.

Every evaluator takes a :class:`BoundRequest` and returns an upper bound on
the ``(1 - epsilon)``-confidence worst-case ``l_p`` error of a recovery
routine over signals ``x`` with ``||x - x^s||_1 <= upsilon``.

``p`` is a float in ``[1, inf]``; ``p = math.inf`` is handled explicitly and
``s**(1/p)`` is taken to be 1 there.

Forms provided
--------------
regular
    ``(2s)^{1/p} / (1 - 2 kappa) * (upsilon/s + rho_hat + nu_H)`` for a
    contrast satisfying the sup-norm condition with ``kappa < 1/2``; or the
    two-factor form in terms of per-column ``gamma``, ``rho`` and ``nu``
    vectors when those are given (requires ``||gamma||_{s,1} < 1/2``).
penalized
    ``2 s^{1/p} / (1 - 2 kappa) * (upsilon/s + 2 nu_H)`` (theta = 2), or the
    general-theta form from per-column ``gamma``.
regular_q, penalized_q
    Forms valid for ``p <= q`` under an ``l_q`` variant of the condition.  That
    hypothesis cannot be checked by this package; results carry the flag
    ``"hypothesis not machine-checkable"``.
dantzig, lasso
    Bounds in terms of ``kappa`` and ``lambda_hat`` (largest Euclidean column
    norm of a contrast matrix).
nemp
    Certified bound after ``t`` matching-pursuit iterations.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .errors import BoundVoidError, ParameterError

__all__ = [
    "BoundRequest",
    "risk_regular",
    "risk_penalized",
    "risk_regular_q",
    "risk_penalized_q",
    "risk_dantzig",
    "risk_lasso",
    "risk_nemp",
    "rip_constants",
    "evaluate",
    "nemp_alpha_inf",
    "UNCHECKABLE",
    "P_GRID",
]

UNCHECKABLE = "hypothesis not machine-checkable"
P_GRID = (1.0, 2.0, math.inf)


@dataclass(frozen=True)
class BoundRequest:
    """Inputs of the risk-bound evaluators.

    Only the fields used by the chosen method need to be set.  Vector fields
    (``gamma_vec``, ``rho_vec``, ``nu_vec``) select the per-column forms.
    """

    method: str
    s: int
    p: float = 1.0
    upsilon: float = 0.0
    kappa: float | None = None
    nu_H: float | None = None
    rho_hat: float | None = None
    gamma_vec: Any = None
    rho_vec: Any = None
    nu_vec: Any = None
    theta: float = 2.0
    q: float = math.inf
    lambda_hat: float | None = None
    rho: float | None = None
    varrho: float | None = None
    beta: float | None = None
    sigma: float | None = None
    epsilon: float | None = None
    n: int | None = None
    varkappa: float | None = None
    gamma_bar: float | None = None
    t: int | None = None
    alpha0: float | None = None

    def __post_init__(self):
        p = float(self.p)
        if not (p >= 1.0):
            raise ParameterError(f"p must lie in [1, inf], got {self.p}")
        object.__setattr__(self, "p", p)
        if int(self.s) < 1:
            raise ParameterError("s must be >= 1")
        object.__setattr__(self, "s", int(self.s))
        if not self.upsilon >= 0:
            raise ParameterError("upsilon must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
            elif isinstance(v, float) and math.isinf(v):
                d[k] = "inf"
        return {k: v for k, v in d.items() if v is not None}

    def replace(self, **kw) -> "BoundRequest":
        d = asdict(self)
        d.update(kw)
        return BoundRequest(**d)


def _root(base: float, p: float) -> float:
    """``base ** (1/p)`` with the convention ``base ** 0 = 1`` at ``p = inf``."""
    if math.isinf(p):
        return 1.0
    return base ** (1.0 / p)


def _interp(a: float, b: float, p: float) -> float:
    """``a^{1/p} * b^{(p-1)/p}``."""
    if math.isinf(p):
        return b
    return a ** (1.0 / p) * b ** ((p - 1.0) / p)


def _need(req: BoundRequest, *names):
    out = []
    for nm in names:
        v = getattr(req, nm)
        if v is None:
            raise ParameterError(f"{req.method} bound needs '{nm}'")
        out.append(v)
    return out


def _check_kappa(kappa: float):
    if not kappa < 0.5:
        raise BoundVoidError(f"bound void: kappa = {kappa} >= 1/2")
    if kappa < 0:
        raise ParameterError("kappa must be >= 0")


def _head_sum(v, s):
    v = np.sort(np.abs(np.asarray(v, dtype=float)))[::-1]
    return float(v[:s].sum())


def risk_regular(req: BoundRequest) -> float:
    """Regular recovery.

    Scalar form (``kappa``, ``rho_hat``, ``nu_H``)::

        (2s)^{1/p} / (1 - 2 kappa) * (upsilon/s + rho_hat + nu_H)

    Per-column form (``gamma_vec``, ``rho_vec``, ``nu_vec``), with
    ``g = max gamma``, ``g_s = ||gamma||_{s,1}`` and similarly for rho, nu::

        2 / (1 - 2 g_s) * [upsilon + r_s + n_s]^{1/p}
          * [g upsilon + (1/2 - g_s)(r + nu_H) + g (n_s + r_s)]^{(p-1)/p}
    """
    s, p, ups = req.s, req.p, req.upsilon
    if req.gamma_vec is not None:
        gam, rho, nu = (np.asarray(v, dtype=float) for v in _need(req, "gamma_vec", "rho_vec", "nu_vec"))
        g, g_s = float(gam.max()), _head_sum(gam, s)
        if not g_s < 0.5:
            raise BoundVoidError(f"bound void: ||gamma||_(s,1) = {g_s} >= 1/2")
        r, r_s = float(rho.max()), _head_sum(rho, s)
        nH, n_s = float(nu.max()), _head_sum(nu, s)
        a = ups + r_s + n_s
        b = g * ups + (0.5 - g_s) * (r + nH) + g * (n_s + r_s)
        return 2.0 / (1.0 - 2.0 * g_s) * _interp(a, b, p)
    kappa, rho_hat, nu_H = _need(req, "kappa", "rho_hat", "nu_H")
    _check_kappa(kappa)
    return _root(2.0 * s, p) / (1.0 - 2.0 * kappa) * (ups / s + rho_hat + nu_H)


def risk_penalized(req: BoundRequest) -> float:
    """Penalized recovery.

    Scalar form (theta = 2, ``kappa``, ``nu_H``)::

        2 s^{1/p} / (1 - 2 kappa) * (upsilon/s + 2 nu_H)

    Per-column form (``gamma_vec``, ``nu_H``, any ``theta`` in the window
    ``1/(1 - g_s) < theta < 1/g_s``)::

        P = (2 upsilon + 2 s theta nu_H) / min[theta (1 - g_s) - 1, 1 - theta g_s]
        Q = (1/(s theta) + g) P + 2 nu_H
        bound = P^{1/p} Q^{(p-1)/p}
    """
    s, p, ups = req.s, req.p, req.upsilon
    if req.gamma_vec is not None:
        (nu_H,) = _need(req, "nu_H")
        gam = np.asarray(req.gamma_vec, dtype=float)
        g, g_s = float(gam.max()), _head_sum(gam, s)
        th = float(req.theta)
        if not g_s < 0.5:
            raise BoundVoidError(f"bound void: ||gamma||_(s,1) = {g_s} >= 1/2")
        lo = 1.0 / (1.0 - g_s)
        hi = math.inf if g_s == 0 else 1.0 / g_s
        if not lo < th < hi:
            raise BoundVoidError(f"bound void: theta = {th} outside ({lo}, {hi})")
        D = min(th * (1.0 - g_s) - 1.0, 1.0 - th * g_s)
        P = (2.0 * ups + 2.0 * s * th * nu_H) / D
        Q = (1.0 / (s * th) + g) * P + 2.0 * nu_H
        return _interp(P, Q, p)
    if req.theta != 2.0:
        raise ParameterError("the kappa form of the penalized bound holds for theta = 2 only")
    kappa, nu_H = _need(req, "kappa", "nu_H")
    _check_kappa(kappa)
    return 2.0 * _root(s, p) / (1.0 - 2.0 * kappa) * (ups / s + 2.0 * nu_H)


def _check_q(req):
    if req.p > req.q:
        raise BoundVoidError(f"bound void: p = {req.p} exceeds q = {req.q}")


def risk_regular_q(req: BoundRequest) -> float:
    """``(3s)^{1/p} (rho_hat + nu_H + upsilon/s) / (1 - 2 kappa)`` for ``p <= q``.

    Valid under the ``l_q`` version of the condition, which is not verified
    here (flag :data:`UNCHECKABLE`).
    """
    _check_q(req)
    kappa, rho_hat, nu_H = _need(req, "kappa", "rho_hat", "nu_H")
    _check_kappa(kappa)
    return _root(3.0 * req.s, req.p) * (rho_hat + nu_H + req.upsilon / req.s) / (1.0 - 2.0 * kappa)


def risk_penalized_q(req: BoundRequest) -> float:
    """``3 s^{1/p} (2 nu_H + upsilon/s) / (1 - 2 kappa)`` for ``p <= q`` (theta = 2)."""
    _check_q(req)
    kappa, nu_H = _need(req, "kappa", "nu_H")
    _check_kappa(kappa)
    return 3.0 * _root(req.s, req.p) * (2.0 * nu_H + req.upsilon / req.s) / (1.0 - 2.0 * kappa)


def _varrho(req: BoundRequest) -> float:
    """``sigma * beta * sqrt(2 ln(n/eps))`` unless given directly."""
    if req.varrho is not None:
        return float(req.varrho)
    sigma, beta, eps, n = _need(req, "sigma", "beta", "epsilon", "n")
    return sigma * beta * math.sqrt(2.0 * math.log(n / eps))


def risk_dantzig(req: BoundRequest) -> float:
    """``2 (3s)^{1/p} / (1 - 2 kappa) * [2 s lambda^2 (rho + varrho) / (1 - 2 kappa) + upsilon/s]``.

    ``rho`` defaults to ``varrho`` (the smallest admissible level).
    """
    _check_q(req)
    kappa, lam = _need(req, "kappa", "lambda_hat")
    _check_kappa(kappa)
    vr = _varrho(req)
    rho = vr if req.rho is None else float(req.rho)
    if rho < vr:
        raise BoundVoidError(f"bound void: rho = {rho} below varrho = {vr}")
    s = req.s
    d = 1.0 - 2.0 * kappa
    return 2.0 * _root(3.0 * s, req.p) / d * (2.0 * s * lam ** 2 * (rho + vr) / d + req.upsilon / s)


def risk_lasso(req: BoundRequest) -> float:
    """``4 s^{1/p} / (1 - 2 kappa - 2 varrho varkappa) * [2 s lambda^2 / varkappa + upsilon/s]``.

    ``varkappa=None`` selects the automatic penalty
    ``(1 - 2 kappa) / (4 varrho)``, for which the bound reads
    ``8 s^{1/p} / (1 - 2 kappa) * [8 s varrho lambda^2 / (1 - 2 kappa) + upsilon/s]``.
    """
    _check_q(req)
    kappa, lam = _need(req, "kappa", "lambda_hat")
    _check_kappa(kappa)
    vr = _varrho(req)
    vk = (1.0 - 2.0 * kappa) / (4.0 * vr) if req.varkappa is None else float(req.varkappa)
    if not vk > 0:
        raise ParameterError("varkappa must be > 0")
    d = 1.0 - 2.0 * kappa - 2.0 * vr * vk
    if not d > 0:
        raise BoundVoidError(f"bound void: 2 kappa + 2 varrho varkappa = {1.0 - d} >= 1")
    s = req.s
    return 4.0 * _root(s, req.p) / d * (2.0 * s * lam ** 2 / vk + req.upsilon / s)


def rip_constants(delta: float, k: int) -> tuple[float, float]:
    """Constants implied by the restricted isometry property RIP(delta, k).

    Returns ``gamma = sqrt(2) delta / ((1 - delta) sqrt(k - 1))`` and the
    noise factor ``1 / sqrt(1 - delta)``.  The property itself is an input,
    not something this package verifies.
    """
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    if int(k) != k or k <= 1:
        raise ParameterError("k must be an integer > 1")
    gamma = math.sqrt(2.0) * delta / ((1.0 - delta) * math.sqrt(k - 1))
    return gamma, 1.0 / math.sqrt(1.0 - delta)


def nemp_alpha_inf(s: int, gamma_bar: float, omega: float, upsilon: float) -> float:
    """Fixed point ``(2 s omega + upsilon) / (1 - 2 s gamma_bar)`` of the alpha recursion."""
    return (2.0 * s * omega + upsilon) / (1.0 - 2.0 * s * gamma_bar)


def risk_nemp(req: BoundRequest) -> float:
    """``s^{1/p - 1} [(2 s g)^t (alpha0 - alpha_inf) + alpha_inf]`` after ``t`` iterations.

    ``t = None`` gives the limit ``t -> inf``.
    """
    g, omega = _need(req, "gamma_bar", "nu_H")
    s = req.s
    if not 2.0 * s * g < 1.0:
        raise BoundVoidError(f"bound void: 2 s gamma_bar = {2 * s * g} >= 1 (non-contractive)")
    a_inf = nemp_alpha_inf(s, g, omega, req.upsilon)
    if req.t is None:
        alpha = a_inf
    else:
        (a0,) = _need(req, "alpha0")
        alpha = (2.0 * s * g) ** int(req.t) * (a0 - a_inf) + a_inf
    return _root(s, req.p) / s * alpha


_EVALUATORS = {
    "regular": risk_regular,
    "penalized": risk_penalized,
    "regular_q": risk_regular_q,
    "penalized_q": risk_penalized_q,
    "dantzig": risk_dantzig,
    "lasso": risk_lasso,
    "nemp": risk_nemp,
}


def evaluate(req: BoundRequest) -> dict[str, Any]:
    """Dispatch on ``req.method``; return the value with its inputs and flags."""
    try:
        fn = _EVALUATORS[req.method]
    except KeyError:
        raise ParameterError(f"unknown bound method {req.method!r}") from None
    flags = []
    if req.method in ("regular_q", "penalized_q") or (req.method in ("dantzig", "lasso")
                                                       and not math.isinf(req.q)):
        flags.append(UNCHECKABLE)
    return {"method": req.method, "p": "inf" if math.isinf(req.p) else req.p, "value": fn(req),
            "flags": flags, "inputs": req.to_dict()}
