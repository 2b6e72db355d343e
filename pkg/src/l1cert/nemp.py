"""Non-Euclidean matching pursuit with a certified error sequence.

Given a contrast ``H`` with ``|[I - H^T A]_ij| <= gamma_bar`` and
``nu(H) = omega``, the iteration is::

    v_0 = 0,  alpha_0 = (||H^T y||_{s,1} + s omega + upsilon) / (1 - s gamma_bar)
    u = H^T (y - A v_{k-1})
    v_k = v_{k-1} + soft_threshold(u, gamma_bar * alpha_{k-1} + omega)
    alpha_k = 2 s gamma_bar alpha_{k-1} + 2 s omega + upsilon

On the good noise event, ``||v_k - x||_1 <= alpha_k`` for every ``k`` and
signals with ``||x - x^s||_1 <= upsilon``.  When ``2 s gamma_bar < 1`` the
sequence contracts geometrically to
``alpha_inf = (2 s omega + upsilon) / (1 - 2 s gamma_bar)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import P_GRID, BoundRequest, nemp_alpha_inf, risk_nemp
from .errors import DimensionError, NotCertifiableError, ParameterError
from .model import SensingMatrix, norm_sp
from .recovery import soft_threshold
from .synthesis import ContrastCertificate

ROUNDOFF = 1e-12

__all__ = ["NempConfig", "NempState", "nemp_init", "nemp_step", "nemp_run", "write_trace"]


@dataclass(frozen=True)
class NempConfig:
    """Inputs of the pursuit.

    ``gamma_bar`` and ``omega`` are read from the certificate.  If a stored
    residual exceeds ``cert.gamma_bar`` by more than floating-point noise
    (``ROUNDOFF``), the level is raised to the largest residual so that the
    entrywise bound on ``I - H^T A`` holds for the stored matrix.
    """

    A: SensingMatrix
    cert: ContrastCertificate
    s: int
    upsilon: float = 0.0
    max_iters: int | None = None
    alpha_rel_tol: float = 1e-6

    def __post_init__(self):
        if self.cert.H.shape != self.A.entries.shape:
            raise DimensionError("certificate does not match the sensing matrix")
        if int(self.s) < 1:
            raise ParameterError("s must be >= 1")
        if not self.upsilon >= 0:
            raise ParameterError("upsilon must be >= 0")
        if self.s * self.gamma_bar >= 1.0:
            raise NotCertifiableError(f"s * gamma_bar = {self.s * self.gamma_bar:.6g} >= 1")

    @property
    def gamma_bar(self) -> float:
        g = float(self.cert.gamma_bar)
        r = float(self.cert.residuals.max(initial=0.0))
        return g if r <= g + ROUNDOFF else r

    @property
    def omega(self) -> float:
        return float(self.cert.omega_star)

    @property
    def contractive(self) -> bool:
        return 2 * self.s * self.gamma_bar < 1.0

    @property
    def alpha_inf(self) -> float:
        if not self.contractive:
            return math.inf
        return nemp_alpha_inf(self.s, self.gamma_bar, self.omega, self.upsilon)


@dataclass(frozen=True)
class NempState:
    v: np.ndarray
    alpha: float
    k: int
    trace: tuple = field(default_factory=tuple)


def nemp_init(y, config: NempConfig) -> NempState:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != config.A.m:
        raise DimensionError("observation length does not match the sensing matrix")
    s, g = config.s, config.gamma_bar
    head_l1 = norm_sp(config.cert.H.T @ y, s, 1)
    alpha0 = (head_l1 + s * config.omega + config.upsilon) / (1.0 - s * g)
    return NempState(np.zeros(config.A.n), alpha0, 0, ((0, alpha0, 0.0),))


def nemp_step(state: NempState, y, config: NempConfig) -> NempState:
    y = np.asarray(y, dtype=float).ravel()
    H = config.cert.H
    u = H.T @ (y - config.A.entries @ state.v)
    delta = soft_threshold(u, config.gamma_bar * state.alpha + config.omega)
    s = config.s
    alpha = 2.0 * s * config.gamma_bar * state.alpha + 2.0 * s * config.omega + config.upsilon
    k = state.k + 1
    return NempState(state.v + delta, alpha, k, state.trace + ((k, alpha, float(np.abs(delta).sum())),))


def _default_max_iters(config: NempConfig, alpha0: float) -> int:
    if not config.contractive:
        return 100
    rate = 2 * config.s * config.gamma_bar
    a_inf = config.alpha_inf
    excess = (alpha0 - a_inf) / max(a_inf, 1e-300)
    if rate == 0.0 or excess <= config.alpha_rel_tol:
        return 10
    k = math.ceil(math.log(excess / config.alpha_rel_tol) / -math.log(rate))
    return int(min(10_000, 10 * max(1, k)))


def nemp_run(y, config: NempConfig):
    """Iterate until ``(alpha_k - alpha_inf) / alpha_inf <= alpha_rel_tol`` or ``max_iters``.

    At least one step is always taken.

    Returns
    -------
    x_hat : ndarray
    trace : tuple of (k, alpha_k, ||v_k - v_{k-1}||_1)
    certified : dict
        ``{"1", "2", "inf"}`` bound values at the final iteration, plus
        ``alpha``, ``t``, ``alpha0`` and ``regime`` (``"contractive"`` or
        ``"non-contractive"``; in the latter case the bound is
        ``s^{1/p-1} alpha_t`` and does not shrink with ``t``).
    """
    state = nemp_init(y, config)
    alpha0 = state.alpha
    max_iters = config.max_iters if config.max_iters is not None else _default_max_iters(config, alpha0)
    a_inf = config.alpha_inf
    while True:
        state = nemp_step(state, y, config)
        if state.k >= max_iters:
            break
        if config.contractive and (state.alpha - a_inf) / max(a_inf, 1e-300) <= config.alpha_rel_tol:
            break
    s = config.s
    certified = {"alpha": state.alpha, "t": state.k, "alpha0": alpha0}
    for p in P_GRID:
        key = "inf" if math.isinf(p) else str(int(p))
        if config.contractive:
            req = BoundRequest("nemp", s, p, config.upsilon, nu_H=config.omega, gamma_bar=config.gamma_bar,
                               t=state.k, alpha0=alpha0)
            certified[key] = risk_nemp(req)
        else:
            certified[key] = (1.0 if math.isinf(p) else s ** (1.0 / p)) / s * state.alpha
    certified["regime"] = "contractive" if config.contractive else "non-contractive"
    return state.v, state.trace, certified


def write_trace(path, trace) -> None:
    """Write ``k,alpha,l1_change`` rows (with header) to ``path``."""
    lines = ["k,alpha,l1_change"] + [f"{k},{a!r},{c!r}" for k, a, c in trace]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
