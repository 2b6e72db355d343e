"""Experimental setups and seeded Monte Carlo campaigns.

Setups
------
hadamard
    ``m`` rows sampled from the ``2^k x 2^k`` Sylvester-Hadamard matrix, the
    first sampled row multiplied by ``suppress_factor``; no nuisance.
gaussian
    ``m x n`` matrix with independent standard normal entries and unit
    columns.  Signal-side nuisance ``V(L) = {v : |v_{i+1} - 2 v_i + v_{i-1}| <= L,
    v_1 = v_2 = 0}``, written as the box image ``v = S d``, ``||d||_inf <= L``.
conv
    2-D convolution on a 16 x 16 grid with a 15 x 15 kernel, restricted to
    the rows ``1 <= j <= 15`` (240 x 256).  Signal-side nuisance: zero-mean
    ``u`` with ``|[D^2 u]_ij| <= L`` for the periodic 5-point Laplacian ``D``.

Campaign protocol
-----------------
For each cell ``(s, sigma, L)`` and replicate ``r`` an independent stream
``SeedSequence(seed, spawn_key=(cell, r, j))`` drives the signal (``j=0``),
the nuisance (``j=1``) and the Gaussian noise (``j=2``).  Supports are
uniform without replacement, signs uniform, magnitudes equal with
``||x||_1 = signal_l1`` (default ``5 s``).  Nuisances are uniform in the box
coordinates.  Replicates run concurrently but results are assembled in a
fixed order, so reports do not depend on the thread count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from ._parallel import pmap
from .bounds import BoundRequest, risk_dantzig, risk_lasso, risk_penalized, risk_regular
from .errors import L1CertError, NotCertifiableError
from .model import NoiseModel, NuNormParams, SensingMatrix, UncertaintySet, make_rng, observe
from .nemp import NempConfig, nemp_run
from .recovery import (lasso_auto_penalty, lasso_ideal_sweep, recover_dantzig, recover_lasso,
                       recover_penalized, recover_regular)
from .synthesis import gamma_star, omega_star, select_gamma_bar

__all__ = [
    "sylvester_hadamard",
    "build_hadamard_sensing",
    "build_gaussian_setup",
    "build_convolution_setup",
    "second_difference_map",
    "periodic_laplacian",
    "default_kernel",
    "gaussian_bump",
    "convolution_matrix",
    "observation_set",
    "draw_signal",
    "draw_nuisance",
    "ExperimentConfig",
    "RiskReport",
    "run_campaign",
    "write_report",
    "PRESETS",
]

METHODS = ("regular", "penalized", "dantzig", "lasso", "lasso_ideal", "nemp")
CONTRAST_METHODS = ("regular", "penalized", "nemp")
P_KEYS = ("1", "2", "inf")


# --- setups -----------------------------------------------------------------

def sylvester_hadamard(k: int) -> np.ndarray:
    """``H_0 = [1]``, ``H_{p+1} = [[H_p, H_p], [H_p, -H_p]]``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    H = np.ones((1, 1), dtype=np.int64)
    for _ in range(k):
        H = np.block([[H, H], [H, -H]])
    return H


def build_hadamard_sensing(k: int = 7, m: int = 120, suppress_factor: float = 1e-3, seed=0) -> SensingMatrix:
    """Rows of the Sylvester-Hadamard matrix, the first sampled row suppressed.

    Rows are sampled without replacement from a seeded generator and kept in
    increasing order; the first of them is multiplied by ``suppress_factor``.
    """
    n = 2 ** k
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= 2^k = {n}, got m = {m}")
    rng = make_rng(seed)
    rows = np.sort(rng.choice(n, size=m, replace=False))
    A = sylvester_hadamard(k)[rows].astype(float)
    A[0] *= suppress_factor
    return SensingMatrix(A, label=f"hadamard(k={k}, m={m}, suppress={suppress_factor:g})",
                         hadamard_rows=tuple(int(r) for r in rows))


def second_difference_map(n: int) -> np.ndarray:
    """Matrix ``S`` (n x (n-2)) with ``v = S d`` solving
    ``v_{i+1} - 2 v_i + v_{i-1} = d_{i-1}``, ``v_1 = v_2 = 0`` (1-based)."""
    if n < 3:
        raise ValueError("n must be >= 3")
    j = np.arange(n)[:, None]
    l = np.arange(n - 2)[None, :]
    return np.maximum(j - 1 - l, 0).astype(float)


def build_gaussian_setup(n: int = 256, m: int = 161, L: float = 0.0, seed=0):
    """Normalized Gaussian sensing matrix and the smooth-background nuisance set.

    Returns
    -------
    A : SensingMatrix
    V : UncertaintySet
        ``BoxImage(S, L)`` in ``R^n`` (signal side).
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    rng = make_rng(seed)
    G = rng.standard_normal((m, n))
    G /= np.linalg.norm(G, axis=0)
    A = SensingMatrix(G, label=f"gaussian(m={m}, n={n})")
    return A, UncertaintySet.box_image(second_difference_map(n), L)


GRID = 16
KERNEL_HALF = 7


def periodic_laplacian(size: int = GRID) -> np.ndarray:
    """``[D u]_ij = (u_{i,j-1} + u_{i-1,j} + u_{i,j+1} + u_{i+1,j} - 4 u_ij) / 4``, indices mod ``size``."""
    N = size * size
    D = np.zeros((N, N))
    for i in range(size):
        for j in range(size):
            r = i * size + j
            D[r, r] = -1.0
            for a, b in ((i, j - 1), (i - 1, j), (i, j + 1), (i + 1, j)):
                D[r, (a % size) * size + (b % size)] += 0.25
    return D


KERNEL_WIDTH = 2.0
KERNEL_SEED = 2024
KERNEL_DOC = ("Gaussian envelope exp(-(a^2 + b^2) / (2 * 2.0^2)) on offsets -7..7 times fixed N(0, 1) "
              "weights (numpy PCG64, seed 2024), normalized to unit l1 norm")


def gaussian_bump(width: float) -> np.ndarray:
    """``exp(-(a^2 + b^2) / (2 width^2))`` on offsets ``-7..7``, unit sum."""
    a = np.arange(-KERNEL_HALF, KERNEL_HALF + 1, dtype=float)
    K = np.exp(-(a[:, None] ** 2 + a[None, :] ** 2) / (2.0 * width ** 2))
    return K / K.sum()


def default_kernel() -> np.ndarray:
    """Default 15 x 15 kernel: a Gaussian envelope with fixed random weights.

    A plain smooth bump makes the boundary columns (``j = 0``, seen only
    through their neighbours) nearly indistinguishable, and ``gamma_*`` stays
    above 1/4 for every width tried; the random weights bring it to about
    0.144, so ``s = 2`` is certifiable.
    """
    a = np.arange(-KERNEL_HALF, KERNEL_HALF + 1, dtype=float)
    env = np.exp(-(a[:, None] ** 2 + a[None, :] ** 2) / (2.0 * KERNEL_WIDTH ** 2))
    K = np.random.Generator(np.random.PCG64(KERNEL_SEED)).standard_normal(env.shape) * env
    return K / np.abs(K).sum()


def convolution_matrix(kernel) -> np.ndarray:
    """240 x 256 matrix of ``x -> (K * x)`` restricted to ``{(i, j): 1 <= j <= 15}``.

    ``A[(i, j), (k, l)] = K[i - k, j - l]`` (zero outside the kernel support),
    rows and columns ordered row-major in ``(i, j)``.
    """
    K = np.asarray(kernel, dtype=float)
    w = 2 * KERNEL_HALF + 1
    if K.shape != (w, w):
        raise ValueError(f"kernel must be {w} x {w}, got {K.shape}")
    rows = []
    for i in range(GRID):
        for j in range(1, GRID):
            img = np.zeros((GRID, GRID))
            for k in range(max(0, i - KERNEL_HALF), min(GRID, i + KERNEL_HALF + 1)):
                for l in range(max(0, j - KERNEL_HALF), min(GRID, j + KERNEL_HALF + 1)):
                    img[k, l] = K[i - k + KERNEL_HALF, j - l + KERNEL_HALF]
            rows.append(img.ravel())
    return np.array(rows)


def build_convolution_setup(L: float = 0.0, kernel=None, seed=None, exact: bool = False):
    """Convolution sensing matrix and the zero-mean bounded-curvature nuisance.

    With ``exact=False`` (default) the nuisance is the box image
    ``{(D^2)^+ w : ||w||_inf <= L}``.  Since ``(D^2)^+ w = (D^2)^+ (w - mean(w))``
    this contains the true set and is contained in its 2x dilation.  With
    ``exact=True`` the polytope ``{(D^2)^+ w : ||w||_inf <= L, sum(w) = 0}`` is
    returned instead, which is the set itself.

    ``seed`` is accepted for interface uniformity; the setup is deterministic.
    """
    K = default_kernel() if kernel is None else np.asarray(kernel, dtype=float)
    A = SensingMatrix(convolution_matrix(K), label="convolution(16x16 -> 16x15)")
    D = periodic_laplacian()
    P = np.linalg.pinv(D @ D)
    N = GRID * GRID
    if exact:
        I = np.eye(N)
        V = UncertaintySet.polytope(np.vstack([I, -I]), np.full(2 * N, float(L)), E=np.ones((1, N)), M=P)
    else:
        V = UncertaintySet.box_image(P, L)
    return A, V


def observation_set(A: SensingMatrix, V: UncertaintySet) -> UncertaintySet:
    """``U = A V`` for a signal-side set ``V``."""
    if V.variant == "zero":
        return UncertaintySet.zero(A.m)
    if V.variant == "box_image":
        return UncertaintySet.box_image(A.entries @ V.M, V.L)
    return UncertaintySet.polytope(V.C, V.c, V.E, A.entries @ V.M)


# --- random draws ---------------------------------------------------------------

def draw_signal(rng: np.random.Generator, n: int, s: int, l1: float) -> np.ndarray:
    x = np.zeros(n)
    support = rng.choice(n, size=s, replace=False)
    signs = rng.choice(np.array([-1.0, 1.0]), size=s)
    x[support] = signs * (l1 / s)
    return x


def draw_nuisance(rng: np.random.Generator, V: UncertaintySet | None):
    """Uniform draw in box coordinates; returns ``(v, coords)``.

    For polytopes with a sum-zero equality the box draw is centered and, if
    needed, rescaled back into the box.
    """
    if V is None or V.is_trivial:
        n = V.dim if V is not None else 0
        return np.zeros(n), None
    if V.variant == "box_image":
        d = rng.uniform(-V.L, V.L, size=V.M.shape[1])
        return V.M @ d, d
    k = V.M.shape[1]
    L = float(V.c.max())
    z = rng.uniform(-L, L, size=k)
    if V.E is not None:
        z = z - z.mean()
        peak = np.abs(z).max()
        if peak > L:
            z *= L / peak
    return V.M @ z, z


def _streams(seed: int, cell: int, rep: int):
    return [np.random.SeedSequence(int(seed), spawn_key=(cell, rep, j)) for j in range(3)]


# --- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    setup: str
    n: int
    m: int
    s_list: tuple = (2,)
    sigma_list: tuple = (0.1,)
    L_list: tuple = (0.0,)
    epsilon: float = 0.01
    N_reps: int = 100
    seed: int = 0
    methods: tuple = ("regular", "penalized", "dantzig", "lasso")
    gamma_bar: Any = "auto"
    gamma_plus: float | None = None
    signal_l1: float | None = None
    hadamard_k: int = 7
    suppress_factor: float = 1e-3
    exact_nuisance: bool = False
    lasso_sweep: tuple = (-60, 60)

    def __post_init__(self):
        if self.setup == "conv":
            object.__setattr__(self, "setup", "convolution")
        if self.setup not in ("hadamard", "gaussian", "convolution"):
            raise ValueError(f"unknown setup {self.setup!r}")
        if self.N_reps < 1:
            raise ValueError("N_reps must be >= 1")
        for meth in self.methods:
            if meth not in METHODS:
                raise ValueError(f"unknown method {meth!r}")
        for name in ("s_list", "sigma_list", "L_list", "methods", "lasso_sweep"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.setup == "hadamard":
            if self.n != 2 ** self.hadamard_k:
                raise ValueError("hadamard setup needs n = 2^k")
            if any(L != 0 for L in self.L_list):
                raise ValueError("hadamard setup has no nuisance; use L = 0")
        if self.setup == "convolution" and (self.n, self.m) != (GRID * GRID, GRID * (GRID - 1)):
            raise ValueError("convolution setup is fixed at n = 256, m = 240")
        if self.m > self.n and self.setup == "hadamard":
            raise ValueError("m must not exceed n")
        if isinstance(self.gamma_bar, str) and self.gamma_bar != "auto":
            raise ValueError("gamma_bar must be 'auto' or a number")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


PRESETS = {
    "hadamard": dict(setup="hadamard", n=128, m=120, s_list=(10,), sigma_list=(1e-4, 1e-5, 1e-6),
                     L_list=(0.0,), epsilon=0.01, N_reps=100, methods=("penalized", "lasso", "lasso_ideal"),
                     gamma_bar="auto"),
    "gaussian": dict(setup="gaussian", n=256, m=161, s_list=(2,), sigma_list=(0.1,),
                     L_list=(0.0, 0.01, 0.02, 0.05), epsilon=0.01, N_reps=100,
                     methods=("regular", "penalized", "dantzig", "lasso"), gamma_bar=0.1),
    "conv": dict(setup="convolution", n=256, m=240, s_list=(2,), sigma_list=(0.1,),
                 L_list=(0.0, 0.01, 0.02, 0.05), epsilon=0.01, N_reps=100,
                 methods=("regular", "penalized", "dantzig", "lasso"), gamma_bar=0.2),
}


# --- report --------------------------------------------------------------------------

@dataclass
class RiskReport:
    config: dict
    records: list = field(default_factory=list)
    setup_info: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)

    def to_dict(self):
        return {"version": __version__, "config": self.config, "setup": self.setup_info,
                "protocol": self.protocol, "records": self.records}

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=1, sort_keys=True, allow_nan=True) + "\n"

    def record(self, method: str, s=None, sigma=None, L=None):
        for r in self.records:
            if r["method"] == method and (s is None or r["s"] == s) and (sigma is None or r["sigma"] == sigma) \
                    and (L is None or r["L"] == L):
                return r
        raise KeyError(method)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _stats(errs: list[dict]) -> dict:
    out = {}
    for p in P_KEYS:
        v = np.array([e[p] for e in errs], dtype=float)
        if v.size == 0:
            out[p] = {"mean": None, "median": None, "q90": None}
        else:
            out[p] = {"mean": float(v.mean()), "median": float(np.median(v)), "q90": float(np.quantile(v, 0.9))}
    return out


# --- campaign --------------------------------------------------------------------------

def _build_setup(cfg: ExperimentConfig, L: float):
    if cfg.setup == "hadamard":
        A = build_hadamard_sensing(cfg.hadamard_k, cfg.m, cfg.suppress_factor, cfg.seed)
        return A, None
    if cfg.setup == "gaussian":
        return build_gaussian_setup(cfg.n, cfg.m, L, cfg.seed)
    return build_convolution_setup(L, exact=cfg.exact_nuisance)


def _contrast(cfg, A, params, s, profile, cache, log):
    """Certificate for the cell, or a skip reason."""
    key = (params.noise.sigma, params.uncertainty.to_dict().get("L"), s if cfg.gamma_bar == "auto" else None)
    if key in cache:
        return cache[key]
    try:
        if s * profile.gamma_star > 0.5 - 1e-9:
            raise NotCertifiableError(f"sparsity level not certifiable: s * gamma_star = "
                                      f"{s * profile.gamma_star:.4g} >= 1/2")
        if cfg.gamma_bar == "auto":
            gp = cfg.gamma_plus if cfg.gamma_plus is not None else 0.45 / s
            gp = max(min(gp, 0.5 / s - 1e-9), profile.gamma_star)
            _, cert = select_gamma_bar(A, s, gp, params, profile=profile, threads=1)
        else:
            cert = omega_star(A, float(cfg.gamma_bar), params, s, threads=1, profile=profile)
        out = (cert, None)
    except L1CertError as exc:
        out = (None, str(exc))
    cache[key] = out
    return out


def _run_method(method, y, A, cert, s, noise, V, x, cfg, kappa):
    """Return ``(x_hat, bound_by_p or None)``."""
    if method == "regular":
        r = recover_regular(y, A, cert)
        return r.x_hat, None
    if method == "penalized":
        r = recover_penalized(y, A, cert, s=s)
        return r.x_hat, None
    if method == "dantzig":
        r = recover_dantzig(y, A, "auto", nuisance=V, noise=noise)
        return r.x_hat, None
    if method == "lasso":
        r = recover_lasso(y, A, "auto", nuisance=V, kappa=kappa, noise=noise)
        return r.x_hat, None
    if method == "lasso_ideal":
        base = lasso_auto_penalty(kappa, A, noise)
        lo, hi = cfg.lasso_sweep
        r, _ = lasso_ideal_sweep(y, A, x, base, range(lo, hi + 1), p="1", nuisance=V)
        return r.x_hat, None
    if method == "nemp":
        xh, _, cb = nemp_run(y, NempConfig(A, cert.with_s(s), s))
        return xh, {p: cb[p] for p in P_KEYS}
    raise ValueError(method)


def _theory(method, cert, s, noise, A, V):
    """Bound per p (None where no bound applies)."""
    if cert is None or not cert.admissible:
        return None
    out = {}
    for p, key in zip((1.0, 2.0, math.inf), P_KEYS):
        if method == "regular":
            req = BoundRequest("regular", s, p, 0.0, kappa=cert.kappa, rho_hat=float(cert.nu_cols.max()),
                               nu_H=cert.omega_star)
            out[key] = risk_regular(req)
        elif method == "penalized":
            out[key] = risk_penalized(BoundRequest("penalized", s, p, 0.0, kappa=cert.kappa, nu_H=cert.omega_star))
        elif method in ("dantzig", "lasso") and (V is None or V.is_trivial) and noise.sigma > 0:
            lam = float(np.linalg.norm(cert.H, axis=0).max())
            req = BoundRequest(method, s, p, 0.0, kappa=cert.kappa, lambda_hat=lam, sigma=noise.sigma,
                               beta=float(A.col_norms.max()), epsilon=noise.epsilon, n=A.n)
            out[key] = risk_dantzig(req) if method == "dantzig" else risk_lasso(req)
        else:
            return None
    return out


def run_campaign(cfg: ExperimentConfig, threads: int | None = None, log=None) -> RiskReport:
    """Run every (cell, method, replicate) and aggregate errors and coverage.

    Contrast-based methods (regular, penalized, nemp) need a certificate; if
    the sparsity level cannot be certified they are skipped with the reason
    recorded.  Lasso with the automatic penalty needs ``kappa`` and uses the
    certificate's value; without one it is skipped as well.
    """
    report = RiskReport(config=_jsonable(cfg.to_dict()))
    report.protocol = {
        "signal": "support uniform without replacement, signs uniform +-1, equal magnitudes, "
                  "||x||_1 = signal_l1 (default 5 s)",
        "nuisance": "uniform in box coordinates (centered and rescaled for sum-zero polytopes)",
        "rng": "numpy PCG64, SeedSequence(seed, spawn_key=(cell, rep, stream)), ziggurat normals",
    }
    if cfg.setup == "convolution":
        report.protocol["kernel"] = KERNEL_DOC
    cells = list(product(cfg.s_list, cfg.sigma_list, cfg.L_list))
    setups = {}
    profile = None
    cert_cache: dict = {}
    for cell_idx, (s, sigma, L) in enumerate(cells):
        if L not in setups:
            setups[L] = _build_setup(cfg, L)
        A, V = setups[L]
        if profile is None:
            profile = gamma_star(A, threads=threads)
            report.setup_info = {"label": A.label, "m": A.m, "n": A.n, "a_hash": A.content_hash(),
                                 "gamma_star": profile.gamma_star, "max_certified_s": profile.max_certified_s}
        noise = NoiseModel(sigma, cfg.epsilon)
        U = observation_set(A, V) if V is not None else UncertaintySet.zero(A.m)
        params = NuNormParams(U, noise, A.n)
        cert, skip = _contrast(cfg, A, params, s, profile, cert_cache, log)
        l1 = cfg.signal_l1 if cfg.signal_l1 is not None else 5.0 * s
        kappa = cert.kappa if cert is not None else None
        Vr = V if (V is not None and not V.is_trivial) else None

        def replicate(rep):
            ss_x, ss_v, ss_xi = _streams(cfg.seed, cell_idx, rep)
            x = draw_signal(make_rng(ss_x), A.n, s, l1)
            v, _ = draw_nuisance(make_rng(ss_v), V)
            xv = x + v if V is not None else x
            y = observe(A, xv, None, noise, ss_xi)
            out = {}
            for method in cfg.methods:
                needs_cert = method in CONTRAST_METHODS or method in ("lasso", "lasso_ideal")
                if needs_cert and cert is None:
                    out[method] = ("skipped", skip)
                    continue
                try:
                    xh, bnd = _run_method(method, y, A, cert, s, noise, Vr, x, cfg, kappa)
                    d = xh - x
                    err = {"1": float(np.abs(d).sum()), "2": float(np.linalg.norm(d)),
                           "inf": float(np.abs(d).max())}
                    out[method] = ("ok", err, bnd)
                except L1CertError as exc:
                    out[method] = ("failed", str(exc))
            return out

        results = pmap(replicate, range(cfg.N_reps), threads)
        for method in cfg.methods:
            rows = [r[method] for r in results]
            rec = {"method": method, "s": s, "sigma": sigma, "L": L, "N": cfg.N_reps, "cell": cell_idx, "seed": cfg.seed,
                   "signal_l1": l1}
            if rows and rows[0][0] == "skipped":
                rec.update({"skipped": True, "reason": rows[0][1]})
                report.records.append(rec)
                continue
            ok = [r for r in rows if r[0] == "ok"]
            fails = [r[1] for r in rows if r[0] == "failed"]
            errs = [r[1] for r in ok]
            rec["errors"] = _stats(errs)
            rec["failures"] = len(fails)
            rec["degraded"] = len(fails) > 0.05 * cfg.N_reps
            if fails:
                rec["failure_messages"] = sorted(set(fails))[:5]
            if cert is not None:
                rec["certificate"] = {"gamma_bar": cert.gamma_bar, "kappa": cert.kappa,
                                      "omega_star": cert.omega_star}
            if method == "nemp":
                bounds = [r[2] for r in ok]
                rec["bound"] = {p: float(np.median([b[p] for b in bounds])) if bounds else None for p in P_KEYS}
                rec["coverage"] = {p: (float(np.mean([e[p] <= b[p] for e, b in zip(errs, bounds)]))
                                       if bounds else None) for p in P_KEYS}
            else:
                th = _theory(method, cert, s, noise, A, V)
                rec["bound"] = th
                if th is not None:
                    rec["coverage"] = {p: float(np.mean([e[p] <= th[p] for e in errs])) if errs else None
                                       for p in P_KEYS}
            report.records.append(rec)
    return report


def _figure_csvs(report: RiskReport) -> dict[str, str]:
    """One CSV per swept axis: columns s, sigma, L, then <method>_mean_l<p>."""
    cfg = report.config
    axes = [a for a, key in (("s", "s_list"), ("sigma", "sigma_list"), ("L", "L_list")) if len(cfg[key]) > 1]
    if not axes:
        axes = ["sigma"]
    methods = list(cfg["methods"])
    out = {}
    for axis in axes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["s", "sigma", "L"] + [f"{mth}_mean_l{p}" for mth in methods for p in P_KEYS]
        w.writerow(header)
        keys = sorted({(r["s"], r["sigma"], r["L"]) for r in report.records})
        for s, sigma, L in keys:
            row = [s, repr(float(sigma)), repr(float(L))]
            for mth in methods:
                rec = report.record(mth, s, sigma, L)
                for p in P_KEYS:
                    val = rec.get("errors", {}).get(p, {}).get("mean") if not rec.get("skipped") else None
                    row.append("" if val is None else repr(val))
            w.writerow(row)
        out[f"errors_vs_{axis}.csv"] = buf.getvalue()
    return out


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_report(report: RiskReport, out_dir) -> list[Path]:
    """Write ``report.json`` and the per-figure CSV files into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "report.json"
    _atomic_write(p, report.to_json())
    written.append(p)
    for name, text in _figure_csvs(report).items():
        p = out / name
        _atomic_write(p, text)
        written.append(p)
    return written
