"""Domain types, the nu-norm, observation generation and sparse-vector helpers.

Observation model::

    y = A x + u + sigma * xi,     xi ~ N(0, I_m),  u in U

where ``U`` is a convex, compact set symmetric w.r.t. the origin.  The
nu-norm associated with ``(U, sigma, epsilon)`` is::

    nu(h) = sup_{u in U} u^T h + sigma * sqrt(2 ln(n / epsilon)) * ||h||_2
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .convexkit import LpProblem, polytope_support, solve_lp
from .errors import DimensionError, UnboundedSetError

__all__ = [
    "SensingMatrix",
    "UncertaintySet",
    "NoiseModel",
    "SignalSpec",
    "NuNormParams",
    "support_function",
    "nu_norm",
    "radius_bound",
    "observe",
    "make_rng",
    "sparse_head",
    "norm_sp",
    "read_csv",
    "write_csv",
]


def _frozen(a, ndim=None):
    arr = np.array(a, dtype=float, copy=True)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(1, -1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SensingMatrix:
    """Dense ``m x n`` sensing matrix with cached column norms.

    ``hadamard_rows`` is set only by the Hadamard builder; it records which
    Sylvester-Hadamard rows were sampled, which lets synthesis exploit the
    group structure of the columns.
    """

    entries: np.ndarray
    label: str = ""
    hadamard_rows: tuple[int, ...] | None = None
    col_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = _frozen(self.entries, ndim=2)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionError(f"sensing matrix must be 2-D and non-empty, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("sensing matrix has non-finite entries")
        object.__setattr__(self, "entries", A)
        norms = np.linalg.norm(A, axis=0)
        norms.setflags(write=False)
        object.__setattr__(self, "col_norms", norms)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def T(self) -> np.ndarray:
        return self.entries.T

    def content_hash(self) -> str:
        data = np.ascontiguousarray(self.entries, dtype="<f8")
        h = hashlib.sha256()
        h.update(np.array(data.shape, dtype="<i8").tobytes())
        h.update(data.tobytes())
        return h.hexdigest()

    @classmethod
    def from_csv(cls, path, label: str | None = None) -> "SensingMatrix":
        return cls(read_csv(path, ndim=2), label=label if label is not None else Path(path).name)


@dataclass(frozen=True)
class UncertaintySet:
    """Symmetric convex nuisance set in ``R^dim``.

    Variants
    --------
    zero
        ``{0}``.
    box_image
        ``{M w : ||w||_inf <= L}`` with ``M`` of shape ``(dim, k)``.
    polytope
        ``{M z : C z <= c, E z = 0}``; ``M`` defaults to the identity.  Rows of
        ``(C, c)`` must come in pairs ``(C_j, c_j), (-C_j, c_j)`` so the set is
        symmetric; boundedness is checked with LPs at construction.
    """

    variant: str
    dim: int
    M: np.ndarray | None = None
    L: float = 0.0
    C: np.ndarray | None = None
    c: np.ndarray | None = None
    E: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in ("zero", "box_image", "polytope"):
            raise ValueError(f"unknown uncertainty variant {self.variant!r}")
        if self.dim < 1:
            raise DimensionError("uncertainty set dimension must be positive")
        if self.variant == "box_image":
            M = _frozen(self.M, ndim=2)
            if M.shape[0] != self.dim:
                raise DimensionError(f"box_image map has {M.shape[0]} rows, expected {self.dim}")
            if not self.L >= 0:
                raise ValueError("box_image radius L must be >= 0")
            object.__setattr__(self, "M", M)
            object.__setattr__(self, "L", float(self.L))
        elif self.variant == "polytope":
            self._init_polytope()

    def _init_polytope(self):
        C = _frozen(self.C, ndim=2)
        c = _frozen(self.c).ravel()
        if C.shape[0] != c.shape[0]:
            raise DimensionError("polytope C and c disagree in row count")
        k = C.shape[1]
        E = None if self.E is None or np.size(self.E) == 0 else _frozen(self.E, ndim=2)
        if E is not None and E.shape[1] != k:
            raise DimensionError("polytope E has wrong column count")
        M = np.eye(self.dim) if self.M is None else np.asarray(self.M, dtype=float)
        M = _frozen(M, ndim=2)
        if M.shape != (self.dim, k):
            raise DimensionError(f"polytope map must have shape ({self.dim}, {k}), got {M.shape}")
        if np.any(c < 0):
            raise ValueError("polytope bounds must be nonnegative (set must contain the origin)")
        # symmetry: every row must have its negation with the same bound
        rows = np.hstack([C, c[:, None]])
        neg = np.hstack([-C, c[:, None]])
        scale = max(1.0, float(np.abs(rows).max()))
        for j in range(rows.shape[0]):
            if not np.any(np.all(np.abs(rows - neg[j]) <= 1e-12 * scale, axis=1)):
                raise ValueError(f"polytope is not symmetric: row {j} has no negated partner")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "M", M)
        # boundedness of the parameter polytope
        for j in range(k):
            d = np.zeros(k)
            d[j] = 1.0
            st = solve_lp(LpProblem(c=-d, G=C, g=c, E=E, e=None if E is None else np.zeros(E.shape[0])))
            if st.state == "Unbounded":
                raise UnboundedSetError("uncertainty set unbounded")
            if st.state != "Optimal":
                raise UnboundedSetError(f"polytope support LP failed ({st.state})")

    # constructors -----------------------------------------------------
    @classmethod
    def zero(cls, dim: int) -> "UncertaintySet":
        return cls("zero", int(dim))

    @classmethod
    def box_image(cls, M, L: float) -> "UncertaintySet":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls("box_image", M.shape[0], M=M, L=float(L))

    @classmethod
    def polytope(cls, C, c, E=None, M=None, dim: int | None = None) -> "UncertaintySet":
        C = np.atleast_2d(np.asarray(C, dtype=float))
        if dim is None:
            dim = C.shape[1] if M is None else np.atleast_2d(M).shape[0]
        return cls("polytope", int(dim), M=M, C=C, c=c, E=E)

    @property
    def is_trivial(self) -> bool:
        """True when the set is ``{0}`` (zero variant or a zero-radius box)."""
        return self.variant == "zero" or (self.variant == "box_image" and self.L == 0.0)

    # serialization ----------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        if self.variant == "zero":
            return {"variant": "zero", "dim": self.dim}
        if self.variant == "box_image":
            return {"variant": "box_image", "M": self.M.tolist(), "L": self.L}
        d = {"variant": "polytope", "C": self.C.tolist(), "c": self.c.tolist(),
             "E": None if self.E is None else self.E.tolist()}
        if not np.array_equal(self.M, np.eye(self.dim)):
            d["M"] = self.M.tolist()
        else:
            d["dim"] = self.dim
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UncertaintySet":
        variant = d.get("variant")
        if variant == "zero":
            return cls.zero(int(d["dim"]))
        if variant == "box_image":
            return cls.box_image(d["M"], d["L"])
        if variant == "polytope":
            return cls.polytope(d["C"], d["c"], d.get("E"), d.get("M"), d.get("dim"))
        raise ValueError(f"unknown uncertainty variant {variant!r}")

    @classmethod
    def from_json(cls, path) -> "UncertaintySet":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    epsilon: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class SignalSpec:
    n: int
    s: int
    upsilon: float = 0.0

    def __post_init__(self):
        if not 1 <= self.s <= self.n:
            raise ValueError(f"need 1 <= s <= n, got s={self.s}, n={self.n}")
        if not self.upsilon >= 0:
            raise ValueError("upsilon must be >= 0")


@dataclass(frozen=True)
class NuNormParams:
    """Everything that defines ``nu = nu_{epsilon, sigma, U}`` on ``R^m``."""

    uncertainty: UncertaintySet
    noise: NoiseModel
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def m(self) -> int:
        return self.uncertainty.dim

    @property
    def noise_coef(self) -> float:
        """``sigma * sqrt(2 ln(n / epsilon))``."""
        return self.noise.sigma * math.sqrt(2.0 * math.log(self.n / self.noise.epsilon))

    @property
    def degenerate(self) -> bool:
        """True when nu vanishes identically (sigma = 0 and U = {0})."""
        return self.noise.sigma == 0.0 and self.uncertainty.is_trivial

    def to_dict(self) -> dict[str, Any]:
        return {"uncertainty": self.uncertainty.to_dict(), "sigma": self.noise.sigma,
                "epsilon": self.noise.epsilon, "n": self.n}

    @classmethod
    def from_dict(cls, d) -> "NuNormParams":
        return cls(UncertaintySet.from_dict(d["uncertainty"]), NoiseModel(d["sigma"], d["epsilon"]), int(d["n"]))


def support_function(U: UncertaintySet, g) -> float:
    """``sup_{u in U} u^T g``; closed form except for polytopes (one LP)."""
    g = np.asarray(g, dtype=float).ravel()
    if g.shape[0] != U.dim:
        raise DimensionError(f"direction has length {g.shape[0]}, set lives in R^{U.dim}")
    if U.variant == "zero":
        return 0.0
    if U.variant == "box_image":
        return U.L * float(np.abs(U.M.T @ g).sum())
    st = polytope_support(U, g)
    if st.state == "Unbounded":
        raise UnboundedSetError("uncertainty set unbounded")
    if st.state != "Optimal":
        raise RuntimeError(f"support LP failed: {st.state}")
    return max(0.0, -st.objective)


def nu_norm(params: NuNormParams, h) -> float:
    h = np.asarray(h, dtype=float).ravel()
    return support_function(params.uncertainty, h) + params.noise_coef * float(np.linalg.norm(h))


def radius_bound(U: UncertaintySet) -> float:
    """Upper bound on ``r(U) = max_{u in U} ||u||_2``.

    Uses the bounding box of ``U`` (``2 * dim`` support evaluations, halved by
    symmetry).  Exact for ``{0}`` and for boxes; otherwise conservative,
    since maximizing a convex function over ``U`` is not tractable in general.
    """
    if U.variant == "zero":
        return 0.0
    if U.variant == "box_image":
        half = U.L * np.abs(U.M).sum(axis=1)
        return float(np.linalg.norm(half))
    half = np.array([support_function(U, np.eye(U.dim)[j]) for j in range(U.dim)])
    return float(np.linalg.norm(half))


def make_rng(seed) -> np.random.Generator:
    """Seeded PCG64 generator; Gaussians come from numpy's ziggurat sampler."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _in_uncertainty(U: UncertaintySet, u, w=None, tol=1e-9) -> np.ndarray:
    if U.variant == "zero":
        if u is not None and np.any(np.asarray(u) != 0):
            raise ValueError("nuisance must be zero for the zero uncertainty set")
        return np.zeros(U.dim)
    if U.variant == "box_image":
        if w is None:
            raise ValueError("box_image nuisance must be given through its box coordinates w")
        w = np.asarray(w, dtype=float).ravel()
        if np.abs(w).max(initial=0.0) > U.L * (1 + tol) + tol:
            raise ValueError("box coordinates exceed the radius L")
        return U.M @ w
    # polytope: accept parameter z (as w) or check u by an LP feasibility problem
    if w is not None:
        z = np.asarray(w, dtype=float).ravel()
        if np.any(U.C @ z > U.c + tol) or (U.E is not None and np.abs(U.E @ z).max() > tol):
            raise ValueError("polytope parameter violates the constraints")
        return U.M @ z
    u = np.asarray(u, dtype=float).ravel()
    k = U.M.shape[1]
    Eeq = U.M if U.E is None else np.vstack([U.M, U.E])
    eeq = u if U.E is None else np.concatenate([u, np.zeros(U.E.shape[0])])
    st = solve_lp(LpProblem(c=np.zeros(k), G=U.C, g=U.c, E=Eeq, e=eeq))
    if st.state != "Optimal":
        raise ValueError("nuisance is not a member of the polytope")
    return u


def observe(A: SensingMatrix, x, u, noise: NoiseModel, seed, U: UncertaintySet | None = None,
            w=None) -> np.ndarray:
    """Draw ``y = A x + u + sigma * xi`` with ``xi`` from the seeded generator.

    ``u`` may be ``None`` (no nuisance).  When ``U`` is given, the nuisance is
    validated against it; for box-image sets it must be supplied through its
    box coordinates ``w`` (``u`` is then ignored and recomputed as ``M w``).
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != A.n:
        raise DimensionError("signal length does not match the sensing matrix")
    if U is not None:
        if U.dim != A.m:
            raise DimensionError("uncertainty set dimension does not match m")
        u = _in_uncertainty(U, u, w)
    u = np.zeros(A.m) if u is None else np.asarray(u, dtype=float).ravel()
    if u.shape[0] != A.m:
        raise DimensionError("nuisance length does not match m")
    xi = make_rng(seed).standard_normal(A.m)
    return A.entries @ x + u + noise.sigma * xi


def sparse_head(x, s: int) -> tuple[np.ndarray, float]:
    """Keep the ``s`` largest-magnitude entries; ties go to the smaller index."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.shape[0]
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    order = np.argsort(-np.abs(x), kind="stable")
    head = np.zeros_like(x)
    keep = order[:s]
    head[keep] = x[keep]
    return head, float(np.abs(x - head).sum())


def norm_sp(x, s: int, p: float) -> float:
    """``||x||_{s,p}``: the l_p norm of the s-term head of ``x``."""
    head, _ = sparse_head(x, s)
    if math.isinf(p):
        return float(np.abs(head).max())
    return float(np.linalg.norm(head, ord=p))


def read_csv(path, ndim: int = 1) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    if ndim == 1:
        return arr.ravel()
    return arr


def write_csv(path, arr) -> None:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    np.savetxt(tmp, arr, delimiter=",", fmt="%.17g")
    tmp.replace(path)
