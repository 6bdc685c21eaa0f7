"""Problem instances: design grids, regression bases, covariance kernels.

A problem is a finite grid of ``N`` candidate points, an ``N x p`` regression
matrix ``F``, an ``N x N`` error covariance ``C``, the design size ``n``, the
virtual-noise constant ``kappa`` and the weight floor ``epsilon`` used by the
cutting-plane solver.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateBasis,
    InvalidEigenvalue,
    InvalidGrid,
    InvalidKappa,
    InvalidMatrix,
    InvalidProblem,
    NotPositiveDefinite,
)

RANK_TOL = 1e-10
DEFAULT_EPSILON = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------- grids


@dataclass(frozen=True, eq=False)
class DesignGrid:
    points: np.ndarray  # (N, d)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise InvalidGrid(f"grid points must be an (N, d) array, got shape {pts.shape}")
        if pts.shape[0] < 2:
            raise InvalidGrid("a design grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise InvalidGrid("grid coordinates must be finite")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise InvalidGrid("grid points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.size

    def to_spec(self) -> dict:
        return {"type": "points", "points": self.points.tolist()}


def linspace_grid(lo: float, hi: float, num: int) -> DesignGrid:
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise InvalidGrid(f"need finite lo < hi, got [{lo}, {hi}]")
    if int(num) < 2:
        raise InvalidGrid("linspace grid needs num >= 2")
    return DesignGrid(np.linspace(lo, hi, int(num))[:, None])


def product_grid(*axes: Sequence[float]) -> DesignGrid:
    """Cartesian product of 1-D axes, first axis varying slowest."""
    pts = np.array(list(itertools.product(*[list(map(float, a)) for a in axes])))
    return DesignGrid(pts)


def explicit_grid(points) -> DesignGrid:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    order = np.lexsort(pts.T[::-1])
    return DesignGrid(pts[order])


def build_grid(spec: Mapping[str, Any]) -> DesignGrid:
    """Build a grid from a JSON-style spec.

    ``{"type": "linspace", "lo": 1, "hi": 2, "num": 101}``,
    ``{"type": "product", "axes": [<linspace spec>, ...]}`` or
    ``{"type": "points", "points": [[...], ...]}``.
    """
    kind = spec.get("type", "linspace")
    if kind == "linspace":
        return linspace_grid(float(spec["lo"]), float(spec["hi"]), int(spec["num"]))
    if kind == "product":
        axes = []
        for ax in spec["axes"]:
            if isinstance(ax, Mapping):
                g = build_grid(ax)
                if g.dim != 1:
                    raise InvalidGrid("product axes must be one-dimensional")
                axes.append(g.points[:, 0])
            else:
                axes.append(ax)
        return product_grid(*axes)
    if kind == "points":
        return explicit_grid(spec["points"])
    raise InvalidGrid(f"unknown grid type {kind!r}")


# ---------------------------------------------------------------- bases


def _need_dim(x: np.ndarray, dim: int, family: str):
    if x.shape[1] != dim:
        raise DegenerateBasis(f"basis family {family!r} needs a {dim}-D grid, got {x.shape[1]}-D")


def _basis_columns(x: np.ndarray, spec: Mapping[str, Any]) -> np.ndarray:
    family = spec.get("family")
    if family == "polynomial":
        _need_dim(x, 1, family)
        powers = spec.get("powers")
        if powers is None:
            powers = range(int(spec["degree"]) + 1)
        return np.column_stack([x[:, 0] ** int(k) for k in powers])
    if family == "shifted_sine":
        # offset + amplitude * sin(omega * x)
        _need_dim(x, 1, family)
        omega = float(spec.get("omega", 2.0 * math.pi))
        return (float(spec.get("offset", 1.0)) + float(spec.get("amplitude", 0.5)) * np.sin(omega * x[:, 0]))[:, None]
    if family == "trigonometric":
        # (sin kx, cos kx) for k in harmonics, axis by axis
        harmonics = spec.get("harmonics", [1, 2])
        cols = []
        for j in range(x.shape[1]):
            for k in harmonics:
                cols.append(np.sin(k * x[:, j]))
                cols.append(np.cos(k * x[:, j]))
        return np.column_stack(cols)
    if family == "linear":
        cols = [np.ones(x.shape[0])] if spec.get("intercept", True) else []
        cols.extend(x[:, j] for j in range(x.shape[1]))
        return np.column_stack(cols)
    raise DegenerateBasis(f"unknown basis family {family!r}")


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    spec: dict
    F: np.ndarray  # (N, p)

    @property
    def p(self) -> int:
        return self.F.shape[1]


def materialize_basis(grid: DesignGrid, spec: Mapping[str, Any]) -> BasisMatrix:
    F = np.asarray(_basis_columns(grid.points, spec), dtype=float)
    if F.ndim != 2 or F.shape[1] < 1:
        raise DegenerateBasis("basis has no columns")
    s = np.linalg.svd(F, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= RANK_TOL * s[0] or F.shape[1] > F.shape[0]:
        raise DegenerateBasis(f"basis matrix is rank deficient (singular values {s[0]:.3g} .. {s[-1]:.3g})")
    return BasisMatrix(dict(spec), _frozen(F))


# ---------------------------------------------------------------- kernels

KERNELS = ("sacks_ylvisaker", "integrated_brownian", "brownian", "scaled_exponential", "l1_exponential")


def kernel_matrix(x: np.ndarray, spec: Mapping[str, Any]) -> np.ndarray:
    """Evaluate a covariance kernel on all pairs of rows of ``x``.

    The result is exactly symmetric; no definiteness check is made here.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    kind = spec.get("kernel")
    if kind in ("sacks_ylvisaker", "integrated_brownian", "brownian"):
        _need_dim(x, 1, kind)
        lo = np.minimum.outer(x[:, 0], x[:, 0])
        hi = np.maximum.outer(x[:, 0], x[:, 0])
        if kind == "sacks_ylvisaker":
            K = lo * lo * hi
        elif kind == "integrated_brownian":
            K = lo * lo * (3.0 * hi - lo) / 6.0
        else:
            K = lo
    elif kind == "scaled_exponential":
        # sigma2 * exp(-||x - x'||_2 / theta); the decaying sign is deliberate
        sigma2 = float(spec.get("sigma2", 1.0))
        theta = float(spec.get("theta", 1.0))
        if sigma2 <= 0 or theta <= 0:
            raise InvalidProblem("scaled_exponential needs sigma2 > 0 and theta > 0")
        diff = x[:, None, :] - x[None, :, :]
        K = sigma2 * np.exp(-np.sqrt(np.sum(diff * diff, axis=-1)) / theta)
    elif kind == "l1_exponential":
        scale = float(spec.get("scale", 1.0))
        sigma2 = float(spec.get("sigma2", 1.0))
        if scale <= 0 or sigma2 <= 0:
            raise InvalidProblem("l1_exponential needs scale > 0 and sigma2 > 0")
        K = sigma2 * np.exp(-np.sum(np.abs(x[:, None, :] - x[None, :, :]), axis=-1) / scale)
    else:
        raise InvalidProblem(f"unknown kernel {kind!r}; expected one of {KERNELS}")
    return 0.5 * (K + K.T)


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    spec: dict
    C: np.ndarray
    lambda_min: float


def materialize_covariance(grid: DesignGrid, spec: Mapping[str, Any]) -> CovarianceModel:
    C = kernel_matrix(grid.points, spec)
    lam = min_eigenvalue(C)
    if not lam > 0.0:
        raise NotPositiveDefinite(f"covariance matrix is not positive definite (lambda_min = {lam:.3g})")
    return CovarianceModel(dict(spec), _frozen(C), lam)


def min_eigenvalue(C) -> float:
    """Smallest eigenvalue of a symmetric matrix (LAPACK ``syevd``)."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {C.shape}")
    scale = np.max(np.abs(C)) if C.size else 0.0
    if np.max(np.abs(C - C.T), initial=0.0) > 1e-12 * max(scale, 1e-300):
        raise InvalidMatrix("matrix is not symmetric")
    return float(np.linalg.eigvalsh(C)[0])


def default_kappa(lambda_min: float) -> float:
    """Round ``lambda_min`` down to two significant digits, strictly below it.

    When ``lambda_min`` already has at most two significant digits the next
    two-digit value below is returned, e.g. ``0.0025 -> 0.0024``.
    """
    if not (isinstance(lambda_min, (int, float)) and math.isfinite(lambda_min)) or lambda_min <= 0:
        raise InvalidEigenvalue(f"lambda_min must be a positive finite number, got {lambda_min!r}")
    d = Decimal(repr(float(lambda_min)))
    e = d.adjusted() - 1  # unit of the second significant digit
    unit = Decimal(1).scaleb(e)
    k = int(d.scaleb(-e).to_integral_value(rounding="ROUND_FLOOR"))
    if k * unit >= d:
        k -= 1
        if k < 10:
            k, unit = 99, unit.scaleb(-1)
    return float(k * unit)


# ---------------------------------------------------------------- instance


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    grid: DesignGrid
    basis: BasisMatrix
    cov: CovarianceModel
    n: int
    kappa: float
    epsilon: float = DEFAULT_EPSILON
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        N = self.grid.size
        if self.basis.F.shape[0] != N or self.cov.C.shape != (N, N):
            raise InvalidProblem("grid, basis and covariance sizes disagree")
        if not (self.p <= self.n <= N):
            raise InvalidProblem(f"need p <= n <= N, got p={self.p}, n={self.n}, N={N}")
        if not (0.0 < self.kappa < self.cov.lambda_min):
            raise InvalidKappa(
                f"kappa must satisfy 0 < kappa < lambda_min(C) = {self.cov.lambda_min:.6g}, got {self.kappa!r}"
            )
        if not (0.0 < self.epsilon <= 1.0 / N):
            raise InvalidProblem(f"epsilon must lie in (0, 1/N] = (0, {1.0 / N:.3g}], got {self.epsilon!r}")

    @property
    def F(self) -> np.ndarray:
        return self.basis.F

    @property
    def C(self) -> np.ndarray:
        return self.cov.C

    @property
    def N(self) -> int:
        return self.grid.size

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def lambda_min(self) -> float:
        return self.cov.lambda_min

    def with_n(self, n: int) -> "ProblemInstance":
        return ProblemInstance(self.grid, self.basis, self.cov, int(n), self.kappa, self.epsilon, self.name, self.meta)

    def to_spec(self) -> dict:
        return {
            "schema_version": 1,
            "grid": self.meta.get("grid_spec", self.grid.to_spec()),
            "basis": self.basis.spec,
            "kernel": self.cov.spec,
            "n": self.n,
            "kappa": self.kappa,
            "epsilon": self.epsilon,
        }


def make_problem(grid, basis, kernel, n, kappa="auto", epsilon=DEFAULT_EPSILON, name="") -> ProblemInstance:
    """Assemble and validate an instance.

    ``grid`` may be a ``DesignGrid`` or a grid spec; ``basis`` and ``kernel``
    are spec mappings.  ``kappa="auto"`` applies :func:`default_kappa` to
    ``lambda_min(C)``.
    """
    grid_spec = None
    if not isinstance(grid, DesignGrid):
        grid_spec = dict(grid)
        grid = build_grid(grid)
    B = materialize_basis(grid, basis)
    cov = materialize_covariance(grid, kernel)
    if kappa is None or kappa == "auto":
        kappa = default_kappa(cov.lambda_min)
    meta = {"grid_spec": grid_spec} if grid_spec else {}
    if cov.spec.get("kernel") == "scaled_exponential":
        meta["kernel_sign"] = "exponent taken as -||x - x'||_2 / theta (decaying kernel)"
    return ProblemInstance(grid, B, cov, int(n), float(kappa), float(epsilon), name, meta)


def problem_from_spec(spec: Mapping[str, Any], **overrides) -> ProblemInstance:
    """Build an instance from the JSON problem schema.

    ``{"grid": {...}, "basis": {...}, "kernel": {...}, "n": int,
    "kappa": number | "auto", "epsilon": number}``; keyword overrides win.
    """
    s = dict(spec)
    s.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in ("grid", "basis", "kernel", "n") if k not in s]
    if missing:
        raise InvalidProblem(f"problem spec is missing {missing}")
    return make_problem(
        s["grid"], s["basis"], s["kernel"], int(s["n"]),
        kappa=s.get("kappa", "auto"), epsilon=float(s.get("epsilon", DEFAULT_EPSILON)), name=s.get("name", ""),
    )


def load_problem(path, **overrides) -> ProblemInstance:
    with open(Path(path), encoding="utf-8") as fh:
        spec = json.load(fh)
    if "problem" in spec:
        spec = spec["problem"]
    return problem_from_spec(spec, **overrides)
