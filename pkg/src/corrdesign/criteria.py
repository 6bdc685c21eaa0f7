"""Optimality criteria, their gradients and exact-design information."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import IllConditionedCovariance, InvalidDesign, SingularInformation


class Criterion(str, enum.Enum):
    D = "D"  # det(M)^(1/p)
    A = "A"  # 1 / tr(M^-1)

    @classmethod
    def parse(cls, value) -> "Criterion":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidDesign(f"unknown criterion {value!r}; expected 'D' or 'A'") from None


def _chol(M):
    M = np.asarray(M, dtype=float)
    try:
        return cho_factor(M, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SingularInformation(f"information matrix is singular or indefinite: {exc}") from None


def phi(criterion, M) -> float:
    """Criterion value of a positive definite information matrix."""
    criterion = Criterion.parse(criterion)
    M = np.asarray(M, dtype=float)
    p = M.shape[0]
    fac = _chol(M)
    if criterion is Criterion.D:
        logdet = 2.0 * np.sum(np.log(np.diag(fac[0])))
        return float(np.exp(logdet / p))
    Minv = cho_solve(fac, np.eye(p))
    return float(1.0 / np.trace(Minv))


def grad_phi(criterion, M) -> np.ndarray:
    """Matrix gradient of the criterion at ``M`` (symmetric p x p)."""
    return phi_and_grad(criterion, M)[1]


def phi_and_grad(criterion, M) -> tuple[float, np.ndarray]:
    criterion = Criterion.parse(criterion)
    M = np.asarray(M, dtype=float)
    p = M.shape[0]
    fac = _chol(M)
    Minv = cho_solve(fac, np.eye(p))
    Minv = 0.5 * (Minv + Minv.T)
    if criterion is Criterion.D:
        val = float(np.exp(2.0 * np.sum(np.log(np.diag(fac[0]))) / p))
        return val, Minv * (val / p)
    tr = np.trace(Minv)
    G = Minv @ Minv / tr**2
    return float(1.0 / tr), 0.5 * (G + G.T)


def phi_or_zero(criterion, M) -> float:
    """``phi`` with the continuous extension 0 on singular matrices."""
    try:
        return phi(criterion, M)
    except SingularInformation:
        return 0.0


@dataclass(frozen=True)
class ExactDesign:
    """An unreplicated design: strictly increasing grid indices."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidDesign(f"design indices must be strictly increasing, got {idx}")
        if idx and idx[0] < 0:
            raise InvalidDesign("design indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int]) -> "ExactDesign":
        idx = sorted(int(i) for i in indices)
        if len(set(idx)) != len(idx):
            raise InvalidDesign(f"design has repeated points: {idx}")
        return cls(tuple(idx))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def check(self, N: int, n: int | None = None) -> "ExactDesign":
        if self.indices and self.indices[-1] >= N:
            raise InvalidDesign(f"design index {self.indices[-1]} out of range for N={N}")
        if n is not None and len(self.indices) != n:
            raise InvalidDesign(f"design has {len(self.indices)} points, expected {n}")
        return self


def info_matrix_exact(problem, design) -> np.ndarray:
    """``F(T)' C(T)^-1 F(T)`` for an exact design ``T``."""
    if not isinstance(design, ExactDesign):
        design = ExactDesign.of(design)
    design.check(problem.N)
    idx = np.asarray(design.indices, dtype=int)
    CT = problem.C[np.ix_(idx, idx)]
    FT = problem.F[idx]
    try:
        fac = cho_factor(CT, lower=True)
    except LinAlgError:
        cond = np.linalg.cond(CT)
        raise IllConditionedCovariance(
            f"C(T) is not numerically positive definite (condition ~ {cond:.3g})", condition=cond
        ) from None
    M = FT.T @ cho_solve(fac, FT)
    return 0.5 * (M + M.T)


def efficiency(phi_value: float, bound: float) -> float:
    if not bound > 0:
        raise ValueError("bound must be positive")
    return float(phi_value) / float(bound)
