"""Virtual-noise information matrices, Taylor cuts and sensitivity values.

A design measure ``xi`` puts weight ``0 <= xi_i <= 1/n`` (summing to one) on
grid point ``i``.  Observations at point ``i`` are perturbed by independent
virtual noise with variance ``kappa (1/n - xi_i) / xi_i``, so

    M(xi) = F' (C + W(xi))^-1 F.

For numerical work the equivalent form

    M(xi) = F' Z(xi)^-1 diag(xi) F,   Z(xi) = diag(xi) (C - kappa I) + (kappa/n) I,

is used; it stays well defined when some weights are zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve

from .criteria import Criterion, phi_and_grad
from .errors import InfiniteNoise, InvalidAnchor, InvalidKappa, SingularInformation

SUPPORT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class DesignMeasure:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise ValueError("design measure weights must be finite")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"design measure weights must sum to 1, got {w.sum()!r}")
        if w.min() < -1e-12:
            raise ValueError("design measure weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, N: int) -> "DesignMeasure":
        return cls(np.full(N, 1.0 / N))

    @classmethod
    def from_design(cls, design, N: int) -> "DesignMeasure":
        """Embed an exact design: weight ``1/n`` on its points, zero elsewhere."""
        idx = np.asarray(list(design), dtype=int)
        w = np.zeros(N)
        w[idx] = 1.0 / idx.size
        return cls(w)

    @property
    def N(self) -> int:
        return self.weights.size

    def in_xi(self, n: int, tol: float = 1e-12) -> bool:
        return bool(self.weights.max() <= 1.0 / n + tol and self.weights.min() >= -tol)

    def in_xi_epsilon(self, n: int, epsilon: float) -> bool:
        return self.in_xi(n) and bool(self.weights.min() >= epsilon * (1.0 - 1e-9))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights >= SUPPORT_TOL)


def _weights(xi) -> np.ndarray:
    return xi.weights if isinstance(xi, DesignMeasure) else np.asarray(xi, dtype=float)


def virtual_noise_matrix(xi, kappa: float, n: int) -> np.ndarray:
    """Diagonal ``W(xi)`` with ``W_ii = kappa (1/n - xi_i) / xi_i``."""
    w = _weights(xi)
    if np.any(w <= 0.0):
        raise InfiniteNoise("zero weight gives infinite virtual noise; use the restricted-support form")
    d = kappa * (1.0 / n - w) / w
    d[w == 1.0 / n] = 0.0
    return np.diag(d)


def _z_matrix(C, kappa, n, w):
    Z = w[:, None] * (C - kappa * np.eye(C.shape[0]))
    Z[np.diag_indices_from(Z)] += kappa / n
    return Z


def info_matrix_weights(F, C, kappa: float, n: int, w) -> np.ndarray:
    """Z-form ``M(xi)`` on raw arrays, with no check on ``kappa``."""
    w = np.asarray(w, dtype=float)
    lu = lu_factor(_z_matrix(C, kappa, n, w), check_finite=False)
    M = F.T @ lu_solve(lu, w[:, None] * F, check_finite=False)
    return 0.5 * (M + M.T)


def _check_kappa(problem):
    if not problem.kappa < problem.lambda_min:
        raise InvalidKappa(f"kappa={problem.kappa} is not below lambda_min(C)={problem.lambda_min}")


def info_matrix_measure(problem, xi) -> np.ndarray:
    """Virtual-noise information matrix ``M(xi)`` for any ``xi`` in the design set."""
    _check_kappa(problem)
    return info_matrix_weights(problem.F, problem.C, problem.kappa, problem.n, _weights(xi))


def info_matrix_noise_form(problem, xi, support_tol: float = SUPPORT_TOL) -> np.ndarray:
    """``F' (C + W)^-1 F`` restricted to the support of ``xi``.

    Independent of the Z-form; kept as a cross-check.
    """
    w = _weights(xi)
    s = np.flatnonzero(w >= support_tol)
    Cs = problem.C[np.ix_(s, s)]
    Ws = virtual_noise_matrix(w[s], problem.kappa, problem.n)
    Fs = problem.F[s]
    fac = cho_factor(Cs + Ws, lower=True)
    M = Fs.T @ cho_solve(fac, Fs)
    return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class TaylorCut:
    """Affine overestimator ``a + b . xi`` of ``xi -> Phi(M(xi))``, tangent at ``anchor``."""

    anchor: np.ndarray
    a: float
    b: np.ndarray
    phi: float

    def value(self, xi) -> float:
        return float(self.a + self.b @ _weights(xi))


def taylor_cut(problem, criterion, mu) -> TaylorCut:
    """Linearize the criterion at an anchor with all weights at least ``epsilon``.

    With ``H = (C - kappa I) + (kappa/n) diag(1/mu)`` we have ``M(mu) = F' H^-1 F``
    and ``b_i = (kappa/n) mu_i^-2 [H^-1 F grad F' H^-1]_ii``.
    """
    mu = _weights(mu)
    if mu.min() < problem.epsilon * (1.0 - 1e-9) or mu.max() > 1.0 / problem.n + 1e-12:
        raise InvalidAnchor("anchor must satisfy epsilon <= mu_i <= 1/n")
    _check_kappa(problem)
    kappa, n = problem.kappa, problem.n
    H = problem.C - kappa * np.eye(problem.N)
    H[np.diag_indices_from(H)] += (kappa / n) / mu
    try:
        HF = cho_solve(cho_factor(H, lower=True, check_finite=False), problem.F, check_finite=False)
    except LinAlgError as exc:
        raise SingularInformation(f"H(mu) is not positive definite: {exc}") from None
    M = problem.F.T @ HF
    val, G = phi_and_grad(criterion, 0.5 * (M + M.T))
    b = (kappa / n) * np.einsum("ij,jk,ik->i", HF, G, HF) / mu**2
    a = val - float(b @ mu)
    anchor = mu.copy()
    anchor.setflags(write=False)
    b.setflags(write=False)
    return TaylorCut(anchor, a, b, val)


@dataclass(frozen=True, eq=False)
class EquivalenceContext:
    """Sensitivity values ``h(x, xi) = [T G T']_xx`` at a measure.

    ``T = [(C - kappa I) diag(xi) + (kappa/n) I]^-1`` and ``G = F grad F'``.
    Only ``T F`` is stored; the N x N matrices are built on request.
    """

    xi: np.ndarray
    M: np.ndarray
    phi: float
    grad: np.ndarray
    F: np.ndarray
    TF: np.ndarray
    h_values: np.ndarray
    d_value: float
    kappa: float
    n: int
    _lu: tuple

    @cached_property
    def G_matrix(self) -> np.ndarray:
        return self.F @ self.grad @ self.F.T

    @cached_property
    def T_matrix(self) -> np.ndarray:
        return lu_solve(self._lu, np.eye(self.F.shape[0]), trans=1)

    def directional_derivative(self, mu) -> float:
        """``(kappa/n) sum (mu - xi) h``: one-sided derivative towards ``mu``."""
        return float(self.kappa / self.n * np.dot(_weights(mu) - self.xi, self.h_values))


def equivalence_context(problem, criterion, xi) -> EquivalenceContext:
    _check_kappa(problem)
    w = _weights(xi)
    kappa, n = problem.kappa, problem.n
    lu = lu_factor(_z_matrix(problem.C, kappa, n, w), check_finite=False)
    M = problem.F.T @ lu_solve(lu, w[:, None] * problem.F, check_finite=False)
    M = 0.5 * (M + M.T)
    val, G = phi_and_grad(criterion, M)
    # T = Z'^-1, so T F solves Z' X = F
    TF = lu_solve(lu, problem.F, trans=1, check_finite=False)
    h = np.einsum("ij,jk,ik->i", TF, G, TF)
    d = float(n * np.dot(w, h))
    xi_arr = w.copy()
    for a in (xi_arr, h, TF, M, G):
        a.setflags(write=False)
    return EquivalenceContext(xi_arr, M, val, G, problem.F, TF, h, d, kappa, n, lu)


__all__ = [
    "Criterion",
    "DesignMeasure",
    "EquivalenceContext",
    "TaylorCut",
    "equivalence_context",
    "info_matrix_measure",
    "info_matrix_noise_form",
    "info_matrix_weights",
    "taylor_cut",
    "virtual_noise_matrix",
]
