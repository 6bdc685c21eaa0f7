import functools

import numpy as np
import pytest

from corrdesign import Criterion, certify, example, exhaustive, optimize_measure
from corrdesign.problem import (
    CovarianceModel,
    ProblemInstance,
    explicit_grid,
    linspace_grid,
    make_problem,
    materialize_basis,
)


@functools.lru_cache(maxsize=None)
def solved(eid):
    """(problem, criterion, report, certificate) for a built-in example, cached per session."""
    prob, crit = example(eid)
    report = optimize_measure(prob, crit)
    return prob, crit, report, certify(prob, crit, report.final_measure)


@functools.lru_cache(maxsize=None)
def exs(eid):
    prob, crit, _, cert = solved(eid)
    return exhaustive(prob, crit, cap=10**8, bound=cert.bound)


@pytest.fixture(scope="session")
def ex1():
    return solved("1")


@pytest.fixture(scope="session")
def ex2():
    return solved("2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def white_noise_problem(N=21, sigma2=2.0, n=3, degree=2, kappa=None):
    """Polynomial regression on [-1, 1] with uncorrelated errors of variance ``sigma2``."""
    grid = linspace_grid(-1.0, 1.0, N)
    basis = materialize_basis(grid, {"family": "polynomial", "degree": degree})
    cov = CovarianceModel({"kernel": "white", "sigma2": sigma2}, sigma2 * np.eye(N), sigma2)
    k = sigma2 * (1 - 1e-9) if kappa is None else kappa
    return ProblemInstance(grid, basis, cov, n, k, 1e-6, "white")


def random_measure(rng, N, n, eps=0.0):
    """Random point of {eps <= xi <= 1/n, sum xi = 1} by rejection-free clipping and repair."""
    ub = 1.0 / n
    while True:
        w = rng.dirichlet(np.full(N, 0.7))
        w = eps + (1 - N * eps) * w
        if w.max() <= ub:
            return w
        # shrink towards uniform until feasible
        u = np.full(N, 1.0 / N)
        t = (ub - 1.0 / N) / (w.max() - 1.0 / N)
        return u + 0.999 * t * (w - u)


def small_grid_problem(eid, N=21):
    """Example reduced to an ``N``-point grid on [1, 2] with its own kappa."""
    prob, crit = example(eid)
    grid = linspace_grid(1.0, 2.0, N)
    return make_problem(grid, prob.basis.spec, prob.cov.spec, prob.n), crit


__all__ = ["ACCEPTANCE_LINES", "concavity_probe", "record_criterion", "explicit_grid", "mp_phi", "random_measure", "small_grid_problem", "solved", "exs", "white_noise_problem"]


def mp_phi(problem, criterion, w, dps=30):
    """Criterion of the virtual-noise information at raw weights ``w``, in extended precision."""
    import mpmath as mp

    with mp.workdps(dps):
        N, kappa, n = problem.N, mp.mpf(problem.kappa), problem.n
        w = [mp.mpf(v) if not isinstance(v, mp.mpf) else v for v in w]
        Z = mp.matrix(N, N)
        for i in range(N):
            for j in range(N):
                Z[i, j] = w[i] * (mp.mpf(problem.C[i, j]) - (kappa if i == j else 0))
            Z[i, i] += kappa / n
        F = mp.matrix(problem.F.tolist())
        WF = mp.matrix(N, F.cols)
        for i in range(N):
            for j in range(F.cols):
                WF[i, j] = w[i] * F[i, j]
        M = F.T * (mp.inverse(Z) * WF)
        M = (M + M.T) / 2
        if Criterion.parse(criterion) is Criterion.D:
            return mp.det(M) ** (mp.mpf(1) / M.rows)
        Mi = mp.inverse(M)
        return 1 / sum(Mi[k, k] for k in range(M.rows))


def _convex_direction(problem, kappa, xi):
    """Feasible direction of largest second derivative of Phi_D(M(xi + s d)) at s = 0.

    With K = (C - kappa I + (kappa/n) diag(1/xi))^-1, P = K F and R = P M^-1 P', the
    second derivative along d = xi^2 c is Phi * c'Qc.  Q can only have a positive
    direction when C - kappa I is indefinite.
    """
    from scipy.linalg import null_space

    N, n, p = problem.N, problem.n, problem.p
    K = np.linalg.inv(problem.C - kappa * np.eye(N) + np.diag(kappa / n / xi))
    P = K @ problem.F
    R = P @ np.linalg.solve(problem.F.T @ P, P.T)
    r, s = np.diag(R), kappa / n
    Q = (2 * s * s * K * R - 2 * s * np.diag(xi * r) - s * s * R * R) / p + s * s * np.outer(r, r) / p**2
    B = null_space((xi**2)[None, :])
    ev, V = np.linalg.eigh(B.T @ (0.5 * (Q + Q.T)) @ B)
    return ev[-1], xi**2 * (B @ V[:, -1])


def concavity_probe(problem, kappa, xi, steps=30):
    """Most negative relative midpoint gap Phi(xi) - (Phi(xi+sd) + Phi(xi-sd))/2 along the worst direction.

    Returns ``(gap, mu, nu)``; a negative gap is a violating triple (mu, nu, 1/2).
    """
    from corrdesign.criteria import phi_or_zero
    from corrdesign.vncore import info_matrix_weights

    def f(w):
        return phi_or_zero("D", info_matrix_weights(problem.F, problem.C, kappa, problem.n, w))

    _, d = _convex_direction(problem, kappa, xi)
    ub = 1.0 / problem.n
    with np.errstate(divide="ignore"):
        room = np.minimum(np.minimum(xi, ub - xi) / np.abs(d), np.inf)
    smax = 0.999 * room.min()
    best = (0.0, None, None)
    base = f(xi)
    for s in np.geomspace(smax * 1e-3, smax, steps):
        mu, nu = xi + s * d, xi - s * d
        gap = (base - (f(mu) + f(nu)) / 2) / base
        if gap < best[0]:
            best = (gap, mu, nu)
    return best


ACCEPTANCE_LINES = []


def record_criterion(number, checks):
    """Print and keep one pass/fail line for an acceptance criterion; return overall status."""
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{name} {'ok' if good else 'FAIL'} ({info})" for name, good, info in checks)
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
