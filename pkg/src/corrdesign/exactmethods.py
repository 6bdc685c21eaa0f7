"""Exact n-point designs: exchange, extraction from a measure, random and exhaustive search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .criteria import Criterion, ExactDesign, info_matrix_exact, phi
from .errors import (
    BKSFSingularStep,
    ExtractionCollision,
    IllConditionedCovariance,
    InsufficientSupport,
    InvalidGrid,
    NearSingularAugmentation,
    SingularInformation,
    TooLarge,
)
from .vncore import DesignMeasure

SIGMA2_REL_TOL = 1e-14
EXS_CAP = 2_000_000
TIE_TOL = 1e-12
GAIN_TOL = 1e-10

METHOD_TAGS = ("Q-VN", "Q-VN+EP", "R-VN", "R-UNIF", "BKSF", "EXS")


# kriging residuals and approximate sensitivities


@dataclass(frozen=True, eq=False)
class KrigingResiduals:
    """Conditional variance and regression residual of candidates given a design."""

    candidates: np.ndarray
    sigma2_tilde: np.ndarray
    f_tilde: np.ndarray  # (len(candidates), p)


def kriging_residuals(problem, design, candidates=None) -> KrigingResiduals:
    idx = np.asarray(list(design), dtype=int)
    cand = np.arange(problem.N) if candidates is None else np.atleast_1d(np.asarray(candidates, dtype=int))
    C, F = problem.C, problem.F
    if idx.size == 0:
        return KrigingResiduals(cand, C[cand, cand].copy(), F[cand].copy())
    try:
        fac = cho_factor(C[np.ix_(idx, idx)], lower=True)
    except LinAlgError:
        raise IllConditionedCovariance("C(T) is not numerically positive definite") from None
    K = C[np.ix_(idx, cand)]
    S = cho_solve(fac, K)
    s2 = C[cand, cand] - np.einsum("ij,ij->j", K, S)
    ft = F[cand] - S.T @ F[idx]
    return KrigingResiduals(cand, s2, ft)


def _reduced_info(problem, design):
    M = info_matrix_exact(problem, design)
    try:
        fac = cho_factor(M, lower=True)
    except LinAlgError:
        raise SingularInformation("information matrix of the design is singular") from None
    Minv = cho_solve(fac, np.eye(M.shape[0]))
    return 0.5 * (Minv + Minv.T)


def _sensitivity_values(criterion, Minv, res: KrigingResiduals, C_diag):
    """Vectorized sensitivities; near-singular candidates get ``-inf``."""
    s2 = res.sigma2_tilde
    ok = s2 > SIGMA2_REL_TOL * C_diag
    u = res.f_tilde @ Minv
    s2safe = np.where(ok, s2, 1.0)
    if criterion is Criterion.D:
        val = 1.0 + np.einsum("ij,ij->i", u, res.f_tilde) / s2safe
    else:
        val = np.einsum("ij,ij->i", u, u) / s2safe - np.trace(Minv)
    return np.where(ok, val, -np.inf)


def sensitivity_tilde(problem, criterion, x: int, design) -> float:
    """Approximate sensitivity of adding grid point ``x`` to ``design``.

    D: ``(s2 + f' M^-1 f) / s2``, the factor by which ``det M`` grows.
    A: ``f' M^-2 f / s2 - tr(M^-1)``.
    """
    criterion = Criterion.parse(criterion)
    design = design if isinstance(design, ExactDesign) else ExactDesign.of(design)
    Minv = _reduced_info(problem, design)
    res = kriging_residuals(problem, design, [x])
    cxx = problem.C[x, x]
    if not res.sigma2_tilde[0] > SIGMA2_REL_TOL * cxx:
        raise NearSingularAugmentation(f"candidate {x} has conditional variance {res.sigma2_tilde[0]:.3g}")
    return float(_sensitivity_values(criterion, Minv, res, np.array([cxx]))[0])


# results


@dataclass
class MethodResult:
    method: str
    design: ExactDesign
    phi_value: float
    points: list
    efficiency: float | None = None
    stats: dict = field(default_factory=dict)
    seed: int | None = None

    def with_bound(self, bound: float) -> "MethodResult":
        self.efficiency = self.phi_value / bound
        for key in ("best_phi", "median_phi"):
            if key in self.stats:
                self.stats[key.replace("phi", "efficiency")] = self.stats[key] / bound
        return self

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "indices": list(self.design.indices),
            "points": self.points,
            "phi": self.phi_value,
            "efficiency": self.efficiency,
            "stats": self.stats,
            "seed": self.seed,
        }


def make_result(problem, criterion, design, method: str, stats=None, seed=None, bound=None) -> MethodResult:
    design = design if isinstance(design, ExactDesign) else ExactDesign.of(design)
    design.check(problem.N)
    val = phi(criterion, info_matrix_exact(problem, design))
    pts = problem.grid.points[list(design.indices)].tolist()
    res = MethodResult(method, design, val, pts, stats=dict(stats or {}), seed=seed)
    if bound is not None:
        res.with_bound(bound)
    return res


def _phi_safe(problem, criterion, idx) -> float:
    try:
        return phi(criterion, info_matrix_exact(problem, ExactDesign.of(idx)))
    except (SingularInformation, IllConditionedCovariance):
        return 0.0


# BKSF exchange


def default_start(N: int, n: int) -> ExactDesign:
    """``n`` equispaced grid indices including both ends."""
    return ExactDesign.of(np.round(np.linspace(0, N - 1, n)).astype(int))


def bksf(problem, criterion, T0=None, max_sweeps: int | None = None) -> MethodResult:
    """Exchange algorithm with approximate sensitivities.

    Each sweep drops the point with the smallest sensitivity relative to the
    rest of the design, adds the best candidate relative to the reduced design,
    and stops once the gain ``sens_add - sens_drop`` is not positive.  The swap
    is made before the check, so the last swap may be a non-improving one.
    """
    criterion = Criterion.parse(criterion)
    N = problem.N
    T = default_start(N, problem.n) if T0 is None else (T0 if isinstance(T0, ExactDesign) else ExactDesign.of(T0))
    T.check(N, problem.n)
    start = T
    converged = False
    if max_sweeps is None:
        max_sweeps = 10 * N
    C_diag = np.diag(problem.C)
    phi0 = phi(criterion, info_matrix_exact(problem, T))
    sweeps = 0
    history = []
    while sweeps < max_sweeps:
        sweeps += 1
        idx = list(T.indices)
        drops = np.empty(len(idx))
        reduced = []
        for j, x in enumerate(idx):
            R = ExactDesign(tuple(idx[:j] + idx[j + 1 :]))
            try:
                Minv = _reduced_info(problem, R)
            except (SingularInformation, IllConditionedCovariance) as exc:
                raise BKSFSingularStep(f"reduced design without index {x} is singular: {exc}", index=x) from None
            res = kriging_residuals(problem, R, [x])
            drops[j] = _sensitivity_values(criterion, Minv, res, C_diag[[x]])[0]
            reduced.append((R, Minv))
        j = int(np.argmin(drops))
        sens_drop = drops[j]
        R, Minv = reduced[j]
        res = kriging_residuals(problem, R)
        adds = _sensitivity_values(criterion, Minv, res, C_diag)
        adds[list(R.indices)] = -np.inf
        xbar = int(np.argmax(adds))
        sens_add = adds[xbar]
        T = ExactDesign.of(list(R.indices) + [xbar])
        gain = sens_add - sens_drop
        history.append((idx[j], xbar, float(gain)))
        # re-adding the dropped point has zero gain up to round-off
        if gain <= GAIN_TOL * max(1.0, abs(sens_drop)):
            converged = True
            break
    stats = {"sweeps": sweeps, "start": list(start.indices), "start_phi": phi0, "converged": converged,
             "swaps": history}
    return make_result(problem, criterion, T, "BKSF", stats=stats)


# extraction from a measure


def _advance(i, used, lo, hi):
    while i in used:
        i += 1
    if i > hi or i < lo:
        raise ExtractionCollision("not enough distinct grid points to resolve all quantiles")
    return i


def _cdf_index(cum, q):
    return int(np.searchsorted(cum, q - 1e-12, side="left"))


def quantile_extract(xi, n: int, mode: str = "plain", grid=None) -> ExactDesign:
    """Grid points at the measure's quantiles (1D, order-based).

    ``plain`` uses quantiles ``j/(n+1)``, ``j = 1..n``.  ``with_endpoints``
    always takes the first and last grid points and places the other ``n - 2``
    at quantiles ``j/(n-1)`` of the measure restricted to the interior and
    renormalized.  A quantile that hits an index already taken moves to the
    next unused index.
    """
    if grid is not None and getattr(grid, "dim", 1) != 1:
        raise InvalidGrid("quantile extraction needs a one-dimensional grid")
    w = xi.weights if isinstance(xi, DesignMeasure) else np.asarray(xi, dtype=float)
    N = w.size
    used: list[int] = []
    if mode == "plain":
        cum = np.cumsum(w)
        for j in range(1, n + 1):
            used.append(_advance(_cdf_index(cum, j / (n + 1)), used, 0, N - 1))
    elif mode == "with_endpoints":
        if n < 2:
            raise ExtractionCollision("with_endpoints needs n >= 2")
        used = [0, N - 1]
        if n > 2:
            inner = w[1:-1] / w[1:-1].sum()
            cum = np.cumsum(inner)
            for j in range(1, n - 1):
                used.append(_advance(1 + _cdf_index(cum, j / (n - 1)), used, 1, N - 2))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if len(set(used)) != n:
        raise ExtractionCollision("quantile extraction produced repeated points")
    return ExactDesign.of(used)


def _draw_weighted(rng, w, n):
    w = w.copy()
    out = []
    for _ in range(n):
        i = int(rng.choice(w.size, p=w / w.sum()))
        out.append(i)
        w[i] = 0.0
    return out


def _summarize(problem, criterion, samples, method, seed, bound):
    phis = np.array([_phi_safe(problem, criterion, s) for s in samples])
    k = int(np.argmax(phis))
    stats = {"samples": len(samples), "best_phi": float(phis[k]), "median_phi": float(np.median(phis))}
    return make_result(problem, criterion, samples[k], method, stats=stats, seed=seed, bound=bound)


def random_extract(problem, criterion, xi, samples: int = 100, seed: int = 0, bound=None) -> MethodResult:
    """Best of ``samples`` designs drawn from the measure without replacement.

    Uses numpy's PCG64 generator seeded with ``seed``.
    """
    criterion = Criterion.parse(criterion)
    w = xi.weights if isinstance(xi, DesignMeasure) else np.asarray(xi, dtype=float)
    w = np.where(w > 0, w, 0.0)
    n = problem.n
    if np.count_nonzero(w) < n:
        raise InsufficientSupport(f"measure has {np.count_nonzero(w)} support points, need {n}")
    rng = np.random.default_rng(seed)
    draws = [sorted(_draw_weighted(rng, w, n)) for _ in range(samples)]
    return _summarize(problem, criterion, draws, "R-VN", seed, bound)


def random_uniform_baseline(problem, criterion, n: int | None = None, samples: int = 100, seed: int = 0,
                            bound=None) -> MethodResult:
    criterion = Criterion.parse(criterion)
    n = problem.n if n is None else n
    rng = np.random.default_rng(seed)
    draws = [sorted(int(i) for i in rng.choice(problem.N, size=n, replace=False)) for _ in range(samples)]
    return _summarize(problem, criterion, draws, "R-UNIF", seed, bound)


def quantile_result(problem, criterion, xi, mode="plain", bound=None) -> MethodResult:
    design = quantile_extract(xi, problem.n, mode, grid=problem.grid)
    tag = "Q-VN" if mode == "plain" else "Q-VN+EP"
    return make_result(problem, criterion, design, tag, bound=bound)


# exhaustive search


def _scores_direct(criterion, M):
    """Scores of a stack of p x p matrices; singular ones get ``-inf``."""
    ev = np.linalg.eigvalsh(M)
    bad = ev[..., 0] <= 1e-12 * np.maximum(ev[..., -1], 1e-300)
    evs = np.where(bad[..., None], 1.0, ev)
    s = np.log(evs).sum(-1) if criterion is Criterion.D else -(1.0 / evs).sum(-1)
    return np.where(bad, -np.inf, s)


def _batch_scores(problem, criterion, P, cand):
    """Scores of ``P[b] + (x,)`` for every ``x`` in ``cand``; invalid completions get ``-inf``."""
    C, F = problem.C, problem.F
    CP = C[P[:, :, None], P[:, None, :]]
    try:
        L = np.linalg.cholesky(CP)
    except np.linalg.LinAlgError:
        out = np.full((P.shape[0], cand.size), -np.inf)
        if P.shape[0] > 1:
            for b in range(P.shape[0]):
                out[b] = _batch_scores(problem, criterion, P[b : b + 1], cand)[0]
        return out
    Linv = np.linalg.inv(L)
    YK = Linv @ C[P[:, :, None], cand[None, None, :]]  # L^-1 k(P, x)
    YF = Linv @ F[P]
    cdiag = np.diag(C)[cand]
    s2 = cdiag[None, :] - (YK * YK).sum(axis=1)
    ft = F[cand][None] - np.swapaxes(YK, 1, 2) @ YF
    MP = np.swapaxes(YF, 1, 2) @ YF
    valid = s2 > SIGMA2_REL_TOL * cdiag[None, :]
    s2safe = np.where(valid, s2, 1.0)
    scores = np.full(s2.shape, -np.inf)
    evP = np.linalg.eigvalsh(MP)
    regular = evP[:, 0] > 1e-10 * np.maximum(evP[:, -1], 1e-300)
    if P.shape[1] >= F.shape[1] and regular.any():
        r = np.flatnonzero(regular)
        Minv = np.linalg.inv(MP[r])
        v = ft[r] @ Minv
        q = (v * ft[r]).sum(axis=-1) / s2safe[r]
        if criterion is Criterion.D:
            # log det(M + u u') = log det M + log(1 + u' M^-1 u)
            scores[r] = np.log(evP[r]).sum(-1)[:, None] + np.log1p(q)
        else:
            # Sherman-Morrison on the trace of the inverse
            vv = (v * v).sum(axis=-1) / s2safe[r]
            scores[r] = -np.trace(Minv, axis1=1, axis2=2)[:, None] + vv / (1.0 + q)
        irr = np.flatnonzero(~regular)
    else:
        irr = np.arange(P.shape[0])
    if irr.size:
        u = ft[irr] / np.sqrt(s2safe[irr])[..., None]
        Mn = MP[irr][:, None] + u[..., :, None] * u[..., None, :]
        scores[irr] = _scores_direct(criterion, Mn)
    return np.where(valid, scores, -np.inf)


def exhaustive(problem, criterion, cap: int = EXS_CAP, batch: int = 8192, bound=None) -> MethodResult:
    """Global maximizer of the criterion over all ``n``-subsets of the grid.

    Designs are enumerated as an ``(n-1)``-point prefix with largest index
    ``m`` plus one index above ``m``.  Each batch of prefixes is scored for all
    completions at once through the rank-one update ``M(P + x) = M(P) + f f' / s2``
    with kriging residuals.  Ties go to the lexicographically smallest index tuple.
    """
    criterion = Criterion.parse(criterion)
    N, n = problem.N, problem.n
    count = math.comb(N, n)
    if count > cap:
        raise TooLarge(f"{count} designs exceed the cap of {cap}", count=count)
    best_score, best = -np.inf, None

    def tie_tol(score):
        return TIE_TOL * max(1.0, abs(score))

    def offer(score, design):
        # scores equal up to round-off count as ties
        nonlocal best_score, best
        if best is None or score > best_score + tie_tol(best_score):
            best_score, best = score, design
        elif score >= best_score - tie_tol(best_score) and design < best:
            best_score, best = max(score, best_score), design

    if n == 1:
        for i in range(N):
            offer(_scores_direct(criterion, info_matrix_exact(problem, [i])[None])[0], (i,))
    else:
        for m in range(n - 2, N - 1):
            cand = np.arange(m + 1, N)
            rows = max(1, batch * 64 // cand.size)
            it = itertools.combinations(range(m), n - 2)
            while True:
                chunk = list(itertools.islice(it, rows))
                if not chunk:
                    break
                Q = np.array(chunk, dtype=np.intp).reshape(len(chunk), n - 2)
                P = np.column_stack([Q, np.full(len(chunk), m, dtype=np.intp)])
                sc = _batch_scores(problem, criterion, P, cand)
                top = sc.max()
                if top == -np.inf:
                    continue
                k = int(np.argmax(sc >= top - tie_tol(top)))
                b, j = divmod(k, cand.size)
                offer(sc.flat[k], tuple(int(i) for i in P[b]) + (int(cand[j]),))
    if best is None or best_score == -np.inf:
        raise SingularInformation("every design has a singular information matrix")
    return make_result(problem, criterion, best, "EXS", stats={"designs": count, "score": float(best_score)},
                       bound=bound)


__all__ = [
    "EXS_CAP",
    "KrigingResiduals",
    "METHOD_TAGS",
    "MethodResult",
    "bksf",
    "default_start",
    "exhaustive",
    "kriging_residuals",
    "make_result",
    "quantile_extract",
    "quantile_result",
    "random_extract",
    "random_uniform_baseline",
    "sensitivity_tilde",
]
