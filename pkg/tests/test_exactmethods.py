import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrdesign import DesignMeasure, ExactDesign, example, info_matrix_exact, phi
from corrdesign.errors import (
    BKSFSingularStep,
    ExtractionCollision,
    InsufficientSupport,
    InvalidGrid,
    NearSingularAugmentation,
    TooLarge,
)
from corrdesign.exactmethods import (
    _draw_weighted,
    bksf,
    default_start,
    exhaustive,
    kriging_residuals,
    make_result,
    quantile_extract,
    quantile_result,
    random_extract,
    random_uniform_baseline,
    sensitivity_tilde,
)

from conftest import exs, random_measure, small_grid_problem, solved, white_noise_problem


def test_d_sensitivity_is_determinant_ratio():
    prob, crit = example("1")
    T = [10, 45, 90]
    det0 = np.linalg.det(info_matrix_exact(prob, T))
    for x in range(prob.N):
        if x in T:
            continue
        ratio = np.linalg.det(info_matrix_exact(prob, sorted(T + [x]))) / det0
        assert sensitivity_tilde(prob, "D", x, T) == pytest.approx(ratio, rel=1e-8)


def test_white_noise_sensitivity():
    prob = white_noise_problem(sigma2=2.0, n=4)
    T = [0, 5, 12, 20]
    Minv = np.linalg.inv(prob.F[T].T @ prob.F[T] / 2.0)
    for x in (1, 9, 17):
        f = prob.F[x]
        assert sensitivity_tilde(prob, "D", x, T) == pytest.approx(1 + f @ Minv @ f / 2.0, rel=1e-12)
        res = kriging_residuals(prob, T, [x])
        assert res.sigma2_tilde[0] == pytest.approx(2.0)
        assert np.allclose(res.f_tilde[0], f)


def test_kriging_residuals_on_design():
    prob, _ = example("2")
    T = [0, 30, 60, 100]
    res = kriging_residuals(prob, T)
    assert np.all(res.sigma2_tilde >= -1e-10)
    assert np.allclose(res.sigma2_tilde[T], 0.0, atol=1e-12)
    assert np.allclose(res.f_tilde[T], 0.0, atol=1e-10)
    with pytest.raises(NearSingularAugmentation):
        sensitivity_tilde(prob, "D", 30, T)


def test_a_sensitivity_calibration_report(rng):
    """How often the A-sensitivity ranking picks the candidate with the largest drop in tr(M^-1)."""
    hits, total = 0, 0
    for eid in ("4", "2", "1"):
        prob, _ = example(eid)
        for _ in range(34 if eid != "1" else 32):
            T = sorted(rng.choice(prob.N, prob.n - 1, replace=False).tolist())
            base = np.trace(np.linalg.inv(info_matrix_exact(prob, T)))
            cand = [x for x in range(prob.N) if x not in T]
            scores, drops = [], []
            for x in cand:
                try:
                    scores.append(sensitivity_tilde(prob, "A", x, T))
                except NearSingularAugmentation:
                    scores.append(-np.inf)
                drops.append(base - np.trace(np.linalg.inv(info_matrix_exact(prob, sorted(T + [x])))))
            total += 1
            hits += int(np.argmax(scores) == np.argmax(drops))
    print(f"A-sensitivity calibration: top candidate agrees on {hits}/{total} draws")
    assert total == 100


def test_quantile_uniform():
    xi = DesignMeasure.uniform(101)
    assert quantile_extract(xi, 4).indices == (20, 40, 60, 80)
    ep = quantile_extract(xi, 4, mode="with_endpoints")
    assert ep.indices[0] == 0 and ep.indices[-1] == 100 and len(ep) == 4


def test_quantile_point_mass():
    for T in [(3, 17, 55, 99), (0, 1, 2, 3), (97, 98, 99, 100)]:
        xi = DesignMeasure.from_design(T, 101)
        assert quantile_extract(xi, 4).indices == T


def test_quantile_collision_advances():
    w = np.zeros(6)
    w[2] = 1.0
    assert quantile_extract(w, 3).indices == (2, 3, 4)
    w = np.zeros(4)
    w[3] = 1.0
    with pytest.raises(ExtractionCollision):
        quantile_extract(w, 2)


def test_quantile_rejects_2d():
    prob, _ = example("5")
    with pytest.raises(InvalidGrid):
        quantile_extract(DesignMeasure.uniform(prob.N), 4, grid=prob.grid)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.sampled_from(["plain", "with_endpoints"]))
def test_quantile_strictly_increasing(seed, n, mode):
    w = random_measure(np.random.default_rng(seed), 101, n)
    T = quantile_extract(w, n, mode)
    assert len(T) == n and all(b > a for a, b in zip(T.indices, T.indices[1:]))


def test_weighted_draw_frequencies():
    rng = np.random.default_rng(7)
    w = np.array([0.5, 0.3, 0.2])
    counts = np.bincount([_draw_weighted(rng, w, 1)[0] for _ in range(10_000)], minlength=3) / 10_000
    assert np.all(np.abs(counts - w) <= 0.02)


def test_random_extract_degenerate():
    prob, crit = example("1")
    T = (5, 40, 77, 100)
    res = random_extract(prob, crit, DesignMeasure.from_design(T, prob.N), samples=20, seed=3)
    assert res.design.indices == T
    assert res.stats["best_phi"] == res.stats["median_phi"] == res.phi_value


def test_random_extract_insufficient_support():
    prob, crit = example("1")
    with pytest.raises(InsufficientSupport):
        random_extract(prob, crit, DesignMeasure.from_design((1, 2, 3), prob.N))


def test_random_reproducible(ex1):
    prob, crit, report, cert = ex1
    a = random_extract(prob, crit, report.final_measure, seed=11, bound=cert.bound)
    b = random_extract(prob, crit, report.final_measure, seed=11, bound=cert.bound)
    c = random_extract(prob, crit, report.final_measure, seed=12, bound=cert.bound)
    assert a.to_dict() == b.to_dict()
    assert a.stats != c.stats
    u1 = random_uniform_baseline(prob, crit, seed=4)
    u2 = random_uniform_baseline(prob, crit, seed=4)
    assert u1.to_dict() == u2.to_dict()


def test_uniform_baseline_full_design():
    prob = white_noise_problem(N=5, sigma2=1.0, n=5, degree=2)
    res = random_uniform_baseline(prob, "D", samples=10, seed=0)
    assert res.design.indices == (0, 1, 2, 3, 4)
    assert res.stats["best_phi"] == res.stats["median_phi"]


@pytest.mark.parametrize("eid, lo, hi", [("1", 0.6, 0.78), ("4", 0.02, 0.12)])
def test_uniform_baseline_median(eid, lo, hi):
    prob, crit, _, cert = solved(eid)
    meds = [random_uniform_baseline(prob, crit, seed=s, bound=cert.bound).stats["median_efficiency"]
            for s in range(5)]
    assert lo <= np.median(meds) <= hi


@pytest.mark.parametrize("eid", ["1", "1m", "2", "3s", "4", "5"])
def test_bksf_improves_on_start(eid):
    prob, crit, _, _ = solved(eid)
    res = bksf(prob, crit)
    assert res.stats["start"] == list(default_start(prob.N, prob.n).indices)
    assert res.stats["converged"]
    if res.stats["sweeps"] >= 2:
        assert res.phi_value >= res.stats["start_phi"] * (1 - 1e-12)


def test_bksf_fixed_point():
    prob, crit = example("1")
    first = bksf(prob, crit)
    again = bksf(prob, crit, T0=first.design)
    assert again.design == first.design


def test_bksf_singular_step():
    prob = white_noise_problem(N=11, sigma2=1.0, n=3, degree=2)
    with pytest.raises(BKSFSingularStep) as exc:
        bksf(prob, "D")
    assert exc.value.index is not None


def test_default_start():
    assert default_start(101, 4).indices == (0, 33, 67, 100)
    assert default_start(5, 5).indices == (0, 1, 2, 3, 4)


@pytest.mark.parametrize("eid", ["1", "4"])
def test_exhaustive_matches_brute_force(eid):
    prob, crit = small_grid_problem(eid)
    res = exhaustive(prob, crit)
    vals = {T: phi(crit, info_matrix_exact(prob, T)) for T in itertools.combinations(range(prob.N), prob.n)}
    top = max(vals.values())
    assert res.phi_value == pytest.approx(top, rel=1e-10)
    winners = sorted(T for T, v in vals.items() if v >= top * (1 - 1e-12))
    assert res.design.indices == winners[0]
    assert res.stats["designs"] == len(vals)


def test_exhaustive_too_large():
    prob, crit = example("3s")
    with pytest.raises(TooLarge) as exc:
        exhaustive(prob, crit)
    assert exc.value.count > 10**50


def test_exhaustive_tie_break_lexicographic():
    # symmetric grid and reflection-invariant model: mirrored designs tie exactly
    prob = white_noise_problem(N=9, sigma2=1.0, n=3, degree=1)
    res = exhaustive(prob, "D")
    mirror = tuple(sorted(prob.N - 1 - i for i in res.design.indices))
    assert res.design.indices <= mirror


@pytest.mark.parametrize("eid", ["1", "1m", "2", "4"])
def test_exhaustive_dominates_methods(eid):
    prob, crit, report, cert = solved(eid)
    best = exs(eid)
    others = [
        bksf(prob, crit),
        quantile_result(prob, crit, report.final_measure, "plain"),
        quantile_result(prob, crit, report.final_measure, "with_endpoints"),
        random_extract(prob, crit, report.final_measure),
        random_uniform_baseline(prob, crit),
    ]
    for r in others:
        assert best.phi_value >= r.phi_value - 1e-10 * best.phi_value


def test_method_result_json(ex1):
    prob, crit, report, cert = ex1
    res = make_result(prob, crit, [22, 66, 79, 100], "EXS", bound=cert.bound)
    d = json.loads(json.dumps(res.to_dict()))
    assert set(d) == {"method", "indices", "points", "phi", "efficiency", "stats", "seed"}
    assert np.allclose(d["points"], [[1.22], [1.66], [1.79], [2.0]], atol=1e-12)
    assert d["phi"] == pytest.approx(phi(crit, info_matrix_exact(prob, ExactDesign.of(d["indices"]))))
