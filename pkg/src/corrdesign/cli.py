"""Command-line front end.

Subcommands: solve, bksf, extract, exhaustive, certify, sweep, reproduce.
Exit status is 0 on success, 2 for invalid input and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import instances
from .criteria import Criterion, ExactDesign, info_matrix_exact, phi
from .cutplane import optimize_measure, write_trace
from .equivalence import certify
from .errors import ConfigError, CorrDesignError, InvalidProblem, NumericalError
from .exactmethods import (
    METHOD_TAGS,
    bksf,
    exhaustive,
    quantile_result,
    random_extract,
    random_uniform_baseline,
)
from .problem import problem_from_spec
from .vncore import DesignMeasure

SCHEMA_VERSION = 1
REPRODUCE_CAP = 100_000_000

_METHOD_ALIASES = {
    "qvn": "Q-VN",
    "qvnep": "Q-VN+EP",
    "rvn": "R-VN",
    "runif": "R-UNIF",
    "bksf": "BKSF",
    "exs": "EXS",
}


def method_tag(name: str) -> str:
    key = name.strip()
    if key.upper() in METHOD_TAGS:
        return key.upper()
    tag = _METHOD_ALIASES.get(key.lower().replace("-", "").replace("+", ""))
    if tag is None:
        raise InvalidProblem(f"unknown method {name!r}; expected one of {METHOD_TAGS} or {sorted(_METHOD_ALIASES)}")
    return tag


def parse_n(text: str) -> list[int]:
    """``"5"``, ``"4..20"`` (inclusive) or ``"4,6,8"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise InvalidProblem(f"empty --n value {text!r}")
    return out


def worker_count() -> int:
    env = os.environ.get("CORRDESIGN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidProblem(f"CORRDESIGN_THREADS must be an integer, got {env!r}") from None
    return min(4, os.cpu_count() or 1)


# ------------------------------------------------------------------ output


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not text.endswith("\n"):
        text += "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=_to_builtin)


def _to_builtin(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def measure_csv(problem, xi: DesignMeasure) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = problem.grid.dim
    w.writerow((["x"] if d == 1 else [f"x{j + 1}" for j in range(d)]) + ["xi"])
    for pt, v in zip(problem.grid.points, xi.weights):
        w.writerow([repr(float(c)) for c in pt] + [repr(float(v))])
    return buf.getvalue()


def read_measure_csv(path, problem) -> DesignMeasure:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    try:
        w = np.array([float(r[-1]) for r in rows[1:]])
        if w.size != problem.N:
            raise InvalidProblem(f"measure file has {w.size} weights, problem has N={problem.N}")
        return DesignMeasure(w)
    except ValueError as exc:
        raise InvalidProblem(f"bad measure file {path}: {exc}") from None


def trace_csv(iterations) -> str:
    buf = io.StringIO()
    write_trace(iterations, buf)
    return buf.getvalue()


def designs_doc(problem, criterion, bound, results, extra=None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "problem": problem.to_spec(),
        "criterion": criterion.value,
        "bound": bound,
        "results": [r.to_dict() for r in results],
    }
    if extra:
        doc.update(extra)
    return doc


# ------------------------------------------------------------------ config


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InvalidProblem(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidProblem(f"{path} is not valid JSON: {exc}") from None


def load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        cfg = _load_json(args.config)
        if not isinstance(cfg, dict):
            raise InvalidProblem("config must be a JSON object")
        version = cfg.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise InvalidProblem(f"unsupported schema_version {version!r}")
    return cfg


def build_problem(args, n=None):
    """Problem and criterion from ``--example`` or ``--config`` plus flag overrides."""
    cfg = load_config(args)
    kappa = args.kappa if args.kappa is not None else None
    if kappa not in (None, "auto"):
        try:
            kappa = float(kappa)
        except ValueError:
            raise InvalidProblem(f"--kappa must be a number or 'auto', got {kappa!r}") from None
    example = getattr(args, "example", None) or cfg.get("example")
    crit = args.criterion or cfg.get("criterion")
    if example is not None:
        try:
            prob, default_crit = instances.example(
                str(example), n=n, kappa="auto" if kappa is None else kappa,
                epsilon=args.epsilon if args.epsilon is not None else cfg.get("epsilon", 1e-6),
            )
        except KeyError as exc:
            raise InvalidProblem(str(exc.args[0])) from None
    else:
        spec = cfg.get("problem", cfg)
        if not isinstance(spec, dict) or "grid" not in spec:
            raise InvalidProblem("give --example ID or --config FILE with a problem spec")
        prob = problem_from_spec(spec, n=n, kappa=kappa, epsilon=args.epsilon)
        default_crit = Criterion.D
    return prob, Criterion.parse(crit) if crit else default_crit, cfg


def _first_n(args):
    return parse_n(args.n)[0] if getattr(args, "n", None) else None


# ------------------------------------------------------------------ pipeline


def solve_measure(problem, criterion, rel_tol, max_iters):
    report = optimize_measure(problem, criterion, rel_tol=rel_tol, max_iters=max_iters)
    cert = certify(problem, criterion, report.final_measure)
    return report, cert


def run_method(problem, criterion, tag, xi=None, bound=None, seed=0, samples=100, cap=None):
    if tag in ("Q-VN", "Q-VN+EP"):
        return quantile_result(problem, criterion, xi, "plain" if tag == "Q-VN" else "with_endpoints", bound=bound)
    if tag == "R-VN":
        return random_extract(problem, criterion, xi, samples=samples, seed=seed, bound=bound)
    if tag == "R-UNIF":
        return random_uniform_baseline(problem, criterion, samples=samples, seed=seed, bound=bound)
    if tag == "BKSF":
        res = bksf(problem, criterion)
        return res.with_bound(bound) if bound else res
    if tag == "EXS":
        kw = {} if cap is None else {"cap": cap}
        return exhaustive(problem, criterion, bound=bound, **kw)
    raise InvalidProblem(f"unknown method {tag!r}")


def _summary_line(res) -> str:
    pts = "; ".join(",".join(f"{c:g}" for c in p) for p in res.points) if len(res.points) <= 12 else f"{len(res.points)} points"
    eff = "" if res.efficiency is None else f"  eff={res.efficiency:.4f}"
    extra = ""
    if "median_efficiency" in res.stats:
        extra = f"  median eff={res.stats['median_efficiency']:.4f}"
    return f"{res.method:8s} phi={res.phi_value:.6g}{eff}{extra}  [{pts}]"


def _emit_measure(out, problem, report, cert):
    write_atomic(out / "measure.csv", measure_csv(problem, report.final_measure))
    write_atomic(out / "trace.csv", trace_csv(report.iterations))
    doc = cert.to_dict()
    doc.update({"iterations": len(report.iterations), "converged": report.converged,
                "lp_gap": report.final_bound_gap, "lp_upper_bound": report.upper_bound})
    write_atomic(out / "certificate.json", _json(doc))


# ------------------------------------------------------------------ commands


def cmd_solve(args) -> int:
    problem, crit, cfg = build_problem(args, _first_n(args))
    method = args.method or cfg.get("method", "measure")
    out = Path(args.out)
    report, cert = solve_measure(problem, crit, args.rel_tol, args.max_iters)
    _emit_measure(out, problem, report, cert)
    print(f"measure: {len(report.iterations)} iterations, converged={report.converged}, "
          f"phi={cert.phi:.6g}, bound={cert.bound:.6g}, relative certificate gap={cert.delta_gap / cert.phi:.3g}")
    if method not in ("measure", "certify"):
        tag = method_tag(method)
        res = run_method(problem, crit, tag, report.final_measure, cert.bound, args.seed, args.samples, args.cap)
        write_atomic(out / "designs.json", _json(designs_doc(problem, crit, cert.bound, [res])))
        print(_summary_line(res))
    return 0


def _bound_for(problem, crit, args):
    return solve_measure(problem, crit, args.rel_tol, args.max_iters)


def cmd_bksf(args) -> int:
    problem, crit, _ = build_problem(args, _first_n(args))
    out = Path(args.out)
    res = bksf(problem, crit, T0=args.start)
    bound = None
    if not args.no_bound:
        report, cert = _bound_for(problem, crit, args)
        bound = cert.bound
        res.with_bound(bound)
        _emit_measure(out, problem, report, cert)
    write_atomic(out / "designs.json", _json(designs_doc(problem, crit, bound, [res])))
    print(_summary_line(res))
    return 0


def cmd_extract(args) -> int:
    problem, crit, _ = build_problem(args, _first_n(args))
    out = Path(args.out)
    if args.measure:
        xi = read_measure_csv(args.measure, problem)
        cert = certify(problem, crit, xi)
        write_atomic(out / "certificate.json", _json(cert.to_dict()))
    else:
        report, cert = _bound_for(problem, crit, args)
        xi = report.final_measure
        _emit_measure(out, problem, report, cert)
    tag = {"plain": "Q-VN", "with_endpoints": "Q-VN+EP", "random": "R-VN"}[args.mode]
    res = run_method(problem, crit, tag, xi, cert.bound, args.seed, args.samples)
    write_atomic(out / "designs.json", _json(designs_doc(problem, crit, cert.bound, [res])))
    print(_summary_line(res))
    return 0


def cmd_exhaustive(args) -> int:
    problem, crit, _ = build_problem(args, _first_n(args))
    out = Path(args.out)
    cap = args.cap if args.cap is not None else None
    res = run_method(problem, crit, "EXS", cap=cap)
    bound = None
    if not args.no_bound:
        report, cert = _bound_for(problem, crit, args)
        bound = cert.bound
        res.with_bound(bound)
        _emit_measure(out, problem, report, cert)
    write_atomic(out / "designs.json", _json(designs_doc(problem, crit, bound, [res])))
    print(_summary_line(res))
    return 0


def _certify_designs(args, path: Path, out: Path) -> int:
    doc = _load_json(path)
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise InvalidProblem(f"unsupported schema_version {doc.get('schema_version')!r}")
    problem = problem_from_spec(doc["problem"])
    crit = Criterion.parse(doc["criterion"])
    bound = doc.get("bound")
    rows = []
    ok = True
    for r in doc["results"]:
        design = ExactDesign.of(r["indices"])
        val = phi(crit, info_matrix_exact(problem, design))
        rel = abs(val - r["phi"]) / abs(r["phi"])
        match = rel <= 1e-12
        ok &= match
        rows.append({"method": r["method"], "indices": list(design.indices), "phi": val, "stored_phi": r["phi"],
                     "relative_difference": rel, "match": match,
                     "efficiency": None if not bound else val / bound})
        print(f"{r['method']:8s} phi={val:.12g} stored={r['phi']:.12g} match={match}")
    write_atomic(out / "certificate.json", _json({"schema_version": SCHEMA_VERSION, "source": str(path),
                                                  "criterion": crit.value, "bound": bound, "designs": rows,
                                                  "all_match": ok}))
    return 0 if ok else 3


def cmd_certify(args) -> int:
    out = Path(args.out)
    if args.design:
        return _certify_designs(args, Path(args.design), out)
    problem, crit, _ = build_problem(args, _first_n(args))
    if args.measure:
        xi = read_measure_csv(args.measure, problem)
        cert = certify(problem, crit, xi)
        write_atomic(out / "certificate.json", _json(cert.to_dict()))
    else:
        report, cert = _bound_for(problem, crit, args)
        _emit_measure(out, problem, report, cert)
    print(f"phi={cert.phi:.6g} bound={cert.bound:.6g} delta_gap={cert.delta_gap:.3g} "
          f"(relative {cert.delta_gap / cert.phi:.3g}) optimal={cert.is_optimal}")
    return 0


def _sweep_cell(args, n, tags):
    problem, crit, _ = build_problem(args, n)
    report, cert = solve_measure(problem, crit, args.rel_tol, args.max_iters)
    rows = []
    for tag in tags:
        try:
            res = run_method(problem, crit, tag, report.final_measure, cert.bound, args.seed, args.samples, args.cap)
            eff = res.stats.get("median_efficiency") if tag == "R-UNIF" else res.efficiency
        except CorrDesignError as exc:
            print(f"n={n} {tag}: {type(exc).__name__}: {exc}", file=sys.stderr)
            eff = float("nan")
        rows.append((n, tag, eff))
    return rows


def cmd_sweep(args) -> int:
    ns = parse_n(args.n) if args.n else None
    if not ns:
        raise InvalidProblem("sweep needs --n RANGE, e.g. --n 4..20")
    tags = [method_tag(m) for m in args.methods.split(",") if m.strip()]
    build_problem(args, ns[0])  # validate early
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        cells = list(pool.map(lambda n: _sweep_cell(args, n, tags), ns))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "method", "efficiency"])
    for rows in cells:
        for n, tag, eff in rows:
            w.writerow([n, tag, "nan" if eff is None or not math.isfinite(eff) else repr(float(eff))])
    write_atomic(Path(args.out) / "curve.csv", buf.getvalue())
    print(f"wrote {sum(len(r) for r in cells)} rows to {Path(args.out) / 'curve.csv'}")
    return 0


def reproduce(eid: str, out: Path, seed: int = 0, samples: int = 100, cap: int = REPRODUCE_CAP,
              rel_tol: float = 1e-4, stream=None) -> dict:
    """Run every method for a built-in example and compare with the reference table."""
    stream = sys.stdout if stream is None else stream
    eid = str(eid).lower().removeprefix("example")
    problem, crit = instances.example(eid)
    start = time.perf_counter()
    report, cert = solve_measure(problem, crit, rel_tol, 1000)
    _emit_measure(out, problem, report, cert)
    results = {}
    for tag in instances.METHODS[eid]:
        results[tag] = run_method(problem, crit, tag, report.final_measure, cert.bound, seed, samples, cap)
    write_atomic(out / "designs.json", _json(designs_doc(problem, crit, cert.bound, list(results.values()),
                                                         {"example": eid})))
    obtained = {}
    for tag, res in results.items():
        if tag in ("R-VN", "R-UNIF"):
            obtained[f"{tag} best"] = (res.stats["best_efficiency"], res.points)
            obtained[f"{tag} median"] = (res.stats["median_efficiency"], None)
        else:
            obtained[tag] = (res.efficiency, res.points)
    rows = []
    print(f"example {eid}: N={problem.N} n={problem.n} p={problem.p} kappa={problem.kappa:g} criterion={crit.value}",
          file=stream)
    print(f"measure: {len(report.iterations)} iterations, bound={cert.bound:.6g}, "
          f"relative certificate gap={cert.delta_gap / cert.phi:.3g}", file=stream)
    print(f"{'method':16s} {'obtained':>9s} {'reference':>9s} {'tol':>6s}  status  design", file=stream)
    ref = instances.REFERENCE.get(eid, {})
    for key in sorted(set(obtained) | set(ref), key=_row_order):
        eff, pts = obtained.get(key, (None, None))
        rval, rpts, tol = ref.get(key, (None, None, None))
        if eff is None:
            status = "n/a"
        elif rval is None or tol is None:
            status = "info"
        else:
            status = "pass" if abs(eff - rval) <= tol else "FAIL"
        design = "" if pts is None or len(pts) > 12 else " ".join(f"{p[0]:.2f}" if len(p) == 1 else str(p) for p in pts)
        print(f"{key:16s} {_fmt(eff):>9s} {_fmt(rval):>9s} {_fmt(tol):>6s}  {status:6s}  {design}", file=stream)
        rows.append({"method": key, "obtained": eff, "reference": rval, "tolerance": tol, "status": status,
                     "points": pts, "reference_points": rpts})
    if eid == "5":
        ok = obtained["R-VN best"][0] >= obtained["BKSF"][0] - 0.1
        print(f"R-VN best within 0.1 of BKSF: {'pass' if ok else 'FAIL'}", file=stream)
        rows.append({"method": "R-VN best >= BKSF - 0.1", "status": "pass" if ok else "FAIL"})
    if eid == "3s":
        for key, floor in (("R-VN best", 0.97), ("R-VN median", 0.94)):
            ok = obtained[key][0] >= floor
            print(f"{key} >= {floor}: {'pass' if ok else 'FAIL'}", file=stream)
            rows.append({"method": f"{key} >= {floor}", "status": "pass" if ok else "FAIL"})
    elapsed = time.perf_counter() - start
    print(f"elapsed {elapsed:.1f} s", file=stream)
    summary = {"example": eid, "bound": cert.bound, "rows": rows, "elapsed": elapsed}
    write_atomic(out / "comparison.json", _json(summary))
    return summary


def _row_order(key):
    order = ["Q-VN", "Q-VN+EP", "R-UNIF median", "R-UNIF best", "R-VN median", "R-VN best", "BKSF", "EXS"]
    return order.index(key) if key in order else len(order)


def _fmt(v):
    return "-" if v is None else f"{v:.4f}"


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    ids = instances.EXAMPLE_IDS if args.id == "all" else [args.id]
    for eid in ids:
        key = str(eid).lower().removeprefix("example")
        if key not in instances.EXAMPLE_IDS:
            raise InvalidProblem(f"unknown example {eid!r}; choose from {instances.EXAMPLE_IDS}")
        reproduce(key, out / f"example{key}" if len(ids) > 1 else out, args.seed, args.samples,
                  args.cap or REPRODUCE_CAP, args.rel_tol)
    return 0


# ------------------------------------------------------------------ parser


def _common(p, problem=True):
    if problem:
        p.add_argument("--config", help="JSON config with a problem spec")
        p.add_argument("--example", help="built-in example: " + ", ".join(instances.EXAMPLE_IDS))
        p.add_argument("--criterion", choices=["D", "A", "d", "a"])
        p.add_argument("--n", help="design size: INT, RANGE a..b or list a,b,c")
        p.add_argument("--kappa", help="virtual-noise scale, number or 'auto'")
        p.add_argument("--epsilon", type=float, help="lower weight bound (default 1e-6)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--cap", type=int, help="exhaustive-search combination cap")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="corrdesign", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal measure, certificate and optionally one exact method")
    _common(p)
    p.add_argument("--method", help="measure (default), certify, or a method tag such as Q-VN, BKSF, EXS")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bksf", help="exchange algorithm")
    _common(p)
    p.add_argument("--start", type=lambda s: [int(v) for v in s.split(",")], help="starting grid indices")
    p.add_argument("--no-bound", action="store_true", help="skip the measure and efficiency")
    p.set_defaults(func=cmd_bksf)

    p = sub.add_parser("extract", help="exact design from the optimal measure")
    _common(p)
    p.add_argument("--mode", choices=["plain", "with_endpoints", "random"], default="plain")
    p.add_argument("--measure", help="measure.csv to extract from instead of solving")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("exhaustive", help="exhaustive search over all n-subsets")
    _common(p)
    p.add_argument("--no-bound", action="store_true")
    p.set_defaults(func=cmd_exhaustive)

    p = sub.add_parser("certify", help="certificate for a measure, or re-check a designs.json")
    _common(p)
    p.add_argument("--design", help="designs.json to re-evaluate")
    p.add_argument("--measure", help="measure.csv to certify")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="efficiency versus n")
    _common(p)
    p.add_argument("--methods", default="qvn,qvnep,bksf,runif")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="run a built-in example and compare with its reference table")
    p.add_argument("id", help="example id (1, 1m, 2, 3s, 4, 5, exampleN) or 'all'")
    _common(p, problem=False)
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
