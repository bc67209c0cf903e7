"""Command-line front end: ``lawson-dpw <subcommand> ...``.

Machine-readable results go to stdout as JSON, human summaries to stderr.
Exit codes: 0 ok, 2 usage or input error, 3 numeric failure, 4 no convergence.
"""

import argparse
import csv
import json
import logging
import sys
import time
import xml.etree.ElementTree as ET

import numpy as np

from . import fuchsian as fu
from . import monodromy as mo
from . import potential as po
from . import solver as so
from . import surface as su
from .errors import InputError, LawsonError, NoConvergence, NumericError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_NOCONV = 0, 2, 3, 4

log = logging.getLogger("lawson_dpw")


class UsageError(InputError):
    pass


def _say(msg):
    print(msg, file=sys.stderr)


def _emit(obj):
    json.dump(obj, sys.stdout, indent=1, default=_json_default)
    sys.stdout.write("\n")


def _json_default(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _fmt(z, digits=6):
    z = complex(z)
    if not np.isfinite(abs(z)):
        return "inf"
    if abs(z.imag) < 10 ** -digits * max(1.0, abs(z)):
        return f"{z.real:.{digits}g}"
    return f"{z.real:.{digits}g}{z.imag:+.{digits}g}i"


def _positive(kind):
    def parse(s):
        v = kind(s)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"{s} must be positive")
        return v
    return parse


# ---------------------------------------------------------------- subcommands

def cmd_moduli(args):
    sys_ = fu.FuchsianSystem.from_json(_load_json(args.system))
    out = {"normalization": sys_.punctures.normalization, "rho": sys_.rho}
    if sys_.punctures.normalization != "Z":
        sys_ = fu.mobius_change(sys_, "Z")
    par = fu.parabolic_structure(sys_)
    cls = fu.stability(par, args.tol)
    out["stability"] = cls.value
    if cls is fu.StabilityClass.Stable:
        u, s, _ = fu.coordinates_us(sys_)
        out.update(u=u, s=s)
        summary = f"{cls.value}, u={_fmt(u)}, s={_fmt(s)}"
    else:
        u = fu.modulus_u(sys_, lenient=True, threshold=args.tol)
        out.update(u=u if np.isfinite(abs(u)) else "inf", lenient=True)
        summary = f"{cls.value}, u→{_fmt(u)} (lenient)"
    ok, D, C = fu.check_symmetric(sys_)
    out["symmetric"] = bool(ok)
    if D is not None:
        out["D"] = D
    if C is not None:
        out["C"] = C
    _say(summary + (", symmetric" if ok else ", not symmetric"))
    _emit(out)
    return EXIT_OK


def cmd_monodromy(args):
    doc = _load_json(args.system)
    if isinstance(doc, dict) and "a" in doc:
        if args.lam is None:
            raise UsageError("a potential file needs --lambda")
        sys_ = po.residues_from_eta(po.PotentialCoefficients.from_json(doc), args.lam)
    else:
        sys_ = fu.FuchsianSystem.from_json(doc)
    rep = mo.monodromy_rep(sys_, rtol=args.rtol)
    defect, sign = rep.relation_defect()
    uni = mo.unitarize(rep, tol=args.tol)
    out = rep.to_json()
    out.update(relation_defect=defect, relation_sign=sign, unitarizable=uni.present,
               unitarize_residual=uni.residual)
    if uni.present:
        out["metric"] = uni.metric.H
    _say(f"relation defect {defect:.2e}; unitarizable: {uni.present} (residual {uni.residual:.2e})")
    _emit(out)
    return EXIT_OK


def _coeffs_from_args(args):
    items = list(args.coeffs)
    if items and items[0] == "check":
        items.pop(0)
    if len(items) > 1:
        raise UsageError("give at most one coefficient file")
    if items:
        return po.PotentialCoefficients.from_json(_load_json(items[0]))
    if args.seed_t is not None:
        return po.first_order_seed(args.seed_t, args.N)
    raise UsageError("give a coefficient file or --seed-t")


def cmd_potential(args):
    c = _coeffs_from_args(args)
    dd, dt = po.check_symmetries(c)
    out = {"t": c.t, "N": c.N, "quadric": po.check_quadric(c), "nilpotent_residue": po.check_nilpotent_residue(c),
           "delta_symmetry": dd, "tau_symmetry": dt}
    if args.residual:
        cfg = so.ClosingConfig(N=c.N, m=max(8, c.N + 4))
        out["closing_residual"] = float(np.linalg.norm(so.closing_residual(c, cfg)))
    _say(", ".join(f"{k} {v:.2e}" for k, v in out.items() if isinstance(v, float) and k != "t"))
    _emit(out)
    return EXIT_OK


def _write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "residual", "iterations"])
        for row in trace:
            w.writerow(row)


def cmd_solve(args):
    if (args.genus is None) == (args.t is None):
        raise UsageError("give exactly one of --genus and --t")
    t = po.t_from_genus(args.genus) if args.genus is not None else args.t
    if not (0 < t <= 0.25):
        raise UsageError(f"t = {t} outside (0, 1/4]")
    cfg = so.ClosingConfig(N=args.N, N_max=max(args.N_max, args.N), m=max(args.m, args.N + 2),
                           newton_tol=args.tol, threads=args.threads)
    t0 = min(args.t_start, t)
    trace_path = args.trace or (args.out + ".trace.csv" if args.out else None)

    def progress(r):
        _say(f"t={r.coeffs.t:.6f} N={r.coeffs.N} residual={r.residual_norm:.2e} iterations={r.newton_iterations}")

    try:
        results = so.continue_in_t(t0, t, cfg, progress)
    except NoConvergence as exc:
        trace = getattr(exc, "trace", [])
        if trace_path:
            _write_trace(trace_path, trace)
        reached = trace[-1][0] if trace else None
        _say(f"no convergence: {exc}")
        _emit({"converged": False, "t_target": t, "t_reached": reached, "message": str(exc)})
        return EXIT_NOCONV
    res = results[-1]
    trace = [row for r in results for row in r.continuation_trace[-1:]]
    if args.out:
        res.coeffs.save(args.out, residual=res.residual_norm, guard_residual=res.guard_residual)
    if trace_path:
        _write_trace(trace_path, trace)
    _emit({"converged": True, "t": t, "N": res.coeffs.N, "residual": res.residual_norm,
           "guard_residual": res.guard_residual, "out": args.out})
    return EXIT_OK


def cmd_area(args):
    val = so.area_series(args.t)
    out = {"t": args.t, "series": val}
    _say(f"series area {val:.6f}")
    if args.mesh:
        mesh, header = su.mesh_from_obj(args.mesh)
        area = su.numeric_area(mesh)
        if "area" in header:
            out["header_area"] = float(header["area"])
        out.update(mesh_area=area, relative_gap=abs(area - val) / val)
        _say(f"mesh area {area:.6f}, relative gap {out['relative_gap']:.2e}")
    _emit(out)
    return EXIT_OK


def cmd_surface(args):
    if args.fixture:
        n = args.n_theta
        mesh = su.great_sphere_mesh(n) if args.fixture == "sphere" else su.clifford_torus_mesh(2 * n)
        area = su.numeric_area(mesh)
        out = {"fixture": args.fixture, "area": area, "euler_characteristic": mesh.euler_characteristic()}
        if args.out:
            su.export_obj(mesh, args.out, area=area)
        _emit(out)
        return EXIT_OK
    path = args.coeffs_file or args.coeffs
    if not path:
        raise UsageError("give a coefficient file or --fixture")
    c = po.PotentialCoefficients.from_json(_load_json(path))
    data = su.spectral_data(c, K=args.K)
    if args.refine is not None:
        n_rings, n_theta = 6 * 2 ** args.refine, 12 * 2 ** args.refine
    else:
        n_rings, n_theta = args.n_rings, args.n_theta
    lv = ((n_rings // 2, n_theta // 2), (n_rings, n_theta))
    area, areas, pieces = su.surface_area(data, levels=lv, with_meshes=True)
    out = {"t": c.t, "area": area, "area_levels": areas, "series": so.area_series(c.t)}
    try:
        g = po.genus_from_t(c.t)
    except InputError:
        g = None
    out["genus"] = g
    if g is not None:
        mesh = su.extend_by_symmetry(pieces[-1], data)
        out.update(euler_characteristic=mesh.euler_characteristic(), boundary_edges=mesh.boundary_edge_count(),
                   symmetry_order=mesh.symmetry_order, vertices=len(mesh.vertices), faces=len(mesh.triangles))
        if args.out:
            su.export_obj(mesh, args.out, t=c.t, genus=g, area=area)
    elif args.out:
        su.export_obj(pieces[-1], args.out, t=c.t, area=area)
    if args.cone:
        out["cone_angle"] = su.cone_angle_at_puncture(data, 0)[0]
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "area_mesh", "area_series"])
            w.writerow([c.t, area, out["series"]])
    _say(f"area {area:.6f} (series {out['series']:.6f})" + (f", genus {g}, chi {out['euler_characteristic']}" if g else ""))
    _emit(out)
    return EXIT_OK


# ---------------------------------------------------------------- property suites

def _suite_loopalg(rng, tol):
    from .loopalg import LaurentScalar
    for _ in range(20):
        p = LaurentScalar(rng.normal(size=5) + 1j * rng.normal(size=5), -2)
        q = LaurentScalar(rng.normal(size=4) + 1j * rng.normal(size=4), -1)
        lam = np.exp(1j * rng.uniform(0, 2 * np.pi))
        yield "product_eval", abs((p * q).eval(lam) - p.eval(lam) * q.eval(lam)), tol(1e-12)


def _suite_fuchsian(rng, tol):
    for _ in range(20):
        rho = rng.uniform(0.02, 0.23)
        sys_, u, s = fu.random_stable_system(rng, rho)
        u2, s2, _ = fu.coordinates_us(sys_)
        yield "us_roundtrip", abs(u2 - u) + abs(s2 - s), tol(1e-9)
        A = fu.normal_form_residues(u, rho)
        yield "residue_sum", float(np.abs(A.sum(axis=0)).max()), tol(1e-12)
        ev = np.linalg.eigvals(A)
        yield "eigenvalues", float(np.abs(np.sort(ev.real, axis=1) - [-rho, rho]).max()), tol(1e-12)


def _suite_monodromy(rng, tol):
    for _ in range(3):
        rho = rng.uniform(0.05, 0.2)
        sys_, _, _ = fu.random_stable_system(rng, rho)
        rep = mo.monodromy_rep(sys_)
        tr = rep.traces()
        yield "local_traces", float(np.abs(tr - 2 * np.cos(2 * np.pi * rho)).max()), tol(1e-7)
        yield "relation", rep.relation_defect()[0], tol(1e-7)
    for _ in range(5):
        U = []
        for _ in range(4):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            U.append(np.array([[q[0] + 1j * q[1], -q[2] + 1j * q[3]], [q[2] + 1j * q[3], q[0] - 1j * q[1]]]))
        g = fu.random_sl2(rng)
        rep = mo.MonodromyRep(np.linalg.inv(g) @ np.array(U) @ g)
        res = mo.unitarize(rep)
        yield "unitarize_present", 0.0 if res.present else np.inf, tol(1e-10)
        H = g.conj().T @ g
        H = H / np.sqrt(np.linalg.det(H).real)
        Hr = res.metric.H / np.sqrt(np.linalg.det(res.metric.H).real)
        yield "unitarize_metric", float(np.abs(Hr - H).max() / np.abs(H).max()), tol(1e-6)


def _suite_potential(rng, tol):
    for _ in range(5):
        t = rng.uniform(0.01, 0.25)
        c = po.first_order_seed(t, 4)
        yield "seed_quadric", po.check_quadric(c), tol(1e-14)
        yield "nilpotent_residue", po.check_nilpotent_residue(c), tol(1e-14)
        dd, dt = po.check_symmetries(c)
        yield "symmetries", max(dd, dt), tol(1e-12)
        sys_ = po.residues_from_eta(c, np.exp(1j * rng.uniform(0, 2 * np.pi)))
        yield "residue_weights", float(np.abs(np.linalg.eigvals(sys_.residues).real.max(axis=1) - t).max()), tol(1e-12)


def _suite_solver(rng, tol):
    t = float(rng.uniform(0.005, 0.015))
    cfg = so.ClosingConfig(N=6)
    res = so.solve_at_t(t, None, cfg)
    yield "closing_residual", res.residual_norm, tol(1e-8)
    yield "quadric", po.check_quadric(res.coeffs), tol(1e-8)
    yield "nilpotent_residue", po.check_nilpotent_residue(res.coeffs), tol(1e-12)
    dd, dt = po.check_symmetries(res.coeffs)
    yield "symmetries", max(dd, dt), tol(1e-12)


def _suite_surface(rng, tol):
    yield "sphere_area", abs(su.richardson_area(su.great_sphere_mesh, 32) - 4 * np.pi), tol(1e-3)
    yield "clifford_area", abs(su.richardson_area(su.clifford_torus_mesh, 64) - 2 * np.pi ** 2), tol(1e-3)
    yield "clifford_chi", abs(su.clifford_torus_mesh(16).euler_characteristic()), tol(0.5)
    V = rng.normal(size=(50, 4))
    V /= np.linalg.norm(V, axis=1)[:, None]
    X, pole = su.stereographic(V)
    yield "stereographic_roundtrip", float(np.abs(su.inverse_stereographic(X, pole) - V).max()), tol(1e-12)


SUITES = {
    "loopalg": _suite_loopalg,
    "fuchsian": _suite_fuchsian,
    "monodromy": _suite_monodromy,
    "potential": _suite_potential,
    "solver": _suite_solver,
    "surface": _suite_surface,
}


def run_suites(seed=0, filt=None, tol_override=None):
    """Run the property suites; returns a list of ``(suite, name, error, tol, passed, seconds)``."""
    names = [n for n in SUITES if not filt or any(f in n for f in filt)]
    if not names:
        raise UsageError(f"no suite matches {filt}")

    def tol(default):
        return tol_override if tol_override is not None else default

    rows = []
    for i, n in enumerate(names):
        rng = np.random.default_rng([seed, i])
        T = time.perf_counter()
        try:
            for name, err, tl in SUITES[n](rng, tol):
                rows.append((n, name, float(err), tl, bool(err <= tl), time.perf_counter() - T))
                T = time.perf_counter()
        except LawsonError as exc:
            rows.append((n, f"error:{type(exc).__name__}", np.inf, 0.0, False, time.perf_counter() - T))
    return rows


def junit_report(rows):
    root = ET.Element("testsuites")
    for suite in dict.fromkeys(r[0] for r in rows):
        sub = [r for r in rows if r[0] == suite]
        el = ET.SubElement(root, "testsuite", name=suite, tests=str(len(sub)),
                           failures=str(sum(not r[4] for r in sub)))
        for k, (_, name, err, tl, ok, dt) in enumerate(sub):
            case = ET.SubElement(el, "testcase", classname=suite, name=f"{name}[{k}]", time=f"{dt:.4f}")
            if not ok:
                ET.SubElement(case, "failure", message=f"error {err:.3e} exceeds {tl:.1e}")
    return ET.tostring(root, encoding="unicode")


def cmd_check(args):
    rows = run_suites(args.seed, args.filter, args.tol)
    xml = junit_report(rows)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(xml + "\n")
    else:
        sys.stdout.write(xml + "\n")
    failed = [r for r in rows if not r[4]]
    _say(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    for r in failed:
        _say(f"FAIL {r[0]}.{r[1]}: error {r[2]:.3e} > {r[3]:.1e}")
    return EXIT_OK if not failed else EXIT_NUMERIC


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="lawson-dpw", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=_positive(int), default=None,
                   help="worker threads (default: $LAWSON_DPW_THREADS or the CPU count)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("moduli", help="stability, modulus and coordinates of a Fuchsian system")
    s.add_argument("system")
    s.add_argument("--tol", type=_positive(float), default=1e-8)
    s.set_defaults(func=cmd_moduli)

    s = sub.add_parser("monodromy", help="monodromy representation and unitarizability")
    s.add_argument("system")
    s.add_argument("--rtol", type=_positive(float), default=1e-10)
    s.add_argument("--tol", type=_positive(float), default=1e-8)
    s.add_argument("--lambda", dest="lam", type=complex, help="spectral value when the input is a potential file")
    s.set_defaults(func=cmd_monodromy)

    s = sub.add_parser("potential", help="validate potential coefficients")
    s.add_argument("coeffs", nargs="*", metavar="[check] coeffs", help="coefficient file")
    s.add_argument("--seed-t", type=_positive(float), help="use the first-order seed at this t")
    s.add_argument("--N", type=_positive(int), default=6)
    s.add_argument("--residual", action="store_true", help="also evaluate the closing residual")
    s.set_defaults(func=cmd_potential)

    s = sub.add_parser("solve", help="solve the monodromy problem by continuation in t")
    s.add_argument("--genus", type=int)
    s.add_argument("--t", type=float)
    s.add_argument("--N", type=_positive(int), default=6)
    s.add_argument("--N-max", type=int, default=48)
    s.add_argument("--m", type=_positive(int), default=8)
    s.add_argument("--tol", type=_positive(float), default=1e-9)
    s.add_argument("--t-start", type=_positive(float), default=0.01)
    s.add_argument("--out", help="coefficient file (JSON)")
    s.add_argument("--trace", help="continuation trace (CSV); defaults to OUT.trace.csv")
    s.add_argument("--config", help="JSON file with defaults for these flags (keys as in the flag names)")
    s.set_defaults(func=cmd_solve)
    p.solve_parser = s

    s = sub.add_parser("area", help="area series and mesh comparison")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--mesh", help="OBJ mesh to compare")
    s.set_defaults(func=cmd_area)

    s = sub.add_parser("surface", help="reconstruct the surface and export an OBJ")
    s.add_argument("coeffs", nargs="?")
    s.add_argument("--coeffs", dest="coeffs_file", help="coefficient file (alternative to the positional)")
    s.add_argument("--fixture", choices=("sphere", "clifford"))
    s.add_argument("--out")
    s.add_argument("--csv", help="write t, mesh area and series area as CSV")
    s.add_argument("--refine", type=int, help="refinement level k: 6*2^k rings, 12*2^k angles")
    s.add_argument("--K", type=_positive(int), default=64, help="spectral grid size")
    s.add_argument("--n-rings", type=_positive(int), default=24)
    s.add_argument("--n-theta", type=_positive(int), default=48)
    s.add_argument("--cone", action="store_true", help="also estimate the cone angle at p1")
    s.set_defaults(func=cmd_surface)

    s = sub.add_parser("check", help="randomized property suites (JUnit XML report)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--filter", action="append", help="run only suites containing this string")
    s.add_argument("--tol", type=_positive(float), default=None, help="override every tolerance")
    s.add_argument("--report", help="write the XML report here instead of stdout")
    s.set_defaults(func=cmd_check)
    return p


def _apply_config(parser, path):
    """Use the keys of a JSON file as defaults of the solve flags; explicit flags still win."""
    conf = _load_json(path)
    s = parser.solve_parser
    known = {a.dest for a in s._actions}
    if not isinstance(conf, dict):
        raise UsageError(f"{path}: expected a JSON object")
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    bad = sorted(set(conf) - known - {"config"})
    if bad:
        raise UsageError(f"{path}: unknown keys {bad}")
    conf.pop("config", None)
    s.set_defaults(**conf)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            _apply_config(parser, args.config)
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    except InputError as exc:
        _say(f"input error: {exc}")
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads is None:
        args.threads = so.default_threads()
    if args.command == "surface" and (args.n_theta % 4 or (args.refine is not None and args.refine < 0)):
        _say("--n-theta must be a multiple of 4 and --refine nonnegative")
        return EXIT_INPUT
    try:
        return args.func(args)
    except NoConvergence as exc:
        _say(f"no convergence: {exc}")
        return EXIT_NOCONV
    except InputError as exc:
        _say(f"input error: {exc}")
        return EXIT_INPUT
    except (NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _say(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except LawsonError as exc:
        _say(f"error: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
