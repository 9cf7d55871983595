"""Command-line front end.

Subcommands: ``angles`` (principal angles of two planes), ``verify``
(structure report for a configured surface), ``construct`` (solve the
construction PDE for prescribed angles), ``deform`` (angles <-> (m, c)),
``example`` (generate and verify a catalog surface), ``export`` (convert a
saved solution grid).

Exit codes: 0 success, 2 parse error, 3 precondition violation, 4 numerical
degeneracy, 5 residual gate failure.  All angles are radians; degree-looking
input is rejected, never converted.  JSON output formats floats with 17
significant digits, so identical configurations produce byte-identical
reports.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import catalog, helix_construct as hc
from .expressions import EvalError, ParseError, parse_expr, scalar_jet_from_exprs
from .grassmann import (Plane, plane_angles_via_bivectors, plane_from_json,
                        plane_to_json, principal_angles)
from .surface_analysis import (FrameDiscontinuityError, ImmersionError,
                               default_gate, report_csv_rows, verify_helix,
                               write_obj)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PRECONDITION = 3
EXIT_DEGENERATE = 4
EXIT_GATE = 5

SOLUTION_FIELDS = ("f", "g", "fx", "fy", "gx", "gy")


# ---------------------------------------------------------------------------
# deterministic JSON
# ---------------------------------------------------------------------------

def dumps_stable(obj, indent: int = 0) -> str:
    """JSON with floats rendered at 17 significant digits (non-finite -> null)."""
    pad = " " * indent

    def render(o, depth):
        sp = " " * (depth * 2)
        spi = " " * ((depth + 1) * 2)
        if o is None:
            return "null"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            v = float(o)
            if not math.isfinite(v):
                return "null"
            return f"{v:.17g}"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, (list, tuple, np.ndarray)):
            items = [render(v, depth + 1) for v in o]
            return "[" + ", ".join(items) + "]"
        if isinstance(o, dict):
            items = [f"{spi}{json.dumps(str(k))}: {render(v, depth + 1)}"
                     for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + sp + "}"
        raise TypeError(f"cannot serialize {type(o)}")

    return pad + render(obj, 0) + "\n"


def _emit(obj, out: str | None) -> None:
    text = dumps_stable(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _radians_guard(name: str, value: float) -> float:
    if abs(value) > math.pi:
        raise CliError(EXIT_PRECONDITION,
                       f"{name} = {value} exceeds pi; angles are radians only "
                       "(degree input is rejected, not converted)")
    return value


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_PARSE, f"cannot read config {path}: {exc}") from exc


def _plane_from_arg(text: str, what: str) -> Plane:
    try:
        return plane_from_json(json.loads(text))
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_PARSE, f"{what}: invalid JSON: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_PRECONDITION, f"{what}: {exc}") from exc


def _single_var_data(expr_src: str, var_hint: str):
    """Parse phi/psi expressions of x and return numpy-vector evaluators."""
    try:
        expr = parse_expr(expr_src)
    except ParseError as exc:
        raise CliError(EXIT_PARSE, f"{var_hint}: {exc}") from exc
    if "y" in expr.variables():
        raise CliError(EXIT_PRECONDITION,
                       f"{var_hint} must be a function of x only")
    d1 = expr.diff("x")
    d2 = d1.diff("x")

    def vec(e):
        def ev(xs):
            xs = np.atleast_1d(np.asarray(xs, dtype=float))
            return np.array([e.eval(x=float(t)) for t in xs])
        return ev

    return vec(expr), vec(d1), vec(d2)


def _report_payload(report, gate: float, extra: dict | None = None) -> dict:
    payload = {"gate": gate, "angle_std": report.angle_std(),
               "helix_pass": report.helix_pass(gate)}
    if extra:
        payload.update(extra)
    payload["report"] = report.to_json_dict()
    return payload


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_angles(args) -> int:
    if args.config:
        cfg = _load_json(args.config)
        try:
            V = plane_from_json(cfg["V"])
            W = plane_from_json(cfg["W"])
        except KeyError as exc:
            raise CliError(EXIT_PARSE, f"config is missing plane {exc}")
        except ValueError as exc:
            raise CliError(EXIT_PRECONDITION, str(exc))
    elif args.v and args.w:
        V = _plane_from_arg(args.v, "--v")
        W = _plane_from_arg(args.w, "--w")
    else:
        raise CliError(EXIT_PARSE, "angles needs --config or both --v and --w")
    pa = principal_angles(V, W)
    theta, theta_perp = plane_angles_via_bivectors(V, W)
    _emit({"theta1": pa.theta1, "theta2": pa.theta2,
           "theta": theta, "theta_perp": theta_perp,
           "degenerate": pa.degenerate}, args.out)
    return EXIT_OK


def _surface_from_config(cfg: dict):
    """Build (patch, plane, meta) from a verify-config dictionary."""
    if "surface" in cfg:
        spec = dict(cfg["surface"])
        kind = spec.pop("kind", None)
        if kind is None:
            raise CliError(EXIT_PARSE, "surface config needs a 'kind'")
        try:
            cs = catalog.generate(kind, **spec)
        except (ValueError, TypeError) as exc:
            raise CliError(EXIT_PRECONDITION, f"surface: {exc}") from exc
        plane = cs.plane
        if "plane" in cfg:
            plane = plane_from_json(cfg["plane"])
        return cs.patch, plane, {"kind": kind,
                                 "expected": [cs.expected.theta1, cs.expected.theta2]}
    if "graph" in cfg:
        g = cfg["graph"]
        try:
            fe = parse_expr(g["f"])
            ge = parse_expr(g["g"])
        except KeyError as exc:
            raise CliError(EXIT_PARSE, f"graph config needs {exc}")
        except ParseError as exc:
            raise CliError(EXIT_PARSE, str(exc))
        dom = g.get("domain", [-1.0, 1.0, -1.0, 1.0])
        from .surface_analysis import graph_patch_from_jets
        patch = graph_patch_from_jets(scalar_jet_from_exprs(fe),
                                      scalar_jet_from_exprs(ge),
                                      (dom[0], dom[1]), (dom[2], dom[3]),
                                      name="graph")
        plane = plane_from_json(cfg["plane"]) if "plane" in cfg else \
            Plane(np.eye(4)[0], np.eye(4)[1])
        return patch, plane, {"kind": "graph", "f": g["f"], "g": g["g"]}
    raise CliError(EXIT_PARSE, "config needs a 'surface' or 'graph' entry")


def _cmd_verify(args) -> int:
    cfg = _load_json(args.config)
    patch, plane, meta = _surface_from_config(cfg)
    N, M = cfg.get("grid", [30, 30])
    grid_h = max((patch.u_range[1] - patch.u_range[0]) / max(N - 1, 1),
                 (patch.v_range[1] - patch.v_range[0]) / max(M - 1, 1))
    gate = float(cfg.get("gate", args.gate or default_gate(patch, grid_h)))
    try:
        report = verify_helix(patch, plane, (int(N), int(M)))
    except (ImmersionError, FrameDiscontinuityError) as exc:
        raise CliError(EXIT_DEGENERATE, str(exc))
    except (ValueError, EvalError) as exc:
        raise CliError(EXIT_PRECONDITION, str(exc))
    _emit(_report_payload(report, gate, meta), args.out)
    if args.csv:
        _write_csv_report(report, args.csv)
    return EXIT_OK if report.helix_pass(gate) else EXIT_GATE


def _cmd_example(args) -> int:
    try:
        cs = catalog.named_example(args.name)
    except ValueError as exc:
        raise CliError(EXIT_PRECONDITION, str(exc))
    N, M = args.grid
    grid_h = max((cs.patch.u_range[1] - cs.patch.u_range[0]) / max(N - 1, 1),
                 (cs.patch.v_range[1] - cs.patch.v_range[0]) / max(M - 1, 1))
    gate = args.gate if args.gate is not None else default_gate(cs.patch, grid_h)
    report = verify_helix(cs.patch, cs.plane, (N, M))
    meta = {"example": args.name,
            "plane": plane_to_json(cs.plane),
            "expected": [cs.expected.theta1, cs.expected.theta2],
            "spec": {k: v for k, v in cs.spec.items()
                     if isinstance(v, (int, float, str, bool))}}
    _emit(_report_payload(report, gate, meta), args.out)
    if args.obj:
        write_obj(args.obj, report.points)
    return EXIT_OK if report.helix_pass(gate) else EXIT_GATE


def _cmd_deform(args) -> int:
    try:
        if args.m is not None and args.c is not None:
            pa = hc.deform(args.m, args.c)
            _emit({"m": args.m, "c": args.c,
                   "theta1": pa.theta1, "theta2": pa.theta2}, args.out)
        elif args.theta1 is not None and args.theta2 is not None:
            _radians_guard("--theta1", args.theta1)
            _radians_guard("--theta2", args.theta2)
            m, c = hc.deform_inverse((args.theta1, args.theta2))
            _emit({"theta1": args.theta1, "theta2": args.theta2,
                   "m": m, "c": c}, args.out)
        else:
            raise CliError(EXIT_PARSE,
                           "deform needs --m with --c, or --theta1 with --theta2")
    except ValueError as exc:
        raise CliError(EXIT_PRECONDITION, str(exc))
    return EXIT_OK


def _write_csv_report(report, path: str) -> None:
    with open(path, "w") as fh:
        for row in report_csv_rows(report):
            fh.write(",".join(
                v if isinstance(v, str) else f"{v:.17g}" for v in row) + "\n")


def _solution_layers(sol: hc.SolutionGrid, m_scale: float):
    rs, cs = sol.rect()
    xs, ys = sol.x[cs], sol.y[rs]
    f = m_scale * sol.f[rs, cs]
    g = m_scale * sol.g[rs, cs]
    from .surface_analysis import fd_d1
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    layers = {
        "f": f, "g": g,
        "fx": fd_d1(f, hx, axis=1), "fy": fd_d1(f, hy, axis=0),
        "gx": fd_d1(g, hx, axis=1), "gy": fd_d1(g, hy, axis=0),
    }
    return xs, ys, layers


def _write_solution_bundle(prefix: str, sol: hc.SolutionGrid, m_scale: float,
                           params: hc.HelixParams) -> dict:
    """Binary dump + 8-field sidecar + CSV next to `prefix`."""
    xs, ys, layers = _solution_layers(sol, m_scale)
    stack = np.stack([layers[k] for k in SOLUTION_FIELDS])
    Path(prefix + ".bin").write_bytes(np.ascontiguousarray(stack).tobytes())
    sidecar = {
        "nx": int(xs.size),
        "ny": int(ys.size),
        "x0": float(xs[0]),
        "y0": float(ys[0]),
        "hx": float(xs[1] - xs[0]),
        "hy": float(ys[1] - ys[0]),
        "fields": list(SOLUTION_FIELDS),
        "dtype": "float64",
    }
    Path(prefix + ".meta.json").write_text(dumps_stable(sidecar))

    sec_sum, sec_prod = params.sec2_sum, params.sec2_prod
    with open(prefix + ".csv", "w") as fh:
        fh.write("x,y,f,g,fx,fy,gx,gy,residual_trace,residual_det\n")
        for j, yv in enumerate(ys):
            for i, xv in enumerate(xs):
                fx, fy = layers["fx"][j, i], layers["fy"][j, i]
                gx, gy = layers["gx"][j, i], layers["gy"][j, i]
                E = 1 + fx * fx + gx * gx
                F = fx * fy + gx * gy
                Gm = 1 + fy * fy + gy * gy
                vals = (xv, yv, layers["f"][j, i], layers["g"][j, i],
                        fx, fy, gx, gy,
                        E + Gm - sec_sum, E * Gm - F * F - sec_prod)
                fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")
    return sidecar


def _cmd_construct(args) -> int:
    cfg = _load_json(args.config) if args.config else {}

    if args.theta1 is not None or args.theta2 is not None:
        if args.theta1 is None or args.theta2 is None:
            raise CliError(EXIT_PARSE, "construct needs both --theta1 and --theta2")
        _radians_guard("--theta1", args.theta1)
        _radians_guard("--theta2", args.theta2)
        try:
            params = hc.HelixParams(args.theta1, args.theta2)
            m_scale, c_norm = hc.deform_inverse((args.theta1, args.theta2))
        except ValueError as exc:
            raise CliError(EXIT_PRECONDITION, str(exc))
    elif "c1" in cfg:
        c_norm = float(cfg["c1"])
        if c_norm <= 2:
            raise CliError(EXIT_PRECONDITION, "config c1 must exceed 2")
        m_scale = 1.0
        pa = hc.deform(1.0, c_norm)
        params = hc.HelixParams(pa.theta1, pa.theta2)
    else:
        raise CliError(EXIT_PARSE,
                       "construct needs --theta1/--theta2 or a config with c1")

    x_range = tuple(cfg.get("x", (args.x0, args.x1)))
    y_max = float(cfg.get("ymax", args.ymax))
    hx = float(cfg.get("hx", args.hx))
    hy = float(cfg.get("hy", args.hy))
    branch = int(cfg.get("branch", args.branch))

    custom_data = "phi" in cfg or "psi" in cfg
    seed_cfg = cfg.get("seed", "auto" if args.seed is None else args.seed)
    try:
        if seed_cfg == "auto":
            if custom_data:
                seed = hc.find_noncharacteristic_seed(c_norm, branch)
            else:
                # pick the best-scoring seed whose quadratic data actually
                # fits the requested window
                seed = hc.choose_feasible_seed(c_norm, x_range, y_max, hx, hy,
                                               args.curvature, branch)
        elif isinstance(seed_cfg, dict):
            seed = (float(seed_cfg["u0"]), float(seed_cfg["v0"]))
        else:
            u0, v0 = (float(t) for t in str(seed_cfg).split(","))
            seed = (u0, v0)
    except ValueError as exc:
        raise CliError(EXIT_DEGENERATE, f"seed scan failed: {exc}") from exc

    if custom_data:
        if not ("phi" in cfg and "psi" in cfg):
            raise CliError(EXIT_PARSE, "config must give both phi and psi")
        phi_v, phi_d1, phi_d2 = _single_var_data(cfg["phi"], "phi")
        psi_v, psi_d1, _ = _single_var_data(cfg["psi"], "psi")
        phi = lambda x: (phi_v(x), phi_d1(x), phi_d2(x))  # noqa: E731
        psi = lambda x: (psi_v(x), psi_d1(x))             # noqa: E731
    else:
        phi, psi = hc.paper_initial_data(seed[0], seed[1], args.curvature)

    try:
        prob = hc.PDEProblem(c_norm, x_range, y_max, hx, hy,
                             seed[0], seed[1], phi, psi, branch=branch)
        prob.validate()
    except ValueError as exc:
        raise CliError(EXIT_PRECONDITION, str(exc))

    try:
        sol = hc.recover_g(hc.solve_pde(prob))
        graph = hc.solution_graph(sol, m=m_scale)
    except (hc.SolverHalt, ValueError) as exc:
        raise CliError(EXIT_DEGENERATE, f"solver: {exc}") from exc

    xs, ys = graph.sample_grid()
    # residuals over the centered-difference interior; the outermost nodes
    # carry one-sided derivative closures whose larger constant is a property
    # of the edge stencil, not of the surface
    res_trace = res_det = dev_j = dev_n = 0.0
    for yv in ys[1:-1]:
        for xv in xs[1:-1]:
            rt, rd = hc.helix_condition_residual(graph, params, (xv, yv))
            res_trace = max(res_trace, abs(rt))
            res_det = max(res_det, abs(rd))
            _, fx, fy, _, _, _ = graph.f_jet(xv, yv)
            _, gx, gy, _, _, _ = graph.g_jet(xv, yv)
            dev_j = max(dev_j, abs(fx * gy - fy * gx - params.c2))
            dev_n = max(dev_n, abs(fx * fx + fy * fy + gx * gx + gy * gy - params.c1))
    gate = args.gate
    passed = max(res_trace, res_det, dev_j, dev_n) < gate

    header = {
        "theta1": params.theta1,
        "theta2": params.theta2,
        "c1": params.c1,
        "c2": params.c2,
        "c_normalized": c_norm,
        "m": m_scale,
        "branch": branch,
        "seed": {"u0": seed[0], "v0": seed[1]},
        "hx": hx, "hy": hy,
        "x_window": [float(xs[0]), float(xs[-1])],
        "y_window": [float(ys[0]), float(ys[-1])],
        "termination": {"up": sol.termination_up, "down": sol.termination_down},
        "max_loop_defect": float(np.nanmax(np.abs(sol.loop_defect))),
        "residuals": {"helix_trace": res_trace, "helix_det": res_det,
                      "symplecto_det": dev_j, "symplecto_norm": dev_n},
        "gate": gate,
        "passed": passed,
    }

    if args.verify:
        report = verify_helix(graph.patch(), catalog.PI_12, (xs.size, ys.size))
        header["verify"] = report.to_json_dict()

    _emit(header, args.out)
    if args.save:
        _write_solution_bundle(args.save, sol, m_scale, params)
    return EXIT_OK if passed else EXIT_GATE


def _cmd_export(args) -> int:
    meta_path = Path(args.grid + ".meta.json")
    bin_path = Path(args.grid + ".bin")
    if not meta_path.exists() or not bin_path.exists():
        raise CliError(EXIT_PARSE,
                       f"no saved grid at {args.grid} (.bin/.meta.json missing)")
    meta = json.loads(meta_path.read_text())
    fields = meta["fields"]
    nx, ny = int(meta["nx"]), int(meta["ny"])
    data = np.frombuffer(bin_path.read_bytes(), dtype=np.float64)
    data = data.reshape(len(fields), ny, nx)
    xs = meta["x0"] + meta["hx"] * np.arange(nx)
    ys = meta["y0"] + meta["hy"] * np.arange(ny)
    layers = dict(zip(fields, data))

    if args.format == "csv":
        with open(args.out, "w") as fh:
            fh.write("x,y," + ",".join(fields) + "\n")
            for j in range(ny):
                for i in range(nx):
                    vals = [xs[i], ys[j]] + [layers[k][j, i] for k in fields]
                    fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")
    elif args.format == "json":
        _emit({"meta": meta, "x": list(xs), "y": list(ys),
               "fields": {k: [list(row) for row in layers[k]] for k in fields}},
              args.out)
    elif args.format == "obj":
        names = args.coords.split(",")
        allowed = {"x": 0, "y": 1, "f": 2, "g": 3}
        if len(names) != 3 or any(n not in allowed for n in names):
            raise CliError(EXIT_PARSE,
                           "--coords must be three of x,y,f,g (comma separated)")
        pts = np.empty((nx, ny, 4))
        for i in range(nx):
            for j in range(ny):
                pts[i, j] = (xs[i], ys[j], layers["f"][j, i], layers["g"][j, i])
        write_obj(args.out, pts, tuple(allowed[n] for n in names))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="helix4",
        description="constant principal-angle surfaces in R^4: angles, "
                    "verification, PDE construction, deformation, examples")
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("angles", help="principal angles between two planes")
    pa.add_argument("--config", help="JSON file with planes V and W")
    pa.add_argument("--v", help="plane V as inline JSON")
    pa.add_argument("--w", help="plane W as inline JSON")
    pa.add_argument("--out")
    pa.set_defaults(func=_cmd_angles)

    pv = sub.add_parser("verify", help="structure report for a configured surface")
    pv.add_argument("--config", required=True)
    pv.add_argument("--gate", type=float)
    pv.add_argument("--csv", help="also write per-point samples as CSV")
    pv.add_argument("--out")
    pv.set_defaults(func=_cmd_verify)

    pc = sub.add_parser("construct", help="solve the construction PDE")
    pc.add_argument("--theta1", type=float)
    pc.add_argument("--theta2", type=float)
    pc.add_argument("--config", help="JSON: {c1, x, ymax, hx, hy, seed, phi, psi}")
    pc.add_argument("--x0", type=float, default=-0.05)
    pc.add_argument("--x1", type=float, default=0.05)
    pc.add_argument("--ymax", type=float, default=0.006)
    pc.add_argument("--hx", type=float, default=1e-3)
    pc.add_argument("--hy", type=float, default=1e-3)
    pc.add_argument("--seed", help='"u0,v0" (default: auto scan)')
    pc.add_argument("--curvature", type=float, default=1.0,
                    help="phi''(x)/2 of the default quadratic data")
    pc.add_argument("--branch", type=int, choices=(1, -1), default=1,
                    help="sign of the sqrt branch (-1 gives the mirror surface)")
    pc.add_argument("--gate", type=float, default=1e-3,
                    help="residual gate for self-verification")
    pc.add_argument("--verify", action="store_true",
                    help="attach a full structure report")
    pc.add_argument("--save", help="prefix for .bin/.meta.json/.csv outputs")
    pc.add_argument("--out")
    pc.set_defaults(func=_cmd_construct)

    pd = sub.add_parser("deform", help="convert (m, c) <-> (theta1, theta2)")
    pd.add_argument("--m", type=float)
    pd.add_argument("--c", type=float)
    pd.add_argument("--theta1", type=float)
    pd.add_argument("--theta2", type=float)
    pd.add_argument("--out")
    pd.set_defaults(func=_cmd_deform)

    pe = sub.add_parser("example", help="generate and verify a catalog surface")
    pe.add_argument("name", choices=catalog.EXAMPLE_NAMES)
    pe.add_argument("--grid", type=int, nargs=2, default=(30, 30))
    pe.add_argument("--gate", type=float)
    pe.add_argument("--obj", help="write the sampled grid as an OBJ mesh")
    pe.add_argument("--out")
    pe.set_defaults(func=_cmd_example)

    px = sub.add_parser("export", help="convert a saved solution grid")
    px.add_argument("--grid", required=True, help="prefix used with construct --save")
    px.add_argument("--format", choices=("csv", "json", "obj"), required=True)
    px.add_argument("--coords", default="x,y,f",
                    help="OBJ projection coordinates (three of x,y,f,g)")
    px.add_argument("--out", required=True)
    px.set_defaults(func=_cmd_export)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ImmersionError, FrameDiscontinuityError, hc.SolverHalt) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
