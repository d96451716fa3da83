"""Command line front end: coefficient checks, convergence studies, optimal solves."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import analysis
from .config import ConfigError, load_config
from .integrate import SolverError, dump_trajectory
from .optimize import write_trace
from .problem import Grid
from .triplets import build_triplet, dump_coefficients, known_triplets, load_coefficients

log = logging.getLogger("peerocp")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

# structural properties that only the self-adjoint triplet has
_SELF_ADJOINT_ONLY = ("flip", "lsrk_adjoint")


# -- helpers -----------------------------------------------------------------------

def _resolve_triplet(spec):
    """Triplet from a registered id or a coefficient file written by dump-coeffs."""
    if spec in known_triplets():
        return build_triplet(spec)
    if os.path.exists(spec):
        try:
            return load_coefficients(spec)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read coefficient file {spec}: {exc}") from exc
    raise ConfigError(f"unknown triplet {spec!r}; known: {', '.join(known_triplets())}")


def write_table(path, comment, header, rows):
    """CSV with one ``#`` comment line (units, triplet, config hash) and a header row."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=_json_default, sort_keys=True)
        fh.write("\n")
    return path


def _out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


# -- verify ----------------------------------------------------------------------

def verify_report(T, seed=None):
    """All coefficient checks for one triplet; returns ``(report, failures)``."""
    lo, hi = T.sigma_range
    sigmas = [lo, 1.0, hi, 0.5 * (lo + hi)]
    if seed is not None:
        rng = np.random.default_rng(seed)
        sigmas += list(rng.uniform(lo, hi, 8))
    fails = []
    order = {}
    for sg in sigmas:
        r = analysis.verify_order_conditions(T, sg)
        order[f"{sg:.6g}"] = r
        for key, val in r.items():
            if key != "max" and val > 1e-10:
                fails.append(f"order condition '{key}' violated at sigma={sg:.4g} (residual {val:.3e})")
    struct = analysis.verify_structure(T)
    self_adj = T.grid_class == "general"
    for key, item in struct.items():
        expect = self_adj if key in _SELF_ADJOINT_ONLY else True
        if bool(item["ok"]) != expect:
            fails.append(f"structure check '{key}' is {item['ok']}, expected {expect}")
    consts = analysis.error_constants(T)
    zs = {f"{sg:.4g}": analysis.zero_stability_norm(T, sg)._asdict() for sg in np.linspace(lo, hi, 9)}
    if T.W is not None:
        worst = max(v["value"] for v in zs.values())
        if abs(worst - 1.0) > 1e-10:
            fails.append(f"zero-stability norm {worst:.12g} differs from 1")
    passed, worst = analysis.stability_scan(T, T.alpha_deg)
    if not passed:
        fails.append(f"A(alpha) scan failed at alpha={T.alpha_deg} (max radius {worst:.6g})")
    contr = {w: analysis.contraction_factors(T, w)._asdict() for w in ("start", "end")}
    report = {
        "triplet": T.name,
        "grid_class": T.grid_class,
        "alpha_deg": T.alpha_deg,
        "sigma_range": list(T.sigma_range),
        "order_conditions": order,
        "structure": struct,
        "error_constants": consts,
        "zero_stability": zs,
        "stability_scan": {"passed": passed, "max_radius": worst},
        "contraction": contr,
        "failures": fails,
        "passed": not fails,
    }
    return report, fails


def cmd_verify(args):
    specs = known_triplets() if args.triplet in (None, "all") else [args.triplet]
    out = _out(args)
    status = EXIT_OK
    for spec in specs:
        T = _resolve_triplet(spec)
        report, fails = verify_report(T, args.seed)
        path = _write_json(os.path.join(out, f"verify_{T.name}.json"), report)
        if fails:
            status = EXIT_FAIL
            for f in fails:
                print(f"FAIL {T.name}: {f}")
        else:
            c0 = report["contraction"]["start"]
            print(f"PASS {T.name}: alpha={T.alpha_deg} grid_class={T.grid_class} "
                  f"rho_R,0={c0['rho_real']:.4f} report={path}")
    return status


def cmd_dump_coeffs(args):
    out = _out(args)
    specs = known_triplets() if args.triplet in (None, "all") else [args.triplet]
    for spec in specs:
        T = _resolve_triplet(spec)
        path = os.path.join(out, f"coeffs_{T.name}.json")
        dump_coefficients(T, path)
        print(path)
    return EXIT_OK


# -- runs ------------------------------------------------------------------------

def _load(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.triplet:
        if args.triplet not in known_triplets():
            raise ConfigError(f"unknown triplet {args.triplet!r}")
        cfg.triplet = args.triplet
        cfg.raw = dict(cfg.raw, triplet=args.triplet)
    return cfg


def _stem(kind, cfg, N, grid_kind):
    return f"{kind}_{cfg.problem}_{cfg.triplet}_N{N}_{grid_kind}_{cfg.hash}.csv"


def _comment(cfg, units):
    return f"peerocp problem={cfg.problem} triplet={cfg.triplet} config={cfg.hash} units: {units}"


def _read_grid(path):
    """Grid nodes from the first column of a CSV (``#`` comments and a header allowed)."""
    try:
        with open(path) as fh:
            rows = [ln.split(",")[0].strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        if rows and rows[0] == "t":
            rows = rows[1:]
        return Grid(np.array([float(x) for x in rows]))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read grid file {path}: {exc}") from exc


def cmd_convergence(args):
    from .benchmarks import build_problem
    from .workflows import adapt_grid, heat_errors, pairwise_orders, fitted_order, run_optimizer

    cfg = _load(args)
    if cfg.problem != "heat1d":
        raise ConfigError("convergence studies need the exact solution of heat1d")
    out = _out(args)
    prob = build_problem(cfg)
    tol = cfg.optimizer["tol"]
    failed = False
    table = {"uniform": [], "adapt": []}
    for N in cfg.N:
        steps = N + 1
        row_u = row_a = None
        try:
            g = Grid.uniform(prob.T, steps)
            rep = run_optimizer(prob, cfg.triplet, g, tol=tol, max_iters=cfg.optimizer["max_iters"],
                                method=cfg.optimizer["method"])
            row_u = heat_errors(prob, cfg.triplet, rep.solution, rep.U)
            if cfg.grid == "adapt":
                new, dens, er = adapt_grid(prob, cfg.triplet, rep.solution, steps, **cfg.adapt)
                rep2 = run_optimizer(prob, cfg.triplet, new, tol=tol,
                                     max_iters=cfg.optimizer["max_iters"],
                                     method=cfg.optimizer["method"])
                row_a = heat_errors(prob, cfg.triplet, rep2.solution, rep2.U)
                row_a.update(sigma_min=er.metrics["sigma_min"], sigma_max=er.metrics["sigma_max"],
                             eta_max=er.metrics["eta_max"])
        except SolverError as exc:
            failed = True
            log.error("N=%d: %s", N, exc)
            print(f"row N={N} aborted: {exc}")
        table["uniform"].append((steps, row_u))
        if cfg.grid == "adapt":
            table["adapt"].append((steps, row_a))
    summary = {"config": cfg.hash, "triplet": cfg.triplet}
    for kind, rows in table.items():
        if not rows:
            continue
        good = [(s, r) for s, r in rows if r is not None]
        out_rows = []
        orders = {}
        for key in ("u", "yT", "p0"):
            if len(good) >= 2:
                orders[key] = [None] + list(pairwise_orders([s for s, _ in good], [r[key] for _, r in good]))
                summary[f"{kind}_order_{key}"] = fitted_order([s for s, _ in good], [r[key] for _, r in good])
        idx = {s: i for i, (s, _) in enumerate(good)}
        for steps, r in rows:
            if r is None:
                out_rows.append([steps - 1, steps, "failed", "", "", "", "", ""])
                continue
            i = idx[steps]
            o = [orders[k][i] if k in orders and orders[k][i] is not None else "" for k in ("u", "yT", "p0")]
            out_rows.append([steps - 1, steps, r["u"], r["yT"], r["p0"], *o])
        path = os.path.join(out, _stem("errors", cfg, "-".join(map(str, cfg.N)), kind))
        write_table(path, _comment(cfg, "max-norm errors; orders are log error ratios over log step ratios"),
                    ["N", "steps", "err_u", "err_yT", "err_p0", "order_u", "order_yT", "order_p0"],
                    out_rows)
        print(path)
    if table["adapt"]:
        ratios = [ru["u"] / ra["u"] for (s, ru), (_, ra) in zip(table["uniform"], table["adapt"])
                  if ru is not None and ra is not None]
        summary["adapt_improvement_u"] = ratios
    _write_json(os.path.join(out, f"convergence_{cfg.hash}.json"), summary)
    for k, v in summary.items():
        print(f"{k}: {v}")
    return EXIT_SOLVER if failed else EXIT_OK


def _solve_once(cfg, prob, grid, U0=None, dump_limit=None, out=".", N=0, grid_kind="uniform"):
    from .workflows import run_optimizer
    rep = run_optimizer(prob, cfg.triplet, grid, U0=U0, tol=cfg.optimizer["tol"],
                        max_iters=cfg.optimizer["max_iters"], method=cfg.optimizer["method"])
    files = []
    if "trace" in cfg.outputs:
        path = os.path.join(out, _stem("trace", cfg, N, grid_kind))
        write_trace(rep, path)
        _prepend_comment(path, _comment(cfg, "objective in problem units"))
        files.append(path)
    if "controls" in cfg.outputs:
        st = rep.solution.stage_times
        rows = [[st[n, i], *rep.U[n, i]] for n in range(st.shape[0]) for i in range(st.shape[1])]
        path = os.path.join(out, _stem("controls", cfg, N, grid_kind))
        write_table(path, _comment(cfg, "t in time units of the problem"),
                    ["t_stage"] + [f"U{j}" for j in range(prob.d)], rows)
        files.append(path)
    if "grid" in cfg.outputs:
        path = os.path.join(out, _stem("grid", cfg, N, grid_kind))
        write_table(path, _comment(cfg, "t"), ["t"], [[t] for t in grid.t])
        files.append(path)
    if "observables" in cfg.outputs and cfg.problem == "pca2d":
        from .benchmarks.pca import pca_observables
        obs = pca_observables(prob, rep.solution)
        path = os.path.join(out, _stem("observables", cfg, N, grid_kind))
        write_table(path, _comment(cfg, "t [day], V_phi [um^2], P_s [ng/mL/cm^3 um^2]"),
                    ["t", "V_phi", "P_s"], zip(obs["t"], obs["V_phi"], obs["P_s"]))
        files.append(path)
    if "trajectory" in cfg.outputs:
        path = os.path.join(out, _stem("trajectory", cfg, N, grid_kind))
        dump_trajectory(rep.solution, path, limit=dump_limit)
        _prepend_comment(path, _comment(cfg, "state stage values"))
        files.append(path)
    return rep, files


def _prepend_comment(path, comment):
    with open(path) as fh:
        body = fh.read()
    with open(path, "w") as fh:
        fh.write(f"# {comment}\n{body}")


def cmd_solve(args):
    from .benchmarks import build_problem
    from .workflows import adapt_grid

    cfg = _load(args)
    out = _out(args)
    prob = build_problem(cfg)
    summary = {"config": cfg.hash, "triplet": cfg.triplet, "runs": []}
    for N in cfg.N:
        steps = N + 1
        t0 = time.perf_counter()
        if cfg.grid == "file":
            grid = _read_grid(cfg.grid_file)
            if abs(grid.T - prob.T) > 1e-12 * prob.T:
                raise ConfigError(f"grid file ends at {grid.T}, problem horizon is {prob.T}")
        else:
            grid = Grid.uniform(prob.T, steps)
        kind = cfg.grid
        rep, files = _solve_once(cfg, prob, grid, dump_limit=args.dump_limit, out=out, N=N,
                                 grid_kind="uniform" if kind == "adapt" else kind)
        run = {"N": N, "grid": "uniform" if kind == "adapt" else kind, "objective": rep.objective[-1],
               "iterations": rep.iterations, "converged": rep.converged, "message": rep.message,
               "files": files}
        summary["runs"].append(run)
        if kind == "adapt":
            pts = getattr(prob, "dose_times", ())
            new, dens, er = adapt_grid(prob, cfg.triplet, rep.solution, steps, points=pts, **cfg.adapt)
            rep2, files2 = _solve_once(cfg, prob, new, U0=_transfer(rep, new, prob),
                                       dump_limit=args.dump_limit, out=out, N=N, grid_kind="adapt")
            if "density" in cfg.outputs:
                path = os.path.join(out, _stem("density", cfg, N, "adapt"))
                write_table(path, _comment(cfg, "t, psi per slab of the source grid"), ["t", "psi"],
                            zip(dens.grid.t[:-1], dens.psi))
                files2.append(path)
            summary["runs"].append({
                "N": N, "grid": "adapt", "objective": rep2.objective[-1],
                "iterations": rep2.iterations, "converged": rep2.converged, "message": rep2.message,
                "sigma_min": er.metrics["sigma_min"], "sigma_max": er.metrics["sigma_max"],
                "eta_max": er.metrics["eta_max"], "violations": er.violations,
                "omega": dens.omega, "files": files2})
        summary["runs"][-1]["seconds"] = time.perf_counter() - t0
        for r in summary["runs"]:
            log.info("run %s", r)
    _write_json(os.path.join(out, f"solve_{cfg.hash}.json"), summary)
    for r in summary["runs"]:
        print(f"N={r['N']} grid={r['grid']} objective={r['objective']:.10g} "
              f"iterations={r['iterations']} converged={r['converged']}")
    return EXIT_OK


def _transfer(rep, grid, prob):
    """Controls of ``rep`` interpolated to the stage times of ``grid``."""
    from .workflows import initial_controls
    T = build_triplet(rep.solution.triplet)
    st_old = rep.solution.stage_times.ravel()
    order = np.argsort(st_old, kind="stable")
    st_new = grid.stage_times(T.c)
    U = np.empty((grid.steps, T.s, prob.d))
    for j in range(prob.d):
        U[..., j] = np.interp(st_new, st_old[order], rep.U[..., j].ravel()[order])
    return prob.project(U) if prob.d else initial_controls(prob, T, grid)


def cmd_adapt_demo(args):
    from .benchmarks import build_problem
    from .workflows import adapt_grid, heat_errors, run_optimizer

    if args.config:
        cfg = _load(args)
    else:
        cfg = load_config({"problem": "heat1d", "N": 15,
                           "triplet": args.triplet or "AP4o33vgi", "grid": "adapt"})
    out = _out(args)
    prob = build_problem(cfg)
    N = cfg.N[0]
    steps = N + 1
    g = Grid.uniform(prob.T, steps)
    rep = run_optimizer(prob, cfg.triplet, g, tol=cfg.optimizer["tol"],
                        max_iters=cfg.optimizer["max_iters"], method=cfg.optimizer["method"])
    pts = getattr(prob, "dose_times", ())
    new, dens, er = adapt_grid(prob, cfg.triplet, rep.solution, steps, points=pts, **cfg.adapt)
    write_table(os.path.join(out, _stem("density", cfg, N, "adapt")),
                _comment(cfg, "t, psi per slab of the uniform grid"), ["t", "psi"],
                zip(g.t[:-1], dens.psi))
    write_table(os.path.join(out, _stem("grid", cfg, N, "adapt")), _comment(cfg, "t"), ["t"],
                [[t] for t in new.t])
    m = er.metrics
    print(f"omega={dens.omega:.4g} sigma in [{m['sigma_min']:.3f}, {m['sigma_max']:.3f}] "
          f"max|eta|={m['eta_max']:.3f} smoothing rounds={er.smoothing_rounds}")
    for v in er.violations:
        print(f"violation: {v}")
    if cfg.problem == "heat1d":
        rep2 = run_optimizer(prob, cfg.triplet, new, tol=cfg.optimizer["tol"],
                             max_iters=cfg.optimizer["max_iters"], method=cfg.optimizer["method"])
        e1 = heat_errors(prob, cfg.triplet, rep.solution, rep.U)["u"]
        e2 = heat_errors(prob, cfg.triplet, rep2.solution, rep2.U)["u"]
        print(f"control error uniform={e1:.4e} adapted={e2:.4e} ratio={e1 / e2:.2f}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="peerocp", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default="peerocp-out", help="output directory")
    common.add_argument("--triplet", help="triplet id (or coefficient file for verify)")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    common.add_argument("--dump-limit", type=int, default=None,
                        help="max rows of trajectory dumps")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    for name, fn, hlp in (("verify", cmd_verify, "check coefficients of the triplets"),
                          ("dump-coeffs", cmd_dump_coeffs, "write coefficient JSON files"),
                          ("convergence", cmd_convergence, "error table over N for heat1d"),
                          ("solve", cmd_solve, "optimal control run"),
                          ("adapt-demo", cmd_adapt_demo, "one estimate/equidistribute cycle")):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.set_defaults(func=fn)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
