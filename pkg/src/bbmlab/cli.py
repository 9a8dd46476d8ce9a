"""Command-line front end: identities, coefficient tables, residual scans,
simulation and collision pipelines, and report emission.

Every command accepts a flat key=value config file (INI sections are
allowed for grouping; keys must be globally unique) plus flag overrides,
validates all keys before any compute starts, and emits deterministic
CSV/JSON.  Exit codes: 0 pass, 1 assertion failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import version_hash
from .grid import GridFunction, line_grid, periodic_grid, norm_h1
from .operator import OperatorL, check_lphi
from .profiles import (appendix_identities, phi_c, phi_c_values, q_derivs,
                       q_profile)

IDENT_TOL = 1e-7


def _fail(msg: str, code: int = 2) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def load_config(path: str) -> dict:
    """Flat key=value config; JSON files are accepted as an alternative."""
    text = Path(path).read_text()
    if path.endswith(".json"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("JSON config must be an object")
        return {str(k): data[k] for k in data}
    parser = configparser.ConfigParser()
    parser.read_string("[_root]\n" + text)
    out: dict = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            if key in out:
                raise ValueError(f"duplicate config key {key!r}")
            out[key] = val
    return out


def apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser,
                 known: set[str]) -> None:
    """Merge the config file under the CLI flags; unknown keys are fatal."""
    if not getattr(args, "config", None):
        return
    cfg = load_config(args.config)
    unknown = set(cfg) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    defaults = {a.dest: parser.get_default(a.dest) for a in parser._actions}
    for key, val in cfg.items():
        if getattr(args, key) == defaults.get(key):
            default = defaults.get(key)
            if isinstance(default, bool):
                val = str(val).lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                val = int(val)
            elif isinstance(default, float) or default is None:
                try:
                    val = float(val)
                except (TypeError, ValueError):
                    pass
            setattr(args, key, val)


def write_rows_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\r\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _args_dict(config: dict) -> dict:
    return {k: v for k, v in config.items()
            if k != "func" and isinstance(v, (str, int, float, bool, type(None)))}


def write_report_json(path: Path, payload: dict, config: dict) -> None:
    payload = dict(payload)
    payload.setdefault("schema_version", 1)
    payload["resolved_config"] = _args_dict(config)
    payload["code_version"] = version_hash()
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float))


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

def cmd_identities(args) -> int:
    grid = line_grid(args.grid_l, args.grid_n)
    rows = []
    for name, got, want in appendix_identities(grid):
        rel = abs(got - want) / max(1.0, abs(want))
        rows.append({"name": name, "computed": got, "expected": want,
                     "rel_error": rel, "pass": rel < IDENT_TOL})
    # operator identities on the same grid
    op = OperatorL(grid)
    x = grid.x
    q = q_derivs(x, 3)
    checks = {
        "L Q' = 0": np.abs(op.apply(GridFunction(grid, q[1])).values).max(),
        "L Q^1.5 = -5/4 Q^1.5": np.abs(
            op.apply(GridFunction(grid, q[0] ** 1.5)).values + 1.25 * q[0] ** 1.5).max(),
        "L Q = -Q^2": np.abs(
            op.apply(GridFunction(grid, q[0])).values + q[0] ** 2).max(),
        "L(xQ') = -2Q''": np.abs(
            op.apply(GridFunction(grid, x * q[1])).values + 2.0 * q[2]).max(),
        "(L phi)' identity": check_lphi(grid)["residual_a"],
    }
    for name, err in checks.items():
        rows.append({"name": name, "computed": err, "expected": 0.0,
                     "rel_error": err, "pass": err < IDENT_TOL})
    ok = all(r["pass"] for r in rows)
    if args.json:
        print(json.dumps({"identities": rows, "pass": ok,
                          "code_version": version_hash()}, default=float))
    else:
        width = max(len(r["name"]) for r in rows)
        for r in rows:
            mark = "PASS" if r["pass"] else "FAIL"
            print(f"{r['name']:<{width}}  {r['computed']: .12e}  "
                  f"(expected {r['expected']: .6e})  {mark}")
        print(f"{len(rows)} identities, "
              f"{sum(not r['pass'] for r in rows)} failures")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def cmd_coeffs(args) -> int:
    from .omega import (COEFF_COLUMNS, OperatorL, b20_closed, coefficient_row,
                        d_lambda, g_poly, solve_family)

    if args.sweep:
        lams = [float(v) for v in np.linspace(args.sweep_start, args.sweep_stop,
                                              args.sweep_count)]
    else:
        lams = [args.lam]
    for lam in lams:
        if not 0.0 <= lam < 1.0:
            return _fail(f"lam={lam} outside [0, 1)")
    op = OperatorL(line_grid(args.grid_l, args.grid_n))
    rows = []
    for lam in lams:
        if lam == 0.0:
            from .omega import a10_closed, b10_closed, kappa_closed
            rows.append({"lam": 0.0, "a10": a10_closed(0.0),
                         "b10": b10_closed(0.0), "kappa": kappa_closed(0.0),
                         "b20": b20_closed(0.0), "d": 0.0,
                         "note": "KdV-elastic limit (d = 0)"})
            continue
        fam = solve_family(lam, op)
        row = coefficient_row(fam)
        row["b20_closed_delta"] = fam.diagnostics["b20_numeric"] - fam.diagnostics["b20_closed"]
        row["g_positive"] = bool(g_poly(lam) > 0.0)
        if lam == 0.0 or abs(d_lambda(lam)) < 1e-14:
            row["note"] = "KdV-elastic limit (d = 0)"
        rows.append(row)
    cols = COEFF_COLUMNS + ["b20_closed_delta", "g_positive", "note"]
    for row in rows:
        parts = []
        for c in cols:
            if c in row:
                v = row[c]
                parts.append(f"{c}={v:.6g}" if isinstance(v, float) else f"{c}={v}")
        print("  ".join(parts))
    if args.csv:
        norm_rows = [{c: r.get(c, "") for c in cols} for r in rows]
        write_rows_csv(Path(args.csv), norm_rows)
        print(f"wrote {args.csv}")
    return 0


# ---------------------------------------------------------------------------
# profiles dump
# ---------------------------------------------------------------------------

def cmd_profiles(args) -> int:
    from .profiles import SpeedParams, qtilde_sigma

    grid = line_grid(args.grid_l, args.grid_n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "q.csv").write_text(q_profile(grid).to_csv())
    (out / f"phi_c{args.c}.csv").write_text(phi_c(args.c, grid).to_csv())
    if args.c2 is not None:
        p = SpeedParams.from_speeds(args.c, args.c2)
        (out / f"qtilde_sigma{p.sigma:.4f}.csv").write_text(
            qtilde_sigma(p, grid).to_csv())
    print(f"wrote profile CSVs to {out}")
    return 0


# ---------------------------------------------------------------------------
# residual scan
# ---------------------------------------------------------------------------

def cmd_residual_scan(args) -> int:
    from .approx import ApproxSolution, fit_loglog
    from .omega import solve_family

    sigmas = np.geomspace(args.sigma_min, args.sigma_max, args.sigma_count)
    op = OperatorL(line_grid(args.grid_l, args.grid_n))
    fam = solve_family(args.lam, op)
    variants = {"z": "symmetric", "z-sharp": "sharp"}
    if args.variant != "both":
        variants = {args.variant: variants[args.variant]}
    records = []
    slopes = {}
    for name, variant in variants.items():
        vals = []
        for sig in sigmas:
            sol = ApproxSolution(fam, sig, variant)
            tau = sol.tau_sigma
            for t in (0.0, 0.5 * tau, tau, -0.5 * tau, -tau):
                records.append({"lambda": args.lam, "sigma": sig, "variant": name,
                                "t": t, "norm_h1": sol.residual_h1(t)})
            vals.append(max(r["norm_h1"] for r in records
                            if r["sigma"] == sig and r["variant"] == name))
        slope, _, se = fit_loglog(sigmas, vals)
        slopes[name] = {"slope": slope, "stderr": se,
                        "floor": 3.4 if name == "z" else 2.7,
                        "paper_target": 3.75 if name == "z" else 3.0}
        print(f"variant {name}: slope {slope:.3f} +- {se:.3f} "
              f"(floor {slopes[name]['floor']}, paper target "
              f"{slopes[name]['paper_target']})")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(out / "residual_scan.json",
                      {"records": records, "slopes": slopes}, vars(args))
    write_rows_csv(out / "residual_scan.csv", records)
    ok = all(s["slope"] >= s["floor"] for s in slopes.values())
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# simulate / collide / scaling / diagnostics
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .integrator import EvolutionState, IntegratorConfig, evolve

    grid = periodic_grid(args.grid_l, args.grid_n)
    u0 = GridFunction(grid, phi_c_values(args.c, grid.x - args.x0))
    traj = evolve(EvolutionState(u0, 0.0),
                  IntegratorConfig(dt=args.dt, t_end=args.t_end,
                                   dealias=not args.no_dealias,
                                   record_every=args.record_every))
    exact = GridFunction(grid, phi_c_values(
        args.c, np.mod(grid.x - args.x0 - args.c * args.t_end + grid.half_length,
                       2 * grid.half_length) - grid.half_length))
    err = norm_h1(traj.final.u - exact) / norm_h1(exact)
    de, dn = traj.conservation_drift()
    print(f"relative H1 propagation error: {err:.3e}")
    print(f"conservation drift: E {de:.3e}  N {dn:.3e}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"t": t, "E": e, "N": n} for t, e, n in traj.conserved]
    write_rows_csv(out / "simulate_conserved.csv", rows)
    write_report_json(out / "simulate.json",
                      {"h1_error": err, "drift_E": de, "drift_N": dn},
                      vars(args))
    return 0 if (err < args.tol and dn < 1e-7) else 1


def _experiment_config(args):
    from .collision import ExperimentConfig

    return ExperimentConfig(
        c1=args.c1, c2=args.c2, initial_mode=args.initial_mode,
        separation=args.separation, h_target=args.h, dt=args.dt,
        post_time_factor=args.post_time_factor,
        fit_window_widths=args.fit_window_widths,
        with_diagnostics=not args.no_diagnostics)


def cmd_collide(args) -> int:
    from .collision import run_collision

    try:
        cfg = _experiment_config(args)
    except ValueError as exc:
        return _fail(str(exc))
    rep = run_collision(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "collision_report.json").write_text(rep.to_json(indent=2, default=float))
    print(f"delta_c1 {rep.delta_c1:.4e}   delta_c2 {rep.delta_c2:.4e}")
    print(f"shifts: Delta1 {rep.shift_meas['Delta1']:.4f} "
          f"(leading {rep.shift_pred['Delta1_leading']:.4f}), "
          f"Delta2 {rep.shift_meas['Delta2']:.4f} "
          f"(leading {rep.shift_pred['Delta2_leading']:.4f})")
    last = rep.residue_norms[-1]
    print(f"residue behind/ahead H1: {last['behind']['h1']:.4e} / "
          f"{last['ahead']['h1']:.4e}   flags: {rep.flags or 'none'}")
    print(f"wrote {out / 'collision_report.json'}")
    return 0 if not rep.flags else 1


def cmd_scaling(args) -> int:
    from .collision import scaling_study, sweep_rows

    c2_list = ([1.0 + float(v) for v in args.eps_list.split(",")]
               if args.eps_list else
               [1.0 + float(v) for v in np.geomspace(args.eps_min, args.eps_max,
                                                     args.eps_count)])
    try:
        study = scaling_study(args.c1, c2_list, jobs=args.jobs,
                              with_control=args.control)
    except ValueError as exc:
        return _fail(str(exc))
    windows = {"residue_functional": (2.0, 3.0, "[2.25, 2.75]"),
               "delta_c1": (4.0, 6.0, "[4.5, 5.5]"),
               "delta_c2": (3.5, 5.5, "[4, 5]")}
    ok = True
    for name, fit in study["fits"].items():
        lo, hi, paper = windows[name]
        inside = np.isfinite(fit["exponent"]) and lo <= fit["exponent"] <= hi
        ok = ok and inside
        print(f"{name}: exponent {fit['exponent']:.3f} +- {fit['stderr']:.3f} "
              f"(window [{lo}, {hi}], asymptotic target {paper}) "
              f"{'PASS' if inside else 'FAIL'}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(out / "scaling_study.json", study, vars(args))
    write_rows_csv(out / "scaling_sweep.csv", sweep_rows(study))
    print(f"wrote {out / 'scaling_study.json'}")
    return 0 if ok else 1


def cmd_diagnostics(args) -> int:
    from .collision import run_collision

    try:
        cfg = _experiment_config(args)
    except ValueError as exc:
        return _fail(str(exc))
    rep = run_collision(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows_csv(out / "diagnostics.csv", rep.diagnostics)
    post = [d for d in rep.diagnostics if d["t"] > rep.collision_point["t"]]
    n1 = [d["N1"] for d in post]
    g = [d["G"] for d in post]
    print(f"N1 post-collision increase: {max(n1) - n1[0]:.3e}")
    print(f"G  post-collision decrease bound: {g[0] - min(g):.3e}")
    print(f"wrote {out / 'diagnostics.csv'}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bbmlab",
        description="Numerical laboratory for BBM solitary-wave collisions")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="flat key=value or JSON config file")
        sp.add_argument("--out", default="bbmlab_out", help="output directory")

    sp = sub.add_parser("identities", help="closed-form integral/operator suite")
    sp.add_argument("--grid-n", type=int, default=16384, dest="grid_n")
    sp.add_argument("--grid-l", type=float, default=60.0, dest="grid_l")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_identities)

    sp = sub.add_parser("coeffs", help="profile-system coefficient table")
    add_common(sp)
    sp.add_argument("--lam", type=float, default=0.5)
    sp.add_argument("--sweep", action="store_true")
    sp.add_argument("--sweep-start", type=float, default=0.1, dest="sweep_start")
    sp.add_argument("--sweep-stop", type=float, default=0.9, dest="sweep_stop")
    sp.add_argument("--sweep-count", type=int, default=9, dest="sweep_count")
    sp.add_argument("--grid-n", type=int, default=16384, dest="grid_n")
    sp.add_argument("--grid-l", type=float, default=60.0, dest="grid_l")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_coeffs)

    sp = sub.add_parser("profiles", help="dump closed-form profiles to CSV")
    add_common(sp)
    sp.add_argument("--c", type=float, default=2.0)
    sp.add_argument("--c2", type=float, default=None)
    sp.add_argument("--grid-n", type=int, default=16384, dest="grid_n")
    sp.add_argument("--grid-l", type=float, default=60.0, dest="grid_l")
    sp.set_defaults(func=cmd_profiles)

    sp = sub.add_parser("residual-scan",
                        help="sigma-scaling of the construction residual")
    add_common(sp)
    sp.add_argument("--lam", type=float, default=0.5)
    sp.add_argument("--variant", choices=["z", "z-sharp", "both"], default="both")
    sp.add_argument("--sigma-min", type=float, default=0.02, dest="sigma_min")
    sp.add_argument("--sigma-max", type=float, default=0.2, dest="sigma_max")
    sp.add_argument("--sigma-count", type=int, default=6, dest="sigma_count")
    sp.add_argument("--grid-n", type=int, default=16384, dest="grid_n")
    sp.add_argument("--grid-l", type=float, default=60.0, dest="grid_l")
    sp.set_defaults(func=cmd_residual_scan)

    sp = sub.add_parser("simulate", help="single-soliton propagation check")
    add_common(sp)
    sp.add_argument("--c", type=float, default=2.0)
    sp.add_argument("--x0", type=float, default=-40.0)
    sp.add_argument("--grid-n", type=int, default=2048, dest="grid_n")
    sp.add_argument("--grid-l", type=float, default=100.0, dest="grid_l")
    sp.add_argument("--dt", type=float, default=0.01)
    sp.add_argument("--t-end", type=float, default=20.0, dest="t_end")
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--record-every", type=int, default=200, dest="record_every")
    sp.add_argument("--no-dealias", action="store_true", dest="no_dealias")
    sp.set_defaults(func=cmd_simulate)

    def add_collision_args(sp):
        add_common(sp)
        sp.add_argument("--c1", type=float, default=2.0)
        sp.add_argument("--c2", type=float, default=1.1)
        sp.add_argument("--initial-mode", default="far_separated_sum",
                        choices=["far_separated_sum", "approx_v_at_minus_T"],
                        dest="initial_mode")
        sp.add_argument("--separation", type=float, default=None)
        sp.add_argument("--h", type=float, default=0.1)
        sp.add_argument("--dt", type=float, default=None)
        sp.add_argument("--post-time-factor", type=float, default=6.0,
                        dest="post_time_factor")
        sp.add_argument("--fit-window-widths", type=float, default=10.0,
                        dest="fit_window_widths")
        sp.add_argument("--no-diagnostics", action="store_true",
                        dest="no_diagnostics")

    sp = sub.add_parser("collide", help="one full collision experiment")
    add_collision_args(sp)
    sp.set_defaults(func=cmd_collide)

    sp = sub.add_parser("scaling", help="collision sweep with exponent fits")
    add_common(sp)
    sp.add_argument("--c1", type=float, default=2.0)
    sp.add_argument("--eps-list", default=None, dest="eps_list",
                    help="comma-separated c2-1 values")
    sp.add_argument("--eps-min", type=float, default=0.05, dest="eps_min")
    sp.add_argument("--eps-max", type=float, default=0.3, dest="eps_max")
    sp.add_argument("--eps-count", type=int, default=5, dest="eps_count")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--control", action="store_true",
                    help="add the single-soliton elastic control run")
    sp.set_defaults(func=cmd_scaling)

    sp = sub.add_parser("diagnostics",
                        help="localized-functional traces along a collision")
    add_collision_args(sp)
    sp.set_defaults(func=cmd_diagnostics)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    subparser = None
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            subparser = action.choices[args.command]
    known = {a.dest for a in subparser._actions
             if a.dest not in ("help", "config")}
    try:
        apply_config(args, subparser, known)
    except (ValueError, OSError) as exc:
        return _fail(str(exc))
    try:
        return args.func(args)
    except ValueError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
