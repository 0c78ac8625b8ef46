"""``pw`` command line: configuration in, artifacts out.

    pw <command> --config cfg.json --out runs/x [--set key=value ...]

Commands: check, solve, smoothing, flow, wavefront, sublevel, xi, weyl,
lpscan.  Exit codes: 0 ok, 1 computation failed (error.json written),
2 invalid configuration.  Every artifact embeds the resolved config;
each delimited table gets a rendered PNG next to it.
"""

from __future__ import annotations

import argparse
import math
import os
import sys as _sys
import traceback

import numpy as np

from . import analysis, plots, report
from .config import apply_overrides, build_system, load_config
from .errors import ConfigError, PwlabError
from .geometry import FlowParams, broken_flow, wavefront_propagate
from .grid import field_to_csv
from .measure import xi_measure
from .propagator import picard_solve, smoothing_scan
from .symdsl import PhasePoint

COMMANDS = ("check", "solve", "smoothing", "flow", "wavefront",
            "sublevel", "xi", "weyl", "lpscan")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="pw", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="out")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE")
    parser.add_argument("--N", type=int, default=None)
    parser.add_argument("--nodes", type=int, default=None)
    parser.add_argument("--t", type=float, default=None)
    parser.add_argument("--band", type=int, action="append", default=None)
    parser.add_argument("--probes", type=int, default=None)
    parser.add_argument("--no-figures", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, args.overrides)
        if args.seed is not None:
            cfg["seed"] = args.seed
        params = cfg["params"]
        if args.N is not None:
            params["N"] = args.N
        if args.nodes is not None:
            params["nodes"] = args.nodes
        if args.t is not None:
            params["t"] = args.t
        if args.band:
            params["bands"] = args.band
        if args.probes is not None:
            params["probes"] = args.probes
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    try:
        runner = globals()[f"run_{args.command}"]
        runner(cfg, args.out, figures=not args.no_figures)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except (PwlabError, Exception) as exc:  # noqa: BLE001 - error.json contract
        payload = {"error": type(exc).__name__, "message": str(exc),
                   "trace": traceback.format_exc().splitlines()[-6:]}
        report.write_json(os.path.join(args.out, "error.json"), payload,
                          config=cfg)
        print(f"computation failed: {exc}", file=_sys.stderr)
        return 1


def _rng(cfg):
    return np.random.default_rng(cfg["seed"])


def run_check(cfg, out, figures=True):
    sysspec, _ = build_system(cfg)
    p = cfg["params"]
    rep = analysis.check_system(
        sysspec, cap=p.get("cap", 8), grid=p.get("grid", 128),
        mult_tol=p.get("mult_tol", 1e-6), bracket_tol=p.get("bracket_tol", 1e-8))
    report.write_json(os.path.join(out, "check.json"), rep.to_dict(), config=cfg)
    rows = []
    for pair in rep.pairs:
        for pt, order in zip(pair.points, pair.orders):
            rows.append((pair.i + 1, pair.j + 1, *pt.x, *pt.xi,
                         -1 if order is None else order))
    report.write_csv(os.path.join(out, "check.csv"),
                     ["i", "j"] + [f"x{d+1}" for d in range(sysspec.grid.n)]
                     + [f"xi{d+1}" for d in range(sysspec.grid.n)] + ["order"],
                     rows)
    if figures:
        report.write_figure(os.path.join(out, "check.png"),
                            plots.fig_bracket_orders(rep))


def run_solve(cfg, out, figures=True):
    sysspec, _ = build_system(cfg)
    p = cfg["params"]
    rng = _rng(cfg)
    u0 = analysis.build_data(sysspec, p.get("data", {"kind": "weighted_modes"}),
                             rng)
    t = float(p.get("t", cfg["T"]))
    rep = picard_solve(sysspec, u0, t, int(p.get("N", 8)),
                       int(p.get("nodes", max(8, int(64 * t)))),
                       compute_reference=p.get("reference", True), rng=rng)
    report.write_json(os.path.join(out, "solve.json"), rep.to_dict(), config=cfg)
    with open(os.path.join(out, "u.csv"), "w") as fh:
        field_to_csv(fh, rep.u)
    report.write_binary_fields(os.path.join(out, "u.pwf"), rep.u)
    if figures:
        report.write_figure(os.path.join(out, "solve.png"),
                            plots.fig_level_norms(rep.level_norms,
                                                  rep.tail_bound))


def run_smoothing(cfg, out, figures=True):
    sysspec, _ = build_system(cfg)
    p = cfg["params"]
    scan = smoothing_scan(
        sysspec, p.get("levels", [1, 2, 3, 4]), p.get("bands", [3, 4, 5, 6]),
        int(p.get("probes", 8)), t=float(p.get("t", 1.0)),
        Q=int(p.get("nodes", 64)), rng=_rng(cfg))
    payload = {"N_emp": {str(k): v for k, v in scan["N_emp"].items()},
               "bands": scan["bands"], "t": scan["t"], "Q": scan["Q"],
               "probes": scan["probes"],
               "guard_exceeded": {str(k): v for k, v in
                                  scan["guard_exceeded"].items()},
               "rho": {str(l): {str(k): v for k, v in tbl.items()}
                       for l, tbl in scan["rho"].items()}}
    report.write_json(os.path.join(out, "smoothing.json"), payload, config=cfg)
    rows = [(l, k, scan["rho"][l][k]) for l in scan["rho"]
            for k in scan["bands"]]
    report.write_csv(os.path.join(out, "smoothing.csv"),
                     ["level", "band", "rho"], rows)
    if figures:
        report.write_figure(os.path.join(out, "smoothing.png"),
                            plots.fig_smoothing(scan["rho"], scan["bands"],
                                                scan["N_emp"]))


def _seed_point(p, n):
    x = p.get("x0", [math.pi / 2] * n)
    xi = p.get("xi0", [1.0] + [0.0] * (n - 1))
    return PhasePoint(tuple(float(v) for v in x), tuple(float(v) for v in xi))


def run_flow(cfg, out, figures=True):
    sysspec, _ = build_system(cfg)
    p = cfg["params"]
    roots = sysspec.exact_roots or list(sysspec.rootsys.roots)
    reps = [roots[g[0]] for g in sysspec.rootsys.groups]
    J = tuple(int(j) for j in p.get("J", [1, 2][: len(reps)]))
    seed = _seed_point(p, sysspec.grid.n)
    T = float(p.get("T", cfg["T"]))
    traj = broken_flow(reps, J, seed, T,
                       FlowParams(dt=p.get("dt"),
                                  event_tol=p.get("event_tol", 1e-8)))
    rows = traj.to_rows()
    n = sysspec.grid.n
    report.write_csv(os.path.join(out, "flow.csv"),
                     ["t"] + [f"x{d+1}" for d in range(n)]
                     + [f"xi{d+1}" for d in range(n)] + ["root"], rows)
    report.write_json(os.path.join(out, "flow.json"), {
        "J": list(J),
        "switch_times": traj.switch_times,
        "switch_kinds": traj.switch_kinds,
        "completed": traj.completed,
        "endpoint": [list(traj.endpoint.x), list(traj.endpoint.xi)],
    }, config=cfg)
    if figures:
        report.write_figure(os.path.join(out, "flow.png"),
                            plots.fig_trajectory(rows, n))


def run_wavefront(cfg, out, figures=True):
    sysspec, _ = build_system(cfg)
    p = cfg["params"]
    roots = sysspec.exact_roots or list(sysspec.rootsys.roots)
    reps = [roots[g[0]] for g in sysspec.rootsys.groups]
    n = sysspec.grid.n
    seed = _seed_point(p, n)
    T = float(p.get("T", cfg["T"]))
    max_switches = int(p.get("max_switches", 2))
    if n == 1:
        seeds = [PhasePoint(seed.x, (1.0,)), PhasePoint(seed.x, (-1.0,))]
    else:
        seeds = [PhasePoint(seed.x, (math.cos(a), math.sin(a)))
                 for a in np.linspace(0, 2 * math.pi, 8, endpoint=False)]
    trajs = wavefront_propagate(reps, seeds, T, max_switches)
    rows = []
    for J, s, traj in trajs:
        rows.append(("|".join(str(j) for j in J),
                     *traj.endpoint.x, *traj.endpoint.xi,
                     int(traj.completed)))
    report.write_csv(os.path.join(out, "wavefront.csv"),
                     ["J"] + [f"x{d+1}" for d in range(n)]
                     + [f"xi{d+1}" for d in range(n)] + ["completed"], rows)
    mass = None
    if p.get("mass_check", True):
        mass = analysis.wavefront_check(
            sysspec, list(seed.x), T, max_switches=max_switches,
            mass_radius_cells=float(p.get("radius_cells", 4.0)))
        payload = dict(mass)
    else:
        payload = {}
    payload["count"] = len(trajs)
    report.write_json(os.path.join(out, "wavefront.json"), payload, config=cfg)
    if figures:
        pts = [(traj.endpoint.x[0], traj.endpoint.xi[0]) for _, _, traj in trajs]
        sd = [(s.x[0], s.xi[0]) for s in seeds]
        report.write_figure(os.path.join(out, "wavefront.png"),
                            plots.fig_endpoints(pts, sd))


def run_sublevel(cfg, out, figures=True):
    p = cfg["params"]
    eps_list = p.get("eps", [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    suite = analysis.sublevel_suite(
        p.get("M_list", [1, 2, 3]), eps_list, draws=int(p.get("draws", 100)),
        rng=_rng(cfg), refine=int(p.get("refine", 2048)))
    payload = {"eps": suite["eps"],
               "per_M": {str(m): v for m, v in suite["per_M"].items()}}
    report.write_json(os.path.join(out, "sublevel.json"), payload, config=cfg)
    rows = []
    for M, res in suite["per_M"].items():
        for eps, meas in zip(suite["eps"], res["ladder_measures"]):
            rows.append((M, "ladder", eps, meas))
        for eps, meas in zip(suite["eps"], res["collide_measures"]):
            rows.append((M, "collide", eps, meas))
    report.write_csv(os.path.join(out, "sublevel.csv"),
                     ["M", "family", "eps", "measure"], rows)
    if figures:
        M0 = sorted(suite["per_M"])[0]
        res = suite["per_M"][M0]
        report.write_figure(
            os.path.join(out, "sublevel.png"),
            plots.fig_decay(suite["eps"], res["collide_measures"],
                            slope=res["collide_exponent"],
                            label=f"sup measure (M={M0})"))


def run_xi(cfg, out, figures=True):
    sysspec, _ = build_system(cfg)
    p = cfg["params"]
    roots = sysspec.exact_roots or list(sysspec.rootsys.roots)
    reps = [roots[g[0]] for g in sysspec.rootsys.groups]
    J = tuple(int(j) for j in p.get("J", [1, 2, 1][: max(2, len(reps))]))
    eps_list = p.get("eps", [10.0 ** -k for k in (0.5, 1.0, 1.5, 2.0, 2.5)])
    res = xi_measure(reps, J, eps_list, int(p.get("samples", 10 ** 6)),
                     float(p.get("T", 2.0)), _rng(cfg),
                     C=float(p.get("C", 1.0)),
                     n_steps=int(p.get("n_steps", 48)),
                     M=p.get("M"))
    report.write_json(os.path.join(out, "xi.json"), res, config=cfg)
    report.write_csv(os.path.join(out, "xi.csv"), ["eps", "fraction"],
                     list(zip(res["eps"], res["fractions"])))
    if figures:
        report.write_figure(
            os.path.join(out, "xi.png"),
            plots.fig_decay(res["eps"], res["fractions"],
                            slope=res["fitted_exponent"], label="fraction"))


def run_weyl(cfg, out, figures=True):
    sysspec, _ = build_system(cfg)
    p = cfg["params"]
    res = analysis.weyl_run(
        sysspec, int(p.get("K", 256)),
        tuple(p.get("window", [30.0, 100.0])), rng=_rng(cfg),
        predict_samples=int(p.get("predict_samples", 10 ** 6)))
    lam = res.pop("lambda")
    counts = res.pop("counts")
    evs = res.pop("eigenvalues")
    report.write_json(os.path.join(out, "weyl.json"), res, config=cfg)
    report.write_csv(os.path.join(out, "weyl.csv"), ["lambda", "count"],
                     list(zip(lam, counts)))
    report.write_csv(os.path.join(out, "eigenvalues.csv"), ["j", "lambda_j"],
                     list(enumerate(evs)))
    if figures:
        report.write_figure(
            os.path.join(out, "weyl.png"),
            plots.fig_counting(np.asarray(lam), np.asarray(counts),
                               res["c_lead"], res["c_second"],
                               sysspec.grid.n))


def run_lpscan(cfg, out, figures=True):
    sysspec, _ = build_system(cfg)
    p = cfg["params"]
    res = analysis.lp_ratio_scan(
        sysspec, [float(v) for v in p.get("p_list", [4.0, 4.0 / 3.0])],
        [int(b) for b in p.get("bands", [3, 4, 5])],
        float(p.get("t", 0.5)), N=int(p.get("N", 6)),
        Q=int(p.get("nodes", 48)),
        alpha_scale=float(p.get("alpha_scale", 1.0)), rng=_rng(cfg))
    payload = {"bands": res["bands"], "t": res["t"], "N": res["N"],
               "Q": res["Q"], "alpha_scale": res["alpha_scale"],
               "per_p": {repr(k): v for k, v in res["per_p"].items()}}
    report.write_json(os.path.join(out, "lpscan.json"), payload, config=cfg)
    rows = []
    for p_val, info in res["per_p"].items():
        for band, ratio in zip(res["bands"], info["ratios"]):
            rows.append((p_val, info["alpha"], band, ratio))
    report.write_csv(os.path.join(out, "lpscan.csv"),
                     ["p", "alpha", "band", "ratio"], rows)
    if figures:
        report.write_figure(
            os.path.join(out, "lpscan.png"),
            plots.fig_ratio_table(res["bands"],
                                  {k: v["ratios"] for k, v in
                                   res["per_p"].items()}))


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
