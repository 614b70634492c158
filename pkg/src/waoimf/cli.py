"""Command-line entry point.

Exit codes: 0 success, 1 domain error (failed assumption, infeasible or
non-converging solve), 2 bad input (parse or config error). Data goes to
stdout or files; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .config import dump_config, load_config
from .core import scalar_type
from .errors import ConfigError, DomainError
from .reporting import Manifest, csv_text, load_manifest, write_csv
from .simulation import config_hash

log = logging.getLogger("waoimf")

DEFAULT_OUT = "out"


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _emit_json(obj):
    sys.stdout.write(json.dumps(obj, indent=2, default=_json_default) + "\n")


class Run:
    """Output directory, manifest and plotting switch for one invocation."""

    def __init__(self, args, argv, cfg=None):
        self.out_dir = Path(args.out_dir or DEFAULT_OUT)
        self.plots = not args.no_plots
        seed = args.seed if getattr(args, "seed", None) is not None else (cfg.seed if cfg else 0)
        self.seed = seed
        cfg_dict = cfg.to_dict() if cfg else None
        self.manifest = Manifest(argv, seed, cfg_dict, config_hash(cfg_dict) if cfg_dict else "")

    def csv(self, name, header, rows):
        path = write_csv(self.out_dir / name, header, rows)
        self.manifest.add(path)
        return path

    def json(self, name, obj):
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        self.manifest.add(path)
        return path

    def plot(self, fn_name, rows, name):
        if not self.plots:
            return None
        try:
            from . import plotting
        except ImportError as exc:  # pragma: no cover
            log.warning("plotting unavailable (%s); use --no-plots to silence", exc)
            return None
        try:
            path = getattr(plotting, fn_name)(rows, self.out_dir / name)
        except ImportError as exc:
            log.warning("matplotlib not available (%s); figure skipped", exc)
            return None
        self.manifest.add(path)
        return path

    def finish(self):
        self.manifest.write(self.out_dir)
        return 0


def _threshold_solver(cfg):
    from .threshold import average_cost_threshold

    s = cfg.solver
    return partial(average_cost_threshold, delta_max=s.delta_max, discounts=tuple(s.discounts), tol=s.tol)


def _require_rd(args, cfg):
    rd = args.Rd if getattr(args, "Rd", None) is not None else cfg.scheduler.Rd
    if rd is None:
        raise ConfigError("scheduler.Rd: required (set it in the config or pass --Rd)")
    return int(rd)


def _solve_schedule(args, cfg, pop):
    from .scheduler import bisect_lambda

    eps = args.eps if getattr(args, "eps", None) is not None else cfg.scheduler.eps
    calib = bool(getattr(args, "calibrate_p", False) or cfg.scheduler.calibrate_p)
    return bisect_lambda(pop, _require_rd(args, cfg), eps, calibrate_p=calib, solver=_threshold_solver(cfg))


# command handlers -----------------------------------------------------------

def cmd_threshold(args, argv):
    from .threshold import METHODS

    t = scalar_type(args.A, args.Kw)
    if args.method == "vi":
        res = METHODS["vi"](t, args.lam, delta_max=args.delta_max)
    else:
        res = METHODS[args.method](t, args.lam, args.delta_max // 4)
    eta = "" if res.eta is None else res.eta
    sys.stdout.write(csv_text(["tau", "eta", "sigma_star"], [(res.tau, eta, res.sigma_star)]))
    return 0


def cmd_waoi_table(args, argv):
    from .waoi import h_table

    if args.config:
        cfg = load_config(args.config)
        if not 0 <= args.type < len(cfg.types):
            raise ConfigError(f"--type: index {args.type} out of range (0..{len(cfg.types) - 1})")
        t = cfg.types[args.type]
    elif args.A is not None and args.Kw is not None:
        t = scalar_type(args.A, args.Kw)
    else:
        raise ConfigError("waoi dump-table needs --config with --type, or --A and --Kw")
    h = h_table(t, args.delta_max)
    rows = [(d, h[d], h[d] * d) for d in range(args.delta_max + 1)]
    if args.out_dir:
        run = Run(args, argv)
        run.csv("waoi_table.csv", ["delta", "h", "g"], rows)
        return run.finish()
    sys.stdout.write(csv_text(["delta", "h", "g"], rows))
    return 0


def cmd_schedule_solve(args, argv):
    cfg = load_config(args.config)
    sol = _solve_schedule(args, cfg, cfg.population())
    out = sol.to_dict()
    _emit_json(out)
    if args.out_dir:
        run = Run(args, argv, cfg)
        run.json("schedule_solution.json", out)
        return run.finish()
    return 0


def cmd_schedule_simulate(args, argv):
    from .scheduler import simulate_aoi

    cfg = load_config(args.config)
    pop = cfg.population()
    run = Run(args, argv, cfg)
    sol = _solve_schedule(args, cfg, pop)
    T = args.T if args.T is not None else cfg.simulation.T
    res = simulate_aoi(pop, sol, args.policy, T, run.seed, record=True, delta_max=cfg.solver.delta_max)
    tr = res.trace
    rows = [(int(r[0]), int(r[1]), int(r[2]), int(r[3]), float(r[4])) for r in tr]
    run.csv("schedule_trace.csv", ["k", "i", "delta", "zeta", "g"], rows)
    _emit_json({"policy": args.policy, "T": T, "J_S": res.J_S, "rate": res.rate,
                "max_scheduled": res.max_scheduled, "R_d": sol.R_d})
    return run.finish()


def cmd_mfg_solve(args, argv):
    from .meanfield import are_residual, check_assumptions, mf_fixed_point, solve_gains

    cfg = load_config(args.config)
    pop = cfg.population()
    run = Run(args, argv, cfg)
    tol = args.tol if args.tol is not None else cfg.meanfield.tol
    horizon = args.horizon if args.horizon is not None else cfg.meanfield.horizon
    gains = solve_gains(pop)
    alpha = args.alpha if args.alpha is not None else (cfg.scheduler.Rd / cfg.N if cfg.scheduler.Rd else 1.0)
    report = check_assumptions(pop, alpha, gains)
    mf = mf_fixed_point(pop, tol=tol, max_iter=cfg.meanfield.max_iter, horizon=horizon, gains=gains, alpha=alpha)
    n = pop.n
    run.csv("mfg_xbar.csv", ["k"] + [f"xbar_{j + 1}" for j in range(n)],
            [(k, *mf.xbar[k]) for k in range(len(mf.xbar))])
    gain_out = {
        "E_star": mf.E_star,
        "upsilon": mf.upsilon,
        "picard_steps": len(mf.history),
        "types": [{"id": t.id, "K": g.K, "L": g.L, "Pi": g.Pi, "H": g.H, "are_residual": are_residual(g.K, t)}
                  for t, g in zip(pop.types, gains)],
    }
    run.json("mfg_gains.json", gain_out)
    _emit_json({"assumptions": report.to_dict(), "E_star": mf.E_star, "picard_steps": len(mf.history)})
    return run.finish()


def cmd_simulate(args, argv):
    from .meanfield import mf_fixed_point
    from .simulation import error_law_table, run_closed_loop

    cfg = load_config(args.config)
    pop = cfg.population()
    run = Run(args, argv, cfg)
    sol = _solve_schedule(args, cfg, pop)
    mf = mf_fixed_point(pop, tol=cfg.meanfield.tol, max_iter=cfg.meanfield.max_iter, horizon=cfg.meanfield.horizon)
    T = args.T if args.T is not None else cfg.simulation.T
    reps = args.replications if args.replications is not None else cfg.simulation.replications
    policy = args.policy or cfg.simulation.policy
    names, rows, law_rows = None, [], []
    for r in range(reps):
        rec = run_closed_loop(pop, sol, mf, policy, T, run.seed, run=r, burn_in=cfg.simulation.burn_in,
                              dump=args.dump, delta_max=cfg.solver.delta_max, config=cfg.to_dict())
        names = names or sorted(rec.metrics)
        rows.append((r, *[rec.metrics[k] for k in names]))
        law_rows.extend((r, *row) for row in error_law_table(rec, pop, min_visits=1))
        if args.dump:
            tr = rec.trajectory
            n, m = pop.n, pop.m
            header = (["k", "i"] + [f"x_{j + 1}" for j in range(n)] + [f"z_{j + 1}" for j in range(n)]
                      + [f"u_{j + 1}" for j in range(m)] + ["delta", "zeta"])
            dump_rows = [(k, i, *tr.x[k, i], *tr.z[k, i], *tr.u[k, i], int(tr.delta[k, i]), int(tr.zeta[k, i]))
                         for k in range(tr.T) for i in range(pop.N)]
            run.csv(f"trajectory_run{r}.csv", header, dump_rows)
    run.csv("simulate_metrics.csv", ["run", *names], rows)
    run.csv("error_law.csv", ["run", "type", "delta", "visits", "mean_e2", "std_err", "h"], law_rows)
    summary = {k: float(np.mean([row[1 + j] for row in rows])) for j, k in enumerate(names)}
    _emit_json({"policy": policy, "T": T, "replications": reps, "R_d": sol.R_d, "mean_metrics": summary})
    return run.finish()


def cmd_check(args, argv):
    from .meanfield import check_assumptions

    cfg = load_config(args.config)
    pop = cfg.population()
    if args.alpha is not None:
        alpha = args.alpha
    elif cfg.scheduler.Rd is not None:
        alpha = cfg.scheduler.Rd / cfg.N
    else:
        raise ConfigError("check needs --alpha or scheduler.Rd in the config")
    report = check_assumptions(pop, alpha)
    _emit_json(report.to_dict())
    if not report.ok:
        log.error("assumption check failed")
        return 1
    return 0


def cmd_config_dump(args, argv):
    sys.stdout.write(dump_config(load_config(args.config)))
    return 0


def cmd_exp_tau_vector(args, argv):
    from .experiments import STATED_INTERPRETATIONS, experiment_tau_vector

    run = Run(args, argv)
    labels = list(STATED_INTERPRETATIONS) if args.interpretations == "stated" else None
    rows, matches = experiment_tau_vector(labels, args.eps)
    run.csv("experiment_tau_vector.csv", ["interpretation", "agent", "A", "K_W", "tau_l", "tau_u", "published"], rows)
    _emit_json(matches)
    return run.finish()


def cmd_exp_tau_vs_rd(args, argv):
    from .experiments import experiment_tau_vs_rd, fig4_population

    run = Run(args, argv)
    pop = fig4_population()
    grid = args.Rd or list(range(1, pop.N + 1))
    rows = experiment_tau_vs_rd(pop, grid, args.eps)
    run.csv("experiment_tau_vs_rd.csv", ["Rd", "agent", "tau", "tau_u"], rows)
    run.plot("plot_tau_vs_rd", rows, "experiment_tau_vs_rd.png")
    return run.finish()


def cmd_exp_asymptotic(args, argv):
    from .experiments import experiment_asymptotic

    run = Run(args, argv)
    rows, per_run = experiment_asymptotic(args.alpha, args.N, args.T, args.replications, run.seed, eps=args.eps)
    run.csv("experiment_asymptotic.csv", ["N", "Js_relaxed", "Js_hard", "gap"], rows)
    run.csv("experiment_asymptotic_runs.csv", ["N", "rep", "Js_relaxed", "Js_hard"], per_run)
    run.plot("plot_asymptotic", rows, "experiment_asymptotic.png")
    return run.finish()


def cmd_exp_cost_alpha(args, argv):
    from .experiments import consensus_type, experiment_cost_vs_alpha

    run = Run(args, argv)
    t = consensus_type(A=args.A, K_W=args.Kw, nu0=args.nu0)
    rows = experiment_cost_vs_alpha(t, args.alphas, args.runs, args.N, args.T, run.seed, policy=args.policy,
                                    eps=args.eps)
    run.csv("experiment_cost_alpha.csv", ["alpha", "run", "cost"], rows)
    run.plot("plot_cost_alpha", rows, "experiment_cost_alpha.png")
    return run.finish()


def cmd_exp_eps_scaling(args, argv):
    from .experiments import consensus_type, experiment_eps_scaling, loglog_slope, mean_by

    run = Run(args, argv)
    t = consensus_type(A=args.A, K_W=args.Kw, nu0=args.nu0)
    rows = experiment_eps_scaling(t, args.N, args.T, args.replications, run.seed, alpha=args.alpha,
                                  policy=args.policy, eps=args.eps)
    run.csv("experiment_eps_scaling.csv", ["N", "rep", "eps_T"], rows)
    means = mean_by(rows)
    _emit_json({"mean_eps_T": {str(k): v for k, v in means.items()},
                "loglog_slope": loglog_slope(list(means), list(means.values()))})
    run.plot("plot_eps_scaling", rows, "experiment_eps_scaling.png")
    return run.finish()


def _set_option(argv, name, value):
    out, skip, found = [], False, False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == name:
            out += [name, value]
            skip, found = True, True
        elif tok.startswith(name + "="):
            out.append(f"{name}={value}")
            found = True
        else:
            out.append(tok)
    if not found:
        out += [name, value]
    return out


def cmd_replay(args, argv):
    man = load_manifest(args.manifest)
    replay_argv = list(man["argv"])
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.manifest).resolve().parent / "replay"
    if man.get("config") is not None:
        import yaml

        out_dir.mkdir(parents=True, exist_ok=True)
        cfg_path = out_dir / "replay_config.yaml"
        cfg_path.write_text(yaml.safe_dump(man["config"], sort_keys=False))
        replay_argv = _set_option(replay_argv, "--config", str(cfg_path))
    if man.get("seed") is not None:
        replay_argv = _set_option(replay_argv, "--seed", str(man["seed"]))
    replay_argv = _set_option(replay_argv, "--out-dir", str(out_dir))
    log.info("replaying: %s", " ".join(replay_argv))
    return main(replay_argv)


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=None, help=f"directory for artifacts (default ./{DEFAULT_OUT})")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config seed or 0)")
    common.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="waoimf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("threshold", parents=[common], help="single-agent threshold for a scalar agent")
    q.add_argument("--A", type=float, required=True)
    q.add_argument("--Kw", type=float, required=True)
    q.add_argument("--lambda", dest="lam", type=float, required=True)
    q.add_argument("--method", choices=["vi", "implicit", "oracle"], default="vi")
    q.add_argument("--delta-max", type=int, default=512)
    q.set_defaults(func=cmd_threshold)

    w = sub.add_parser("waoi", help="WAoI tables").add_subparsers(dest="waoi_command", required=True)
    q = w.add_parser("dump-table", parents=[common], help="emit delta,h,g")
    q.add_argument("--config")
    q.add_argument("--type", type=int, default=0)
    q.add_argument("--A", type=float)
    q.add_argument("--Kw", type=float)
    q.add_argument("--delta-max", type=int, default=32)
    q.set_defaults(func=cmd_waoi_table)

    s = sub.add_parser("schedule", help="base-station scheduling").add_subparsers(dest="schedule_command",
                                                                                  required=True)
    q = s.add_parser("solve", parents=[common], help="bisect the price and report the two-threshold policy")
    q.add_argument("--config", required=True)
    q.add_argument("--Rd", type=int)
    q.add_argument("--eps", type=float)
    q.add_argument("--calibrate-p", action="store_true")
    q.set_defaults(func=cmd_schedule_solve)
    q = s.add_parser("simulate", parents=[common], help="simulate AoI only and write k,i,delta,zeta,g")
    q.add_argument("--config", required=True)
    q.add_argument("--policy", choices=["relaxed", "hard"], default="hard")
    q.add_argument("--T", type=int)
    q.add_argument("--Rd", type=int)
    q.add_argument("--eps", type=float)
    q.add_argument("--calibrate-p", action="store_true")
    q.set_defaults(func=cmd_schedule_simulate)

    m = sub.add_parser("mfg", help="mean-field tracking game").add_subparsers(dest="mfg_command", required=True)
    q = m.add_parser("solve", parents=[common], help="gains, equilibrium trajectory and assumption report")
    q.add_argument("--config", required=True)
    q.add_argument("--tol", type=float)
    q.add_argument("--horizon", type=int)
    q.add_argument("--alpha", type=float, help="bandwidth ratio for the Frobenius check (default Rd/N)")
    q.set_defaults(func=cmd_mfg_solve)

    q = sub.add_parser("simulate", parents=[common], help="closed-loop simulation")
    q.add_argument("--config", required=True)
    q.add_argument("--policy", choices=["relaxed", "hard"])
    q.add_argument("--T", type=int)
    q.add_argument("--Rd", type=int)
    q.add_argument("--eps", type=float)
    q.add_argument("--calibrate-p", action="store_true")
    q.add_argument("--replications", type=int)
    q.add_argument("--dump", action="store_true", help="write full trajectories")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("check", parents=[common], help="assumption report (exit 1 on failure)")
    q.add_argument("--config", required=True)
    q.add_argument("--alpha", type=float)
    q.set_defaults(func=cmd_check)

    c = sub.add_parser("config", help="configuration tools").add_subparsers(dest="config_command", required=True)
    q = c.add_parser("dump", parents=[common], help="print the validated config with defaults filled in")
    q.add_argument("--config", required=True)
    q.set_defaults(func=cmd_config_dump)

    e = sub.add_parser("experiment", help="reference experiments").add_subparsers(dest="experiment",
                                                                                     required=True)
    q = e.add_parser("tau-vector", parents=[common], help="seven-agent threshold reproduction")
    q.add_argument("--interpretations", choices=["all", "stated"], default="all")
    q.add_argument("--eps", type=float, default=1e-6)
    q.set_defaults(func=cmd_exp_tau_vector)

    q = e.add_parser("tau-vs-rd", parents=[common], help="thresholds of the six-agent set against R_d")
    q.add_argument("--Rd", type=_ints, help="comma-separated grid (default 1..N)")
    q.add_argument("--eps", type=float, default=1e-6)
    q.set_defaults(func=cmd_exp_tau_vs_rd)

    q = e.add_parser("asymptotic", parents=[common], help="relaxed versus hard WAoI as N grows")
    q.add_argument("--alpha", type=float, default=0.6)
    q.add_argument("--N", type=_ints, default=[25, 100, 400, 1600])
    q.add_argument("--T", type=int, default=20000)
    q.add_argument("--replications", type=int, default=5)
    q.add_argument("--eps", type=float, default=1e-6)
    q.set_defaults(func=cmd_exp_asymptotic)

    q = e.add_parser("cost-alpha", parents=[common], help="consensus cost against bandwidth ratio")
    q.add_argument("--alphas", type=_floats, default=[0.25, 0.45, 0.65, 0.85])
    q.add_argument("--runs", type=int, default=100)
    q.add_argument("--N", type=int, default=800)
    q.add_argument("--T", type=int, default=500)
    q.add_argument("--A", type=float, default=1.15)
    q.add_argument("--Kw", type=float, default=2.0)
    q.add_argument("--nu0", type=float, default=0.0)
    q.add_argument("--policy", choices=["relaxed", "hard"], default="hard")
    q.add_argument("--eps", type=float, default=1e-6)
    q.set_defaults(func=cmd_exp_cost_alpha)

    q = e.add_parser("eps-scaling", parents=[common], help="mean-field approximation error against N")
    q.add_argument("--N", type=_ints, default=[50, 100, 200, 400, 800])
    q.add_argument("--T", type=int, default=500)
    q.add_argument("--replications", type=int, default=5)
    q.add_argument("--alpha", type=float, default=0.6)
    q.add_argument("--A", type=float, default=1.15)
    q.add_argument("--Kw", type=float, default=2.0)
    q.add_argument("--nu0", type=float, default=1.0)
    q.add_argument("--policy", choices=["relaxed", "hard"], default="hard")
    q.add_argument("--eps", type=float, default=1e-6)
    q.set_defaults(func=cmd_exp_eps_scaling)

    q = sub.add_parser("replay", parents=[common], help="re-run the command recorded in a manifest")
    q.add_argument("manifest")
    q.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
