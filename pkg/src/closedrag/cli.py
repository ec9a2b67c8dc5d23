"""Command-line front end.

Every subcommand takes a scenario as a JSON path or ``--builtin <id>`` and
prints a JSON (default) or CSV report on stdout. Exit codes: 0 success,
2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import __version__
from .analysis import price_of_anarchy
from .dynamics import convergence_report, simulate
from .equilibrium import verify_equilibrium
from .errors import ClosedRagError, InputError, SolverError
from .model import GameSpec, load_game
from .potential import solve_potential
from .scenarios import BUILTINS, builtin
from .smdp import builtin_smdp, load_smdp, solve_smdp

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3


def _schema() -> dict:
    return json.loads(resources.files("closedrag").joinpath("data/csv_schema.json").read_text())


def _num(v):
    """Round to 12 significant digits for stable, diffable output."""
    v = float(v)
    if not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return float("%.12g" % v)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, float, np.floating, np.integer)):
        return "%.12g" % float(v)
    return str(v)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class RunConfig:
    command: str
    scenario: str | None
    builtin: str | None
    eps: float | None
    mass: float | None
    tol: float
    max_iter: int
    fmt: str
    seed: int | None

    def validate(self):
        if not self.tol > 0:
            raise InputError("--tol must be positive")
        if self.max_iter < 1:
            raise InputError("--max-iter must be >= 1")
        if self.command != "smdp" and (self.scenario is None) == (self.builtin is None):
            raise InputError("give exactly one of a scenario path or --builtin")


def _config(args) -> RunConfig:
    cfg = RunConfig(args.command, args.scenario, args.builtin, args.eps, args.mass, args.tol,
                    args.max_iter, args.format, args.seed)
    cfg.validate()
    return cfg


def _sizes(text: str):
    try:
        out = tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise InputError(f"--sizes must be L,I,J integers, got {text!r}") from exc
    if len(out) != 3 or min(out) < 1:
        raise InputError("--sizes must be three integers >= 1")
    return out


def _load(cfg: RunConfig, args, mass=None) -> GameSpec:
    if cfg.builtin is not None:
        return builtin(cfg.builtin, eps=cfg.eps, mass=cfg.mass if mass is None else mass,
                       seed=0 if cfg.seed is None else cfg.seed, sizes=_sizes(args.sizes))
    spec = load_game(cfg.scenario)
    if mass is not None or cfg.mass is not None:
        spec = _with_single_mass(spec, cfg.mass if mass is None else mass)
    return spec


def _with_single_mass(spec: GameSpec, d: float) -> GameSpec:
    if spec.n_types != 1:
        raise InputError("setting the mass needs a single-type scenario")
    if not d > 0:
        raise InputError("mass must be positive")
    return spec.with_masses([d])


# --- commands -------------------------------------------------------------


def cmd_solve(cfg: RunConfig, args) -> str:
    spec = _load(cfg, args)
    eq = solve_potential(spec, tol=cfg.tol, max_iter=cfg.max_iter, seed=cfg.seed)
    if cfg.fmt == "csv":
        rows = []
        for l, pt in enumerate(spec.types):
            for j in range(pt.n_activities):
                rows.append([pt.name, pt.activity_names[j], eq.rates[l][j], eq.delays[l][j],
                             eq.type_rewards[l], cfg.tol, eq.kkt_residual])
        return _csv(_schema()["solve"]["columns"], rows)
    res_names = spec.resource_names or tuple(f"r{i}" for i in range(spec.n_resources))
    return _json({
        "scenario": spec.name,
        "tol": cfg.tol,
        "kkt_residual": _num(eq.kkt_residual),
        "polished": eq.polished,
        "iterations": eq.iterations,
        "potential": _num(eq.potential),
        "total_reward": _num(eq.total_reward),
        "active_mass": _num(eq.active_mass),
        "resource_duals": {r: _num(v) for r, v in zip(res_names, eq.resource_duals)},
        "types": [
            {
                "name": pt.name,
                "mass": _num(pt.mass),
                "reward": _num(eq.type_rewards[l]),
                "per_unit_reward": _num(eq.type_rewards[l] / pt.mass),
                "waiting_mass": _num(eq.waiting_mass[l]),
                "rates": {pt.activity_names[j]: _num(eq.rates[l][j]) for j in range(pt.n_activities)},
                "delays": {pt.activity_names[j]: _num(eq.delays[l][j]) for j in range(pt.n_activities)},
            }
            for l, pt in enumerate(spec.types)
        ],
    })


def _read_candidate(path: str, spec: GameSpec):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read candidate {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"candidate {path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict) or not data.get("x") or not data.get("w"):
        raise InputError('candidate must be a JSON object with non-empty "x" and "w" lists')
    extra = set(data) - {"x", "w"}
    if extra:
        raise InputError(f"unknown candidate fields: {sorted(extra)}")
    x, w = data["x"], data["w"]
    if len(x) != spec.n_types or len(w) != spec.n_types:
        raise InputError(f"candidate needs {spec.n_types} rate and delay vectors")
    try:
        x = [np.asarray(v, dtype=float).reshape(-1) for v in x]
        w = [np.asarray(v, dtype=float).reshape(-1) for v in w]
    except (TypeError, ValueError) as exc:
        raise InputError(f"candidate entries must be numbers: {exc}") from exc
    for l, pt in enumerate(spec.types):
        if x[l].shape != (pt.n_activities,) or w[l].shape != (pt.n_activities,):
            raise InputError(f"candidate type {l} vectors must have length {pt.n_activities}")
    return x, w


def cmd_verify(cfg: RunConfig, args) -> str:
    spec = _load(cfg, args)
    if args.candidate is None:
        raise InputError("verify needs --candidate FILE")
    x, w = _read_candidate(args.candidate, spec)
    rep = verify_equilibrium(spec, x, w, tol=cfg.tol)
    if cfg.fmt == "csv":
        rows = [[pt.name, rep.best_response_gaps[l], rep.resource_excess, rep.delay_residual,
                 rep.verdict, cfg.tol] for l, pt in enumerate(spec.types)]
        return _csv(_schema()["verify"]["columns"], rows)
    return _json({
        "scenario": spec.name,
        "tol": cfg.tol,
        "verdict": rep.verdict,
        "best_response_gaps": {pt.name: _num(rep.best_response_gaps[l]) for l, pt in enumerate(spec.types)},
        "resource_excess": _num(rep.resource_excess),
        "delay_residual": _num(rep.delay_residual),
        "delta": [_num(v) for v in rep.delta],
    })


def cmd_poa(cfg: RunConfig, args) -> str:
    spec = _load(cfg, args)
    rep = price_of_anarchy(spec, tol=cfg.tol)
    vals = [rep.optimal_value, rep.equilibrium_value, rep.ratio, rep.single_type, cfg.tol,
            rep.kkt_residual, rep.lp_duality_gap]
    if cfg.fmt == "csv":
        return _csv(_schema()["poa"]["columns"], [vals])
    keys = _schema()["poa"]["columns"]
    return _json({"scenario": spec.name,
                  **{k: (v if isinstance(v, bool) else _num(v)) for k, v in zip(keys, vals)}})


def _grid(args):
    if args.from_ is None or args.to is None:
        raise InputError("sweep needs --from and --to")
    if args.steps < 2:
        raise InputError("--steps must be >= 2")
    if not 0 < args.from_ <= args.to:
        raise InputError("need 0 < --from <= --to")
    return np.linspace(args.from_, args.to, args.steps)


def cmd_sweep(cfg: RunConfig, args) -> str:
    grid = _grid(args)
    specs = [_load(cfg, args, mass=float(d)) for d in grid]
    for s in specs:
        if s.n_types != 1:
            raise InputError("sweep needs a single-type scenario")

    def one(spec):
        eq = solve_potential(spec, tol=cfg.tol, max_iter=cfg.max_iter, seed=cfg.seed)
        d = spec.types[0].mass
        return [d, eq.total_reward, eq.active_mass, float(eq.waiting_mass.sum()), eq.total_reward / d,
                eq.kkt_residual]

    jobs = max(1, int(args.jobs))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, specs))  # map keeps grid order
    else:
        rows = [one(s) for s in specs]
    cols = _schema()["sweep"]["columns"]
    if cfg.fmt == "csv":
        return _csv(cols, rows)
    return _json({"scenario": specs[0].name.split("(")[0], "tol": cfg.tol,
                  "rows": [dict(zip(cols, map(_num, r))) for r in rows]})


def cmd_smdp(cfg: RunConfig, args) -> str:
    if (cfg.scenario is None) == (cfg.builtin is None):
        raise InputError("give exactly one of an SMDP path or --builtin")
    smdp = builtin_smdp(cfg.builtin, cfg.mass) if cfg.builtin is not None else load_smdp(cfg.scenario)
    eq = solve_smdp(smdp, tol=cfg.tol, max_iter=cfg.max_iter, seed=cfg.seed)
    st = smdp.pair_state
    if cfg.fmt == "csv":
        rows = [[s, a, eq.policy[k], eq.rates[k], eq.delays[k], eq.pi[st[k]], eq.gain, eq.dp_residual,
                 cfg.tol] for k, (s, a) in enumerate(smdp.pairs)]
        return _csv(_schema()["smdp"]["columns"], rows)
    return _json({
        "scenario": smdp.name,
        "tol": cfg.tol,
        "gain": _num(eq.gain),
        "dp_residual": _num(eq.dp_residual),
        "kkt_residual": _num(eq.equilibrium.kkt_residual),
        "total_reward": _num(eq.equilibrium.total_reward),
        "unvisited_states": list(eq.flagged),
        "V": {s: _num(v) for s, v in zip(smdp.states, eq.V)},
        "pi": {s: _num(v) for s, v in zip(smdp.states, eq.pi)},
        "pairs": [
            {"state": s, "action": a, "policy": _num(eq.policy[k]), "rate": _num(eq.rates[k]),
             "delay": _num(eq.delays[k])}
            for k, (s, a) in enumerate(smdp.pairs)
        ],
    })


def cmd_simulate(cfg: RunConfig, args) -> str:
    spec = _load(cfg, args)
    delta0 = None
    if args.delta0 is not None:
        try:
            delta0 = [float(v) for v in args.delta0.split(",")] if args.delta0 else []
        except ValueError as exc:
            raise InputError(f"--delta0 must be comma-separated numbers: {exc}") from exc
    trace = simulate(spec, delta0=delta0, step=args.step, horizon=args.horizon,
                     smoothing=args.smoothing, record_every=args.record_every)
    eq = solve_potential(spec, tol=cfg.tol, max_iter=cfg.max_iter)
    rep = convergence_report(trace, eq)
    summary = {"value_gap": _num(rep.value_gap), "delay_gap": _num(rep.delay_gap),
               "final_time": _num(rep.final_time), "max_delta": _num(trace.max_delta),
               "delta_bound": _num(trace.bound), "tol": cfg.tol}
    sys.stderr.write(_json(summary))
    if cfg.fmt == "json":
        return _json({
            "scenario": spec.name,
            **summary,
            "columns": trace.columns(),
            "final": [_num(v) for v in [trace.times[-1], *trace.delta[-1], trace.potential[-1],
                                        trace.residual[-1], *trace.rates[-1]]],
        })
    return trace.to_csv()


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "poa": cmd_poa,
    "sweep": cmd_sweep,
    "smdp": cmd_smdp,
    "simulate": cmd_simulate,
}


def _csv_help() -> str:
    lines = ["CSV columns (numbers use 12 significant digits):"]
    for cmd, info in _schema().items():
        if isinstance(info, dict):
            lines.append(f"  {cmd}: {', '.join(info['columns'])}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", nargs="?", help="scenario JSON file")
    common.add_argument("--builtin", choices=BUILTINS, help="use a builtin scenario instead of a file")
    common.add_argument("--eps", type=float, help="parameter of crowdsourcing and poa_family")
    common.add_argument("--mass", type=float, help="population mass (ride_hailing, smdp_chain, single-type files)")
    common.add_argument("--sizes", default="1,2,4", help="L,I,J for --builtin random (default 1,2,4)")
    common.add_argument("--tol", type=float, default=1e-8, help="solver tolerance (default 1e-8)")
    common.add_argument("--max-iter", type=int, default=10000, help="Newton step budget (default 10000)")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--seed", type=int, default=None, help="random builtin seed and solver restart seed")

    p = argparse.ArgumentParser(
        prog="closedrag",
        description="Equilibria of closed non-atomic resource allocation games.",
        epilog=_csv_help() + "\nExit codes: 0 ok, 2 input error, 3 solver failure.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"closedrag {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter
    sub.add_parser("solve", parents=[common], help="equilibrium via the potential", epilog=_csv_help(),
                   formatter_class=fmt)
    v = sub.add_parser("verify", parents=[common], help="check a candidate equilibrium", epilog=_csv_help(),
                       formatter_class=fmt)
    v.add_argument("--candidate", help='JSON file {"x": [[...] per type], "w": [[...] per type]}')
    sub.add_parser("poa", parents=[common], help="price of anarchy", epilog=_csv_help(), formatter_class=fmt)
    s = sub.add_parser("sweep", parents=[common], help="equilibrium over a grid of masses", epilog=_csv_help(),
                       formatter_class=fmt)
    s.add_argument("--from", dest="from_", type=float)
    s.add_argument("--to", type=float)
    s.add_argument("--steps", type=int, default=2)
    s.add_argument("--jobs", type=int, default=1, help="solve grid points concurrently")
    sub.add_parser("smdp", parents=[common], help="SMDP game equilibrium and DP check", epilog=_csv_help(),
                       formatter_class=fmt)
    d = sub.add_parser("simulate", parents=[common], help="queue-price dynamics (CSV trace)", epilog=_csv_help(),
                       formatter_class=fmt)
    d.add_argument("--horizon", type=float, default=200.0)
    d.add_argument("--step", type=float, default=1e-2)
    d.add_argument("--smoothing", type=float, default=0.0)
    d.add_argument("--record-every", type=int, default=10)
    d.add_argument("--delta0", default=None, help="comma-separated initial queue prices")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = "csv" if args.command in ("sweep", "simulate") else "json"
    if args.command == "smdp" and args.builtin not in (None, "smdp_chain", "pigou"):
        sys.stderr.write("error: smdp builtins are smdp_chain and pigou\n")
        return EXIT_INPUT
    try:
        cfg = _config(args)
        out = COMMANDS[args.command](cfg, args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except SolverError as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER
    except ClosedRagError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_SOLVER
    sys.stdout.write(out)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
