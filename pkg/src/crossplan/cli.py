"""Command-line entry points: single simulations and parameter sweeps."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .domain import DomainParams, IDMParams, NoiseParams, RewardParams
from .simulation import load_scenario, run_simulation
from .solver import SolverConfig
from .sweep import SweepConfig, emit_csv, emit_svg, run_sweep
from .topology import ParseError


class ConfigError(ValueError):
    pass


def build_configs(overrides: dict | None = None):
    """(SolverConfig, DomainParams) from a config dict keyed by the usual
    parameter names: action_set, c, N, n_ep, n_par, gamma, Q, R, sigma_omega1,
    tau, delta, d_min, R_acc, R_vel, R_crash, a_lat_max, v_lim."""
    cfg = dict(overrides or {})

    def pop(key, default):
        return cfg.pop(key, default)

    try:
        action_set = tuple(float(a) for a in pop("action_set", (-2, -1, 0, 1)))
        solver = SolverConfig(
            horizon=int(pop("N", 5)),
            n_episodes=int(pop("n_ep", 3000)),
            n_particles=int(pop("n_par", 300)),
            ucb_c=float(pop("c", 20000.0)),
            gamma=float(pop("gamma", 1.0)),
            lookahead_depth=int(pop("lookahead", 3)),
        )
        idm = IDMParams(
            v_des=float(pop("v_des", 8.0)),
            tau=float(pop("tau", 2.0)),
            delta=float(pop("delta", 4.0)),
            d_min=float(pop("d_min", 1.0)),
            a_max=float(pop("idm_a_max", max(action_set))),
            a_min=float(pop("idm_a_min", min(action_set))),
        )
        rewards = RewardParams(
            r_acc=float(pop("R_acc", 1.0)),
            r_vel=float(pop("R_vel", 100.0)),
            r_crash=float(pop("R_crash", 10000.0)),
            a_lat_max=float(pop("a_lat_max", 0.5)),
            v_lim=float(pop("v_lim", 8.0)),
        )
        noise = NoiseParams(
            Q=pop("Q", 0.0),
            R=pop("R", (1e-2, 1e-2, 0.0)),
            sigma_omega1=float(pop("sigma_omega1", 1.0)),
        )
        other_v = pop("other_v_des", None)
        params = DomainParams(
            idm=idm, rewards=rewards, noise=noise, action_set=action_set,
            gamma=solver.gamma, lookahead_depth=solver.lookahead_depth,
            other_v_cap=None if other_v is None else float(other_v),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg:
        raise ConfigError(f"unknown config keys: {sorted(cfg)}")
    return solver, params


def _load_config_arg(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def cmd_simulate(args) -> int:
    solver, params = build_configs(_load_config_arg(args.config))
    scenario = load_scenario(args.scenario)
    log_fh = open(args.log, "w") if args.log else sys.stdout
    try:
        result = run_simulation(scenario, solver, params, dt=args.dt,
                                seed=args.seed, log_fh=log_fh,
                                timing=args.timing)
    finally:
        if args.log:
            log_fh.close()
    summary = {"normalized_reward": result.normalized_reward,
               "crashed": result.crashed,
               "reached_goal": result.reached_goal,
               "steps": result.steps}
    if args.timing:
        summary["wall_runtime"] = result.wall_runtime
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def _parse_values(text: str):
    return [float(v) for v in text.split(",") if v != ""]


def cmd_sweep(args) -> int:
    solver, params = build_configs(_load_config_arg(args.config))
    scenario = load_scenario(args.scenario)
    if len(args.param) != len(args.values):
        raise ConfigError("each --param needs a matching --values list")
    grid = {}
    for name, values in zip(args.param, args.values):
        grid[name] = _parse_values(values)
    config = SweepConfig(
        scenario=scenario,
        grid=grid,
        dts=tuple(_parse_values(args.dt)),
        runs_per_cell=args.runs,
        seed_base=args.seed,
        base_solver=solver,
        base_params=params,
        cartesian=args.cartesian,
        jobs=args.jobs,
        timing=args.timing,
    )
    cells = run_sweep(config)
    csv_bytes = emit_csv(cells)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(csv_bytes)
    else:
        sys.stdout.write(csv_bytes.decode())
    if args.plot:
        with open(args.plot, "wb") as fh:
            fh.write(emit_svg(cells))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="crossplan",
        description="Belief-tree intersection crossing planner tools")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one simulation")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--dt", type=float, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--config", default=None,
                     help="JSON file overriding default parameters")
    sim.add_argument("--log", default=None,
                     help="write the step log here instead of stdout")
    sim.add_argument("--timing", action="store_true",
                     help="include wall-clock runtime in the summary")
    sim.set_defaults(func=cmd_simulate)

    swp = sub.add_parser("sweep", help="run a parameter sweep")
    swp.add_argument("--scenario", required=True)
    swp.add_argument("--config", default=None,
                     help="JSON file overriding default parameters")
    swp.add_argument("--param", action="append", required=True,
                     help="parameter name: N, c, n_ep, n_par, gamma")
    swp.add_argument("--values", action="append", required=True,
                     help="comma-separated values for the matching --param")
    swp.add_argument("--dt", default="1,0.5,0.25",
                     help="comma-separated step lengths")
    swp.add_argument("--runs", type=int, default=50)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--jobs", type=int, default=1)
    swp.add_argument("--out", default=None, help="CSV output path")
    swp.add_argument("--plot", default=None, help="SVG output path")
    swp.add_argument("--cartesian", action="store_true",
                     help="sweep the full product of all --param grids")
    swp.add_argument("--timing", dest="timing", action="store_true",
                     default=True)
    swp.add_argument("--no-timing", dest="timing", action="store_false",
                     help="zero the runtime columns for byte-stable output")
    swp.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, FileNotFoundError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
