"""Closed-loop trace-replay simulation.

Other vehicles follow recorded trajectories exactly; only the ego is planned
online.  Inside the planner's imagination the others follow IDM, but their
simulated ground truth is the trace, so the planner must yield rather than
expect cooperation.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import domain as D
from ._kernels import step_kinematics
from .solver import SolverConfig, advance, plan
from .topology import LaneGraph, ParseError, PathSet, build_path_set, parse_map


class UnknownPath(ParseError):
    """The scenario's ego path is not one of the map's enumerated paths."""


class NonMonotoneTrace(ParseError):
    """Trace timestamps must be strictly increasing."""


@dataclass
class VehicleTrace:
    """Time-stamped global samples [x, y, vx, vy, hx, hy] for one vehicle."""

    w: float
    l: float
    times: np.ndarray
    samples: np.ndarray

    def present(self, t: float) -> bool:
        return self.times[0] <= t <= self.times[-1]

    def interpolate(self, t: float):
        """Linear interpolation of position/velocity; heading renormalized.

        Clamps outside the trace span.
        """
        row = np.empty(6)
        for c in range(6):
            row[c] = np.interp(t, self.times, self.samples[:, c])
        norm = np.hypot(row[4], row[5])
        if norm > 1e-12:
            row[4] /= norm
            row[5] /= norm
        return row


def interpolate_trace(trace: VehicleTrace, t: float):
    """(position, velocity, heading) of a trace at time t."""
    row = trace.interpolate(t)
    return row[0:2], row[2:4], row[4:6]


@dataclass
class Scenario:
    """A map, the ego's task on it, and the other vehicles' recorded motion."""

    graph: LaneGraph
    paths: PathSet
    ego_path: int
    ego_p0: float
    ego_v0: float
    ego_geom: D.VehicleGeometry
    vehicles: list[VehicleTrace]
    horizon: float
    name: str = ""


def _resolve_ego_path(paths: PathSet, spec, routes) -> int:
    if isinstance(spec, int):
        if not 0 <= spec < len(paths):
            raise UnknownPath(f"path index {spec} out of range")
        return spec
    wanted = tuple(str(s) for s in spec)
    for i, route in enumerate(routes):
        if route == wanted:
            return i
    raise UnknownPath(f"no enumerated path follows lanes {wanted}")


def load_scenario(source, base_dir=None) -> Scenario:
    """Parse and validate a scenario JSON file or string.

    Format: ``{"map": path, "ego": {"path": index-or-lane-list, "p0": m,
    "v0": m/s, "w": m, "l": m}, "vehicles": [{"w":, "l":,
    "samples": [[t, x, y, vx, vy, hx, hy], ...]}], "horizon": s}``.
    The map path is resolved against base_dir (or the scenario file's
    directory).
    """
    if isinstance(source, (str, Path)) and Path(source).exists():
        text = Path(source).read_text()
        if base_dir is None:
            base_dir = Path(source).parent
        name = Path(source).stem
    else:
        text = source if isinstance(source, str) else source.decode()
        name = ""
    if base_dir is None:
        base_dir = Path(".")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid scenario JSON: {exc}") from exc

    for key in ("map", "ego", "vehicles", "horizon"):
        if key not in raw:
            raise ParseError(f"scenario missing key {key!r}")

    map_path = Path(base_dir) / raw["map"]
    graph = parse_map(map_path.read_bytes())
    paths, routes = build_path_set(graph, with_routes=True)

    ego = raw["ego"]
    ego_path = _resolve_ego_path(paths, ego["path"], routes)
    ego_geom = D.VehicleGeometry(float(ego["w"]), float(ego["l"]))

    vehicles = []
    for i, veh in enumerate(raw["vehicles"]):
        arr = np.asarray(veh["samples"], dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 7:
            raise ParseError(f"vehicle {i}: samples must be rows of 7 values")
        times = arr[:, 0]
        if np.any(np.diff(times) <= 0):
            raise NonMonotoneTrace(f"vehicle {i}: timestamps not strictly increasing")
        vehicles.append(VehicleTrace(float(veh["w"]), float(veh["l"]),
                                     times.copy(), arr[:, 1:].copy()))

    horizon = float(raw["horizon"])
    if horizon <= 0:
        raise ParseError("horizon must be positive")

    return Scenario(graph, paths, ego_path, float(ego["p0"]), float(ego["v0"]),
                    ego_geom, vehicles, horizon, name)


@dataclass
class RunResult:
    """Outcome of one simulation."""

    normalized_reward: float
    crashed: bool
    reached_goal: bool
    steps: int
    wall_runtime: float
    action_log: list = field(default_factory=list)

    def to_dict(self):
        return {
            "normalized_reward": self.normalized_reward,
            "crashed": self.crashed,
            "reached_goal": self.reached_goal,
            "steps": self.steps,
            "wall_runtime": self.wall_runtime,
        }


def _true_observation(scenario, roster, ego_state, rng, noise: D.NoiseParams,
                      paths, t):
    """Observation rows for ego (via its path state) and the roster traces."""
    n_all = len(roster) + 1
    obs = np.empty((n_all, 6))
    pos, hdg, _ = paths.paths[ego_state.mu].eval(ego_state.p)
    obs[0, 0:2] = pos
    obs[0, 2:4] = ego_state.v * hdg
    obs[0, 4:6] = hdg
    for j, vi in enumerate(roster):
        obs[j + 1] = scenario.vehicles[vi].interpolate(t)
    sds = np.sqrt(noise.r_diag)
    scale = np.array([sds[0], sds[0], sds[1], sds[1], sds[2], sds[2]])
    obs += rng.standard_normal((n_all, 6)) * scale
    return obs


def _true_crash(scenario, roster, ego_state, paths, ego_geom, t) -> bool:
    """Ground-truth overlap between the ego rectangle and any trace vehicle."""
    pos, hdg, _ = paths.paths[ego_state.mu].eval(ego_state.p)
    for vi in roster:
        tr = scenario.vehicles[vi]
        row = tr.interpolate(t)
        if D.rect_overlap(pos, hdg, (ego_geom.w, ego_geom.l),
                          row[0:2], row[4:6], (tr.w, tr.l)):
            return True
    return False


def run_simulation(scenario: Scenario, config: SolverConfig,
                   params: D.DomainParams, dt: float, seed: int,
                   log_fh=None, timing: bool = True) -> RunResult:
    """Run one closed-loop simulation and return its result.

    Per step: observe (trace interpolation plus configured noise), update or
    regenerate the belief, plan, apply the chosen ego acceleration through the
    point-mass model, and accumulate the reward earned against the ground
    truth.  Identical (scenario, config, params, dt, seed) inputs produce an
    identical result and an identical step log.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    max_steps = int(round(scenario.horizon / dt))
    if max_steps > 100_000:
        raise ValueError("horizon/dt too large")

    t_start = time.perf_counter() if timing else 0.0
    rng = np.random.default_rng(seed)
    paths = scenario.paths
    ego_geom = scenario.ego_geom
    ego = D.VehicleState(scenario.ego_p0, scenario.ego_v0, scenario.ego_path)
    ego_len = paths.lengths[scenario.ego_path]
    qp = float(np.sqrt(params.noise.q_diag[0]))
    qv = float(np.sqrt(params.noise.q_diag[1]))

    roster: list[int] = []
    model = None
    tree = None
    belief = None
    last_action = None

    total_reward = 0.0
    crashed = False
    reached_goal = False
    action_log = []
    steps = 0

    for k in range(max_steps):
        t = k * dt
        new_roster = [i for i, tr in enumerate(scenario.vehicles) if tr.present(t)]
        obs = _true_observation(scenario, new_roster, ego, rng, params.noise,
                                paths, t)
        if model is None or new_roster != roster:
            roster = new_roster
            geoms = np.array([[ego_geom.w, ego_geom.l]]
                             + [[scenario.vehicles[i].w, scenario.vehicles[i].l]
                                for i in roster])
            model = D.IntersectionModel(paths, geoms, params, dt)
            belief = model.spawn(obs, ego, config.n_particles, rng)
            tree = None
        else:
            tree = advance(tree, last_action, obs, model, config, rng,
                           regenerate=lambda o: model.spawn(o, ego,
                                                            config.n_particles, rng))
            belief = tree.root_belief

        action, tree = plan(belief, tree, model, config, rng)

        # ground-truth step
        if qp > 0 or qv > 0:
            nse = rng.standard_normal(2)
        else:
            nse = (0.0, 0.0)
        p2, v2 = step_kinematics(ego.p, ego.v, float(action), dt, ego_len,
                                 qp, qv, nse[0], nse[1])
        ego = D.VehicleState(float(p2), float(v2), ego.mu)
        t_next = (k + 1) * dt
        roster_next = [i for i, tr in enumerate(scenario.vehicles)
                       if tr.present(t_next)]

        v_des = D.desired_velocity(ego.p, ego.mu, paths, params.rewards)
        dv = v_des - ego.v
        r_vel = -params.rewards.r_vel * (dv if dv >= 1.0 else dv * dv)
        r_acc = -params.rewards.r_acc * float(action) ** 2
        crash_now = _true_crash(scenario, roster_next, ego, paths, ego_geom,
                                t_next)
        r_crash = -params.rewards.r_crash if crash_now else 0.0
        r = r_vel + r_acc + r_crash
        total_reward += r
        steps = k + 1
        action_log.append((k, float(action), ego.p, ego.v))
        last_action = action

        if log_fh is not None:
            rec = {"k": k, "t": round(t, 9), "action": float(action),
                   "ego_p": ego.p, "ego_v": ego.v, "r_vel": r_vel,
                   "r_acc": r_acc, "r_crash": r_crash, "r": r,
                   "crash": crash_now}
            log_fh.write(json.dumps(rec, sort_keys=True) + "\n")

        if crash_now:
            crashed = True
            break
        if ego.p >= ego_len - 0.5 * ego_geom.l:
            reached_goal = True
            break

    wall = (time.perf_counter() - t_start) if timing else 0.0
    return RunResult(normalized_reward=dt * total_reward, crashed=crashed,
                     reached_goal=reached_goal, steps=steps,
                     wall_runtime=wall, action_log=action_log)
