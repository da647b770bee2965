"""Intersection crossing domain: joint vehicle states on discretized paths,
point-mass dynamics with IDM-predicted traffic, a global-frame observation
model with path-intention inference, rectangle collision checks, and the
reward shaping the ego's crossing behavior.

States are [p, v, mu] per vehicle (arc position, longitudinal speed, path
index), stacked into an (n+1, 3) array with the ego in row 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels as K
from .pomdp import ParticleBelief
from .topology import PathSet


class VehicleState(NamedTuple):
    p: float
    v: float
    mu: int


class VehicleGeometry(NamedTuple):
    w: float
    l: float


@dataclass
class JointState:
    """Ego plus n other vehicles as one (n+1, 3) array of [p, v, mu] rows."""

    array: np.ndarray

    def __post_init__(self):
        self.array = np.ascontiguousarray(self.array, dtype=float)
        if self.array.ndim != 2 or self.array.shape[1] != 3:
            raise ValueError("joint state must have shape (n+1, 3)")

    @classmethod
    def make(cls, ego: VehicleState, others: Sequence[VehicleState] = ()) -> "JointState":
        rows = [list(ego)] + [list(o) for o in others]
        return cls(np.array(rows, dtype=float))

    @property
    def ego(self) -> VehicleState:
        r = self.array[0]
        return VehicleState(float(r[0]), float(r[1]), int(r[2]))

    @property
    def others(self) -> list[VehicleState]:
        return [VehicleState(float(r[0]), float(r[1]), int(r[2]))
                for r in self.array[1:]]

    @property
    def n_others(self) -> int:
        return self.array.shape[0] - 1


@dataclass
class IDMParams:
    """Car-following parameters for predicting the other vehicles."""

    v_des: float = 8.0
    tau: float = 2.0
    delta: float = 4.0
    d_min: float = 1.0
    a_max: float = 1.0
    a_min: float = -2.0

    def __post_init__(self):
        if self.v_des <= 0:
            raise ValueError("v_des must be positive")
        if self.tau < 0 or self.d_min < 0:
            raise ValueError("tau and d_min must be nonnegative")
        if self.a_max <= 0 or self.a_min >= 0:
            raise ValueError("a_max must be positive and a_min negative")


@dataclass
class RewardParams:
    r_vel: float = 100.0
    r_acc: float = 1.0
    r_crash: float = 10000.0
    a_lat_max: float = 0.5
    v_lim: float = 8.0

    def __post_init__(self):
        if min(self.r_vel, self.r_acc, self.r_crash, self.a_lat_max) < 0:
            raise ValueError("reward weights must be nonnegative")
        if self.v_lim <= 0:
            raise ValueError("v_lim must be positive")


def _as_diag3(value, name: str) -> np.ndarray:
    """Coerce a covariance argument to its 3-vector diagonal."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        diag = np.array([float(arr), float(arr), 0.0])
    elif arr.shape == (3,):
        diag = arr.copy()
    elif arr.shape == (3, 3):
        if np.any(arr != np.diag(np.diag(arr))):
            raise ValueError(f"{name} must be diagonal")
        diag = np.diag(arr).copy()
    else:
        raise ValueError(f"{name} must be a scalar, 3-vector, or 3x3 diagonal")
    if np.any(diag < 0):
        raise ValueError(f"{name} must be positive semidefinite")
    return diag


@dataclass
class NoiseParams:
    """Process covariance Q over [p, v, mu], measurement covariance R read as
    (position, velocity, heading) per-coordinate variances, and the IDM
    acceleration noise standard deviation."""

    Q: object = 0.0
    R: object = (1e-2, 1e-2, 0.0)
    sigma_omega1: float = 1.0

    def __post_init__(self):
        qd = _as_diag3(self.Q, "Q")
        if qd[2] != 0.0:
            raise ValueError("path-intention noise must be zero")
        self.q_diag = qd
        self.r_diag = _as_diag3(self.R, "R")
        if self.sigma_omega1 < 0:
            raise ValueError("sigma_omega1 must be nonnegative")


@dataclass
class DomainParams:
    """Everything the intersection model needs besides the paths themselves."""

    idm: IDMParams = field(default_factory=IDMParams)
    rewards: RewardParams = field(default_factory=RewardParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    action_set: tuple = (-2.0, -1.0, 0.0, 1.0)
    key_pos_bin: float = 2.0
    key_speed_bin: float = 1.0
    leader_lat_max: float = 1.5
    leader_ahead_max: float = 100.0
    leader_gap_floor: float = 0.1
    lookahead_depth: int = 3
    gamma: float = 1.0
    other_v_cap: Optional[float] = None

    def __post_init__(self):
        if not self.action_set:
            raise ValueError("action set must be non-empty")
        if len(set(self.action_set)) != len(self.action_set):
            raise ValueError("action set has duplicates")

    def vector(self, dt: float) -> np.ndarray:
        vec = np.zeros(K.N_PARAMS)
        vec[K.P_DT] = dt
        vec[K.P_TAU] = self.idm.tau
        vec[K.P_DELTA] = self.idm.delta
        vec[K.P_DMIN] = self.idm.d_min
        vec[K.P_AMAX] = self.idm.a_max
        vec[K.P_AMIN] = self.idm.a_min
        vec[K.P_SIGMA_IDM] = self.noise.sigma_omega1
        vec[K.P_OTHER_VCAP] = (self.other_v_cap if self.other_v_cap is not None
                               else self.rewards.v_lim)
        vec[K.P_RVEL] = self.rewards.r_vel
        vec[K.P_RACC] = self.rewards.r_acc
        vec[K.P_RCRASH] = self.rewards.r_crash
        vec[K.P_ALATMAX] = self.rewards.a_lat_max
        vec[K.P_VLIM] = self.rewards.v_lim
        vec[K.P_POS_SD] = math.sqrt(self.noise.r_diag[0])
        vec[K.P_VEL_SD] = math.sqrt(self.noise.r_diag[1])
        vec[K.P_HEAD_SD] = math.sqrt(self.noise.r_diag[2])
        vec[K.P_KEY_POS_BIN] = self.key_pos_bin
        vec[K.P_KEY_SPEED_BIN] = self.key_speed_bin
        vec[K.P_QP_SD] = math.sqrt(self.noise.q_diag[0])
        vec[K.P_QV_SD] = math.sqrt(self.noise.q_diag[1])
        vec[K.P_LEAD_LAT] = self.leader_lat_max
        vec[K.P_LEAD_AHEAD] = self.leader_ahead_max
        vec[K.P_LEAD_FLOOR] = self.leader_gap_floor
        vec[K.P_LOOKAHEAD] = float(self.lookahead_depth)
        vec[K.P_GAMMA] = self.gamma
        return vec


LEADER_TABLE_STEP = 0.5


def leader_tables(paths: PathSet):
    """Cross-path projection tables used by leader search, cached on the set.

    For each ordered path pair (a, b) and each half-meter grid point along b,
    the tables hold the arc position of that point projected onto a and the
    lateral distance of the projection.
    """
    cached = getattr(paths, "_leader_tables", None)
    if cached is not None:
        return cached
    m = len(paths)
    chunks_p: list[np.ndarray] = []
    chunks_lat: list[np.ndarray] = []
    offsets = [0]
    for a in range(m):
        for b in range(m):
            grid = np.arange(0.0, paths.lengths[b], LEADER_TABLE_STEP)
            grid = np.append(grid, paths.lengths[b])
            if a == b:
                p_on = grid.copy()
                lat = np.zeros_like(grid)
            else:
                pos, _, _ = paths.paths[b].eval(grid)
                p_on = np.empty(len(grid))
                lat = np.empty(len(grid))
                for i in range(len(grid)):
                    p_on[i], lat[i] = paths.project(a, pos[i])
            chunks_p.append(p_on)
            chunks_lat.append(lat)
            offsets.append(offsets[-1] + len(grid))
    tables = (np.concatenate(chunks_p), np.concatenate(chunks_lat),
              np.array(offsets, dtype=np.int64), LEADER_TABLE_STEP)
    paths._leader_tables = tables
    return tables


# ---------------------------------------------------------------------------
# Spec-level operations
# ---------------------------------------------------------------------------

def step_vehicle(state: VehicleState, accel: float, dt: float, Q=None,
                 rng=None, path_length: float = np.inf) -> VehicleState:
    """One point-mass step: constant acceleration over dt, optional process
    noise, no reversing, position clamped to the path."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if Q is None:
        qp = qv = 0.0
    else:
        qd = _as_diag3(Q, "Q")
        qp, qv = math.sqrt(qd[0]), math.sqrt(qd[1])
    if (qp > 0 or qv > 0) and rng is None:
        raise ValueError("rng required when Q is nonzero")
    np_, nv = (rng.standard_normal(2) if rng is not None else (0.0, 0.0))
    p2, v2 = K.step_kinematics(state.p, state.v, accel, dt, path_length,
                               qp, qv, np_, nv)
    return VehicleState(float(p2), float(v2), state.mu)


def idm_desired_gap(v: float, v_lead: float, params: IDMParams) -> float:
    """IDM dynamic desired gap d*."""
    return (params.d_min + v * params.tau
            + v * (v - v_lead) / (2.0 * math.sqrt(params.a_max * abs(params.a_min))))


def idm_accel(state: VehicleState, leader, params: IDMParams,
              sigma: float = 0.0, rng=None) -> float:
    """IDM acceleration with optional Gaussian noise, clamped to [a_min, a_max].

    `leader` is None on a free road, else a (v_lead, d_lead) pair with
    d_lead > 0.
    """
    if leader is None:
        has, v_lead, d_lead = False, 0.0, 1.0
    else:
        v_lead, d_lead = leader
        if d_lead <= 0:
            raise ValueError("d_lead must be positive")
        has = True
    rho = K.idm_rho(state.v, params.v_des, v_lead, d_lead, has,
                    params.tau, params.delta, params.d_min,
                    params.a_max, params.a_min)
    u = params.a_max * rho
    if sigma > 0:
        u += sigma * rng.standard_normal()
    return float(min(max(u, params.a_min), params.a_max))


def find_leader(joint: JointState, idx: int, paths: PathSet,
                geometries) -> Optional[tuple[float, float]]:
    """Nearest vehicle ahead of vehicle `idx` on its path, if any.

    A vehicle leads when its center projects onto the path within 1.5 m
    laterally and up to 100 m ahead.  The returned gap is center-to-center
    arc distance minus both half lengths, floored at 0.1 m.
    """
    geoms = np.asarray(geometries, dtype=float)
    lt_p, lt_lat, ltoff, lstep = leader_tables(paths)
    found, v_lead, gap = K.find_leader(
        joint.array, geoms, idx, paths.knots, paths.koff, paths.cx, paths.cy,
        lt_p, lt_lat, ltoff, lstep, 1.5, 100.0, 0.1)
    if not found:
        return None
    return float(v_lead), float(gap)


def observe(joint: JointState, paths: PathSet, noise: NoiseParams,
            rng) -> np.ndarray:
    """Noisy global measurements [x, y, vx, vy, hx, hy] per vehicle."""
    params = DomainParams(noise=noise).vector(1.0)
    n = joint.array.shape[0]
    out = np.empty((n, 6))
    K.observe(joint.array, params, paths.knots, paths.koff, paths.cx, paths.cy,
              rng.standard_normal(6 * n), out)
    return out


def observation_log_likelihood(obs, joint: JointState, paths: PathSet,
                               noise: NoiseParams) -> float:
    params = DomainParams(noise=noise).vector(1.0)
    return float(K.log_likelihood(np.asarray(obs, dtype=float), joint.array,
                                  params, paths.knots, paths.koff,
                                  paths.cx, paths.cy))


def observation_likelihood(obs, joint: JointState, paths: PathSet,
                           noise: NoiseParams) -> float:
    """Gaussian density of the measurement residuals; zero-variance heading
    blocks are excluded."""
    return math.exp(observation_log_likelihood(obs, joint, paths, noise))


def intention_distribution(position, heading, paths: PathSet) -> np.ndarray:
    """Posterior over path intentions from one position/heading measurement.

    Combines the projection-distance feature, the heading-alignment feature,
    and the per-path overlap coefficient, normalized over all paths.
    """
    m = len(paths)
    logw = np.empty(m)
    pp = np.empty(m)
    hx = np.empty(m)
    hy = np.empty(m)
    K.intention_weights(paths.q, paths.knots, paths.koff, paths.cx, paths.cy,
                        paths.samp_x, paths.samp_y, paths.samp_p, paths.poff,
                        float(position[0]), float(position[1]),
                        float(heading[0]), float(heading[1]), logw, pp, hx, hy)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def curvature_speed_limit(kappa: float, a_lat_max: float,
                          v_lim: float) -> float:
    """min(sqrt(a_lat_max / kappa), v_lim); straight segments give v_lim."""
    return float(K.desired_velocity(kappa, a_lat_max, v_lim))


def desired_velocity(p: float, mu: int, paths: PathSet,
                     params: RewardParams) -> float:
    """Curvature-limited desired speed at a path position."""
    kappa = paths.paths[mu].curvature(p)
    return curvature_speed_limit(kappa, params.a_lat_max, params.v_lim)


def rect_overlap(center1, axis1, size1, center2, axis2, size2) -> bool:
    """Separating-axis overlap test; sizes are (w, l), axes unit headings."""
    return bool(K.rect_overlap(float(center1[0]), float(center1[1]),
                               float(axis1[0]), float(axis1[1]),
                               float(size1[1]), float(size1[0]),
                               float(center2[0]), float(center2[1]),
                               float(axis2[0]), float(axis2[1]),
                               float(size2[1]), float(size2[0])))


def collision_check(joint: JointState, geometries, paths: PathSet) -> bool:
    """True iff the ego rectangle overlaps any other vehicle's rectangle."""
    geoms = np.asarray(geometries, dtype=float)
    return bool(K.ego_collision(joint.array, geoms, paths.knots, paths.koff,
                                paths.cx, paths.cy))


def terminal_kind(joint: JointState, paths: PathSet,
                  geometries) -> Optional[str]:
    """'crash' on rectangle overlap, 'goal' once the ego clears its path end,
    else None; crash dominates."""
    geoms = np.asarray(geometries, dtype=float)
    if collision_check(joint, geoms, paths):
        return "crash"
    ego = joint.ego
    if ego.p >= paths.lengths[ego.mu] - 0.5 * geoms[0, 1]:
        return "goal"
    return None


def reward(joint: JointState, ego_action: float, next_joint: JointState,
           params: RewardParams, paths: PathSet, geometries) -> float:
    """Velocity tracking + acceleration penalty + crash penalty."""
    vec = DomainParams(rewards=params).vector(1.0)
    geoms = np.asarray(geometries, dtype=float)
    r, _ = K.reward_terminal(next_joint.array, float(ego_action), vec, geoms,
                             paths.lengths, paths.knots, paths.koff,
                             paths.cx, paths.cy)
    return float(r)


def _intention_tables(obs_row, paths: PathSet):
    """Per-path posterior, projections, and projected speeds for one
    measured vehicle row [x, y, vx, vy, hx, hy]."""
    m = len(paths)
    logw = np.empty(m)
    pp = np.empty(m)
    hx = np.empty(m)
    hy = np.empty(m)
    K.intention_weights(paths.q, paths.knots, paths.koff, paths.cx, paths.cy,
                        paths.samp_x, paths.samp_y, paths.samp_p, paths.poff,
                        float(obs_row[0]), float(obs_row[1]),
                        float(obs_row[4]), float(obs_row[5]), logw, pp, hx, hy)
    w = np.exp(logw - logw.max())
    probs = w / w.sum()
    v_proj = np.maximum(0.0, obs_row[2] * hx + obs_row[3] * hy)
    return probs, pp, v_proj


def spawn_particles(obs, paths: PathSet, n_par: int, ego: VehicleState,
                    rng) -> ParticleBelief:
    """Fresh belief from one observation: per particle and per other vehicle,
    sample a path intention from the intention distribution, project the
    measured position onto it, and project the measured velocity onto the
    path heading (floored at zero).  The ego row is copied exactly."""
    if n_par < 1:
        raise ValueError("n_par must be >= 1")
    obs = np.asarray(obs, dtype=float)
    n_all = obs.shape[0]
    particles = np.empty((n_par, n_all, 3))
    particles[:, 0, 0] = ego.p
    particles[:, 0, 1] = ego.v
    particles[:, 0, 2] = ego.mu
    for i in range(1, n_all):
        probs, pp, v_proj = _intention_tables(obs[i], paths)
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        mus = np.searchsorted(cum, rng.random(n_par), side="right")
        particles[:, i, 0] = pp[mus]
        particles[:, i, 1] = v_proj[mus]
        particles[:, i, 2] = mus
    return ParticleBelief(particles, n_target=n_par)


# ---------------------------------------------------------------------------
# Solver-facing model
# ---------------------------------------------------------------------------

class IntersectionModel:
    """Generative model over (n+1, 3) joint-state arrays for the tree search.

    One instance is bound to a path set, a vehicle roster (geometries), the
    planning step length, and a parameter bundle.  All stochastic methods
    take an explicit numpy Generator.
    """

    def __init__(self, paths: PathSet, geometries, params: DomainParams,
                 dt: float):
        self.paths = paths
        self.geoms = np.ascontiguousarray(geometries, dtype=float)
        if self.geoms.ndim != 2 or self.geoms.shape[1] != 2:
            raise ValueError("geometries must have shape (n+1, 2)")
        self.params = params
        self.dt = float(dt)
        self.vec = params.vector(dt)
        self.n_all = self.geoms.shape[0]
        self.n_others = self.n_all - 1
        lt_p, lt_lat, ltoff, lstep = leader_tables(paths)
        self._tab = (paths.knots, paths.koff, paths.cx, paths.cy,
                     lt_p, lt_lat, ltoff, lstep)
        self._obs_scratch = np.empty((self.n_all, 6))
        self._key_scratch = np.empty(3 * self.n_all, dtype=np.int64)
        self._look_a = np.empty((self.n_all, 3))
        self._look_b = np.empty((self.n_all, 3))
        self._n_trans = self.n_others + 2 * self.n_all
        # trigger jit compilation outside the timed planning loop
        self.is_terminal(np.zeros((self.n_all, 3)))

    # -- contract methods -------------------------------------------------

    def action_set(self):
        return self.params.action_set

    def default_action(self, state):
        return 0.0

    def sample_transition(self, state, action, rng):
        out = np.empty((self.n_all, 3))
        K.transition(state, self.geoms, float(action), self.vec,
                     self.paths.lengths, *self._tab,
                     rng.standard_normal(self._n_trans), out)
        return out

    def sample_observation(self, state, action, rng):
        out = np.empty((self.n_all, 6))
        K.observe(state, self.vec, self.paths.knots, self.paths.koff,
                  self.paths.cx, self.paths.cy,
                  rng.standard_normal(6 * self.n_all), out)
        return out

    def observation_likelihood(self, observation, state, action) -> float:
        return math.exp(self.observation_log_likelihood(observation, state, action))

    def observation_log_likelihood(self, observation, state, action) -> float:
        return float(K.log_likelihood(observation, state, self.vec,
                                      self.paths.knots, self.paths.koff,
                                      self.paths.cx, self.paths.cy))

    def observation_key(self, observation) -> bytes:
        K.observation_key(np.asarray(observation, dtype=float),
                          self.vec[K.P_KEY_POS_BIN], self.vec[K.P_KEY_SPEED_BIN],
                          self._key_scratch)
        return self._key_scratch.tobytes()

    def log_likelihood_floor(self) -> float:
        """Log likelihood below which an observation counts as incompatible.

        The bound is the perfect-residual log density minus a generous margin
        covering healthy particle spread; a belief whose best particle falls
        under it has lost track (e.g. collapsed onto a wrong path intention)
        and must be regenerated rather than renormalized.
        """
        pv = self.vec[K.P_POS_SD] ** 2
        vv = self.vec[K.P_VEL_SD] ** 2
        hv = self.vec[K.P_HEAD_SD] ** 2
        mode = -(K.LOG_2PI + math.log(pv)) - (K.LOG_2PI + math.log(vv))
        if hv > 0:
            mode -= K.LOG_2PI + math.log(hv)
        return self.n_all * mode - 100.0

    def reward(self, state, action, next_state) -> float:
        r, _ = K.reward_terminal(next_state, float(action), self.vec,
                                 self.geoms, self.paths.lengths,
                                 self.paths.knots, self.paths.koff,
                                 self.paths.cx, self.paths.cy)
        return float(r)

    def terminal_code(self, state) -> int:
        _, code = K.reward_terminal(state, 0.0, self.vec, self.geoms,
                                    self.paths.lengths, self.paths.knots,
                                    self.paths.koff, self.paths.cx, self.paths.cy)
        return int(code)

    def is_terminal(self, state) -> bool:
        return self.terminal_code(state) != K.TERM_NONE

    def terminal_value(self, state) -> float:
        if self.terminal_code(state) == K.TERM_CRASH:
            return -self.params.rewards.r_crash
        return 0.0

    def heuristic_value(self, state, rng) -> float:
        depth = self.params.lookahead_depth
        noise = rng.standard_normal(depth * self._n_trans)
        return float(K.lookahead_value(state, self.geoms, self.vec,
                                       self.paths.lengths, *self._tab,
                                       noise, self._look_a, self._look_b))

    # -- fast paths --------------------------------------------------------

    def sample_step(self, state, action, rng):
        """Fused transition/observation/key/reward/terminal step."""
        out = np.empty((self.n_all, 3))
        noise = rng.standard_normal(self.n_others + 8 * self.n_all)
        r, code = K.fused_step(state, self.geoms, float(action), self.vec,
                               self.paths.lengths, *self._tab, noise,
                               out, self._obs_scratch, self._key_scratch)
        return out, self._key_scratch.tobytes(), float(r), code != K.TERM_NONE

    def propagate_and_weight(self, particles, action, observation, rng):
        """Batch transition + observation log likelihood for belief updates."""
        n_par = particles.shape[0]
        out = np.empty_like(particles)
        logw = np.empty(n_par)
        noise = rng.standard_normal((n_par, self._n_trans))
        K.belief_propagate(np.ascontiguousarray(particles), self.geoms,
                           float(action), self.vec, self.paths.lengths,
                           *self._tab, np.asarray(observation, dtype=float),
                           noise, out, logw)
        return out, logw

    def spawn(self, observation, ego: VehicleState, n_par: int,
              rng) -> ParticleBelief:
        return spawn_particles(observation, self.paths, n_par, ego, rng)
