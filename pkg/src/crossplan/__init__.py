"""Belief-tree trajectory planning for unsignalized intersection crossing.

The library plans the longitudinal motion of one controlled vehicle along a
fixed path through an intersection, under uncertainty about which paths the
other vehicles intend to follow.  It ships a generic particle-belief tree
search, an intersection domain built on arc-length spline paths, a
trace-replay simulator, and a parameter-sweep harness.
"""

from .domain import (DomainParams, IDMParams, IntersectionModel, JointState,
                     NoiseParams, RewardParams, VehicleGeometry, VehicleState,
                     collision_check, desired_velocity, find_leader, idm_accel,
                     intention_distribution, observation_likelihood, observe,
                     rect_overlap, reward, spawn_particles, step_vehicle,
                     terminal_kind)
from .pomdp import AllWeightsZero, ParticleBelief, belief_update, resample
from .simulation import (RunResult, Scenario, interpolate_trace, load_scenario,
                         run_simulation)
from .solver import (BeliefTree, Episode, NoEpisodes, NoVisits, SolverConfig,
                     advance, lookahead_value, plan, q_estimate, sample_episode,
                     ucb_select)
from .sweep import SweepCell, SweepConfig, emit_csv, emit_svg, run_sweep
from .topology import (LaneGraph, PathSet, PathSpline, build_path_set,
                       enumerate_paths, enumerate_routes, fit_spline, load_map,
                       overlap_coefficients, parse_map)

__version__ = "0.1.0"
