"""Generic POMDP machinery: the domain-model contract, particle beliefs, and
the Bayes particle update.  Nothing here knows about intersections."""

from __future__ import annotations

from typing import Any, Protocol, Sequence, runtime_checkable

import numpy as np


class AllWeightsZero(Exception):
    """Every propagated particle is incompatible with the observation.

    Callers should regenerate the belief from the raw observation via their
    domain's particle spawner.
    """


@runtime_checkable
class DomainModel(Protocol):
    """Contract a domain must satisfy to be planned over.

    All stochastic methods take an explicit ``numpy.random.Generator`` so that
    a (seed, config, model) triple fully determines every result.
    """

    def action_set(self) -> Sequence[Any]: ...

    def sample_transition(self, state, action, rng): ...

    def sample_observation(self, state, action, rng): ...

    def observation_likelihood(self, observation, state, action) -> float: ...

    def observation_key(self, observation): ...

    def reward(self, state, action, next_state) -> float: ...

    def is_terminal(self, state) -> bool: ...

    def terminal_value(self, state) -> float: ...

    def heuristic_value(self, state, rng) -> float: ...


class ParticleBelief:
    """Weighted particle approximation of a belief over hidden states.

    ``states`` is either a list of arbitrary state objects or, for array
    domains, one ndarray whose first axis indexes particles.  Weights are kept
    normalized; ``n_target`` is the particle count the belief is maintained at.
    """

    __slots__ = ("states", "weights", "n_target", "_cum")

    def __init__(self, states, weights=None, n_target=None):
        n = len(states)
        if n == 0:
            raise ValueError("belief needs at least one particle")
        if weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (n,):
                raise ValueError("weights must match particle count")
            if np.any(weights < 0):
                raise ValueError("weights must be nonnegative")
            total = weights.sum()
            if not np.isfinite(total) or total <= 0:
                raise AllWeightsZero("weights sum to zero")
            weights = weights / total
        self.states = states
        self.weights = weights
        self.n_target = n_target if n_target is not None else n
        self._cum = None

    def __len__(self) -> int:
        return len(self.states)

    def sample(self, rng):
        """Draw one particle state proportionally to weight."""
        if self._cum is None:
            self._cum = np.cumsum(self.weights)
            self._cum[-1] = 1.0
        idx = int(np.searchsorted(self._cum, rng.random(), side="right"))
        state = self.states[idx]
        if isinstance(state, np.ndarray):
            return state.copy()
        return state

    def as_array(self):
        """Particles as one ndarray (copies if held as a list)."""
        if isinstance(self.states, np.ndarray):
            return self.states
        return np.asarray(self.states)


def systematic_resample_indices(weights, n, rng) -> np.ndarray:
    """Low-variance systematic resampling: expected multiplicity n * w_i."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        raise AllWeightsZero("cannot resample zero-weight belief")
    cum = np.cumsum(weights / total)
    cum[-1] = 1.0
    positions = (np.arange(n) + rng.random()) / n
    return np.searchsorted(cum, positions, side="right").astype(np.int64)


def resample(belief: ParticleBelief, n_par: int, rng) -> ParticleBelief:
    """Return an n_par-particle, equally-weighted resampling of the belief."""
    idx = systematic_resample_indices(belief.weights, n_par, rng)
    if isinstance(belief.states, np.ndarray):
        states = belief.states[idx]
    else:
        states = [belief.states[i] for i in idx]
    return ParticleBelief(states, n_target=n_par)


def belief_update(belief: ParticleBelief, action, observation, model,
                  rng, n_target: int | None = None) -> ParticleBelief:
    """Bayes particle update: propagate, reweight by the observation, resample.

    Each input particle is pushed through the transition model, weighted by
    the prior weight times the observation likelihood, normalized, and
    systematically resampled back to the target particle count.

    Raises AllWeightsZero when no propagated particle explains the observation.
    """
    n_out = n_target if n_target is not None else belief.n_target

    if hasattr(model, "propagate_and_weight"):
        states, loglik = model.propagate_and_weight(belief.as_array(), action,
                                                    observation, rng)
        floor = (model.log_likelihood_floor()
                 if hasattr(model, "log_likelihood_floor") else -np.inf)
        if loglik.max() < floor:
            raise AllWeightsZero("observation incompatible with all particles")
        prior = belief.weights
        with np.errstate(divide="ignore"):
            logw = loglik + np.log(prior)
        peak = logw.max()
        if not np.isfinite(peak):
            raise AllWeightsZero("observation incompatible with all particles")
        weights = np.exp(logw - peak)
    else:
        states = []
        weights = np.empty(len(belief))
        for i in range(len(belief)):
            s2 = model.sample_transition(belief.states[i], action, rng)
            lik = model.observation_likelihood(observation, s2, action)
            states.append(s2)
            weights[i] = belief.weights[i] * lik
        if not np.isfinite(weights).all():
            raise ValueError("observation likelihood must be finite")
        if weights.sum() <= 0.0:
            raise AllWeightsZero("observation incompatible with all particles")

    idx = systematic_resample_indices(weights, n_out, rng)
    if isinstance(states, np.ndarray):
        out = states[idx]
    else:
        out = [states[i] for i in idx]
    return ParticleBelief(out, n_target=n_out)


def rollout_heuristic(model, state, depth: int, gamma: float, rng) -> float:
    """Default-policy lookahead usable as a domain's heuristic value.

    Simulates ``depth`` steps with ``model.default_action(state)``, summing
    discounted rewards; early termination contributes the discounted terminal
    value of the reached state.
    """
    total = 0.0
    disc = 1.0
    for _ in range(depth):
        action = model.default_action(state)
        nxt = model.sample_transition(state, action, rng)
        total += disc * model.reward(state, action, nxt)
        if model.is_terminal(nxt):
            total += disc * gamma * model.terminal_value(nxt)
            return total
        disc *= gamma
        state = nxt
    return total
