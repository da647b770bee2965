"""Anytime online planner over a sampled belief tree.

Each planning call samples episodes from the root belief, descending the tree
with UCB action selection and branching on quantized observations.  Episode
tail returns maintain per-(node, action) visit counts and Q estimates; the
returned action is the root argmax.  After acting and observing, the matching
subtree is reused as the next root and its statistics are recounted from the
retained episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .pomdp import AllWeightsZero, ParticleBelief, belief_update


class NoEpisodes(Exception):
    """Planning was requested with no episode budget and an empty tree."""


class NoVisits(Exception):
    """Q estimate requested for an action no episode has tried."""


class RegenerationRequired(Exception):
    """Belief update failed and no regeneration hook was supplied."""


@dataclass
class SolverConfig:
    """Search parameters.

    horizon is the optimization depth N, n_episodes the per-step episode
    budget, n_particles the belief size, ucb_c the exploration coefficient,
    and lookahead_depth the rollout length used for leaf value estimates.
    """

    horizon: int = 5
    n_episodes: int = 3000
    n_particles: int = 300
    ucb_c: float = 20000.0
    gamma: float = 1.0
    lookahead_depth: int = 3

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_episodes < 0:
            raise ValueError("n_episodes must be >= 0")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.ucb_c < 0:
            raise ValueError("ucb_c must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.lookahead_depth < 1:
            raise ValueError("lookahead_depth must be >= 1")


class BeliefNode:
    """One belief node: per-action stats and children keyed by (action, obs key)."""

    __slots__ = ("counts", "qvals", "children", "states", "total")

    def __init__(self, n_actions: int):
        self.counts = [0] * n_actions
        self.qvals = [0.0] * n_actions
        self.children: dict = {}
        self.states: list = []
        self.total = 0


class Episode:
    """A sampled trajectory: (state, action index, obs key, reward) steps plus
    the final state and its terminal or heuristic value."""

    __slots__ = ("steps", "final_state", "final_value")

    def __init__(self, steps, final_state, final_value):
        self.steps = steps
        self.final_state = final_state
        self.final_value = final_value

    def __len__(self):
        return len(self.steps) + 1

    def tail_return(self, depth: int, gamma: float) -> float:
        """Discounted return of the episode from step `depth` on."""
        g = self.final_value
        for i in range(len(self.steps) - 1, depth - 1, -1):
            g = self.steps[i][3] + gamma * g
        return g


class BeliefTree:
    """Root node plus the belief and episodes that produced it."""

    def __init__(self, root_belief: ParticleBelief, model):
        self.actions = tuple(model.action_set())
        if not self.actions:
            raise ValueError("model has an empty action set")
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("action set contains duplicates")
        self.root = BeliefNode(len(self.actions))
        self.root_belief = root_belief
        self.episodes: list[Episode] = []

    def best_action(self):
        """Current root argmax of Q over visited actions, lowest index on ties."""
        root = self.root
        best, best_q = None, -math.inf
        for a in range(len(self.actions)):
            if root.counts[a] > 0 and root.qvals[a] > best_q:
                best, best_q = a, root.qvals[a]
        if best is None:
            return self.actions[0]
        return self.actions[best]

    def insert_episode(self, episode: Episode, gamma: float) -> None:
        """Register an episode's visits and returns along its node path."""
        node = self.root
        path = [node]
        for (state, a_idx, key, r) in episode.steps:
            child = node.children.get((a_idx, key))
            if child is None:
                child = BeliefNode(len(self.actions))
                node.children[(a_idx, key)] = child
            node = child
            path.append(node)
        node.states.append(episode.final_state)
        g = episode.final_value
        for i in range(len(episode.steps) - 1, -1, -1):
            g = episode.steps[i][3] + gamma * g
            n = path[i]
            a = episode.steps[i][1]
            n.counts[a] += 1
            n.total += 1
            n.qvals[a] += (g - n.qvals[a]) / n.counts[a]
        self.episodes.append(episode)


def ucb_select(node: BeliefNode, c: float, rng=None) -> int:
    """Action index by UCB; untried actions first (uniformly at random)."""
    counts = node.counts
    untried = [a for a in range(len(counts)) if counts[a] == 0]
    if untried:
        if rng is None or len(untried) == 1:
            return untried[0]
        return untried[int(rng.integers(len(untried)))]
    logt = math.log(node.total)
    best = 0
    best_score = -math.inf
    for a in range(len(counts)):
        score = node.qvals[a] + c * math.sqrt(logt / counts[a])
        if score > best_score:
            best_score = score
            best = a
    return best


def q_estimate(node: BeliefNode, action_index: int) -> float:
    """Mean discounted tail return of the episodes through (node, action)."""
    if node.counts[action_index] == 0:
        raise NoVisits(f"action {action_index} has no episodes")
    return node.qvals[action_index]


def sample_episode(tree: BeliefTree, model, config: SolverConfig, rng) -> Episode:
    """Sample one episode from the root belief down to depth N or termination."""
    state = tree.root_belief.sample(rng)
    if model.is_terminal(state):
        episode = Episode([], state, model.terminal_value(state))
        tree.episodes.append(episode)
        return episode

    node = tree.root
    node.states.append(state)
    path = [node]
    steps = []
    fused = getattr(model, "sample_step", None)
    final_value = None
    for _ in range(config.horizon):
        a_idx = ucb_select(node, config.ucb_c, rng)
        action = tree.actions[a_idx]
        if fused is not None:
            nxt, key, r, terminal = fused(state, action, rng)
        else:
            nxt = model.sample_transition(state, action, rng)
            obs = model.sample_observation(nxt, action, rng)
            key = model.observation_key(obs)
            r = model.reward(state, action, nxt)
            terminal = model.is_terminal(nxt)
        steps.append((state, a_idx, key, r))
        child = node.children.get((a_idx, key))
        if child is None:
            child = BeliefNode(len(tree.actions))
            node.children[(a_idx, key)] = child
        child.states.append(nxt)
        path.append(child)
        node = child
        state = nxt
        if terminal:
            final_value = model.terminal_value(state)
            break
    if final_value is None:
        final_value = model.heuristic_value(state, rng)

    episode = Episode(steps, state, final_value)
    g = final_value
    for i in range(len(steps) - 1, -1, -1):
        g = steps[i][3] + config.gamma * g
        n = path[i]
        a = steps[i][1]
        n.counts[a] += 1
        n.total += 1
        n.qvals[a] += (g - n.qvals[a]) / n.counts[a]
    tree.episodes.append(episode)
    return episode


def plan(belief: ParticleBelief, tree: BeliefTree | None, model,
         config: SolverConfig, rng):
    """Sample config.n_episodes new episodes and return (action, tree).

    The tree may carry reused statistics from a previous step; passing None
    starts a fresh tree rooted at `belief`.  The returned action is the root
    Q argmax with ties broken toward the lowest action index.  The search is
    anytime: the tree's best_action() is valid after every whole episode.
    """
    if tree is None:
        tree = BeliefTree(belief, model)
    else:
        tree.root_belief = belief
    if config.n_episodes == 0 and not tree.episodes:
        raise NoEpisodes("no episode budget and empty tree")
    for _ in range(config.n_episodes):
        sample_episode(tree, model, config, rng)
    return tree.best_action(), tree


def advance(tree: BeliefTree, applied_action, received_observation, model,
            config: SolverConfig, rng, regenerate=None) -> BeliefTree:
    """Re-root the tree after acting and observing.

    The child at (applied_action, observation key) becomes the new root; its
    episodes are retained with their leading step stripped and their visit
    statistics recounted.  The root belief is the Bayes update of the old
    root belief against the received observation; if that update degenerates,
    the `regenerate` hook must produce a fresh belief from the observation.
    """
    a_idx = tree.actions.index(applied_action)
    key = model.observation_key(received_observation)

    try:
        belief = belief_update(tree.root_belief, applied_action,
                               received_observation, model, rng,
                               n_target=config.n_particles)
    except AllWeightsZero as exc:
        if regenerate is None:
            raise RegenerationRequired(str(exc)) from exc
        belief = regenerate(received_observation)

    new_tree = BeliefTree(belief, model)
    for ep in tree.episodes:
        if ep.steps and ep.steps[0][1] == a_idx and ep.steps[0][2] == key:
            rest = ep.steps[1:]
            if rest:
                new_tree.insert_episode(Episode(rest, ep.final_state,
                                                ep.final_value), config.gamma)
    return new_tree


def lookahead_value(state, model, config: SolverConfig, rng,
                    depth: int | None = None) -> float:
    """Default-policy rollout value from a non-terminal state.

    Simulates lookahead_depth steps with the model's default action, summing
    discounted rewards; early termination adds the discounted terminal value.
    """
    d = depth if depth is not None else config.lookahead_depth
    total = 0.0
    disc = 1.0
    for _ in range(d):
        action = model.default_action(state)
        nxt = model.sample_transition(state, action, rng)
        total += disc * model.reward(state, action, nxt)
        if model.is_terminal(nxt):
            total += disc * config.gamma * model.terminal_value(nxt)
            return total
        disc *= config.gamma
        state = nxt
    return total
