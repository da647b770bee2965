"""Tree search against brute-force value iteration and direct formula oracles."""

import math

import numpy as np
import pytest

from crossplan.pomdp import ParticleBelief
from crossplan.solver import (BeliefNode, BeliefTree, Episode, NoEpisodes,
                              NoVisits, SolverConfig, advance, lookahead_value,
                              plan, q_estimate, sample_episode, ucb_select)


class ChainMDP:
    """Fully observable 5-state chain; action 1 drifts right, 0 drifts left.

    Reward is the landing state index, so moving right is optimal from
    everywhere.  Observations reveal the state exactly.
    """

    n_states = 5
    p_move = 0.9

    def action_set(self):
        return (0, 1)

    def default_action(self, state):
        return 0

    def sample_transition(self, state, action, rng):
        if rng.random() < self.p_move:
            step = 1 if action == 1 else -1
        else:
            step = 0
        return min(max(state + step, 0), self.n_states - 1)

    def sample_observation(self, state, action, rng):
        return state

    def observation_likelihood(self, obs, state, action):
        return 1.0 if obs == state else 0.0

    def observation_key(self, obs):
        return obs

    def reward(self, state, action, next_state):
        return float(next_state)

    def is_terminal(self, state):
        return False

    def terminal_value(self, state):
        return 0.0

    def heuristic_value(self, state, rng):
        return 0.0

    def transition_matrix(self, action):
        mat = np.zeros((self.n_states, self.n_states))
        for s in range(self.n_states):
            step = 1 if action == 1 else -1
            s_move = min(max(s + step, 0), self.n_states - 1)
            mat[s, s_move] += self.p_move
            mat[s, s] += 1.0 - self.p_move
        return mat


def value_iteration(model, gamma, horizon):
    """Finite-horizon optimal Q-values with zero terminal value."""
    states = np.arange(model.n_states)
    v = np.zeros(model.n_states)
    q = None
    for _ in range(horizon):
        q = np.stack([
            model.transition_matrix(a) @ (states + gamma * v)
            for a in model.action_set()
        ], axis=1)
        v = q.max(axis=1)
    return q


class Bandit:
    """Two deterministic arms with means 1 and 0, horizon 1."""

    def action_set(self):
        return (0, 1)

    def sample_transition(self, state, action, rng):
        return state

    def sample_observation(self, state, action, rng):
        return 0

    def observation_likelihood(self, obs, state, action):
        return 1.0

    def observation_key(self, obs):
        return 0

    def reward(self, state, action, next_state):
        return 1.0 if action == 0 else 0.0

    def is_terminal(self, state):
        return False

    def terminal_value(self, state):
        return 0.0

    def heuristic_value(self, state, rng):
        return 0.0


def make_belief(state, n=32):
    return ParticleBelief([state] * n)


class TestPlan:
    def test_optimal_action_on_chain(self):
        model = ChainMDP()
        cfg = SolverConfig(horizon=5, n_episodes=3000, n_particles=32,
                           ucb_c=20.0, gamma=0.9)
        q = value_iteration(model, cfg.gamma, cfg.horizon)
        optimal = int(np.argmax(q[2]))
        hits = 0
        for seed in range(40):
            action, _ = plan(make_belief(2), None, model, cfg,
                             np.random.default_rng(seed))
            hits += action == optimal
        assert hits >= 38

    def test_single_action_set(self):
        model = ChainMDP()
        model.action_set = lambda: (1,)
        cfg = SolverConfig(horizon=3, n_episodes=50, n_particles=8)
        action, _ = plan(make_belief(0), None, model, cfg,
                         np.random.default_rng(0))
        assert action == 1

    def test_zero_reward_tie_breaks_to_first_action(self):
        model = ChainMDP()
        model.reward = lambda s, a, ns: 0.0
        cfg = SolverConfig(horizon=3, n_episodes=200, n_particles=8, ucb_c=1.0)
        action, _ = plan(make_belief(2), None, model, cfg,
                         np.random.default_rng(1))
        assert action == model.action_set()[0]

    def test_no_episodes_error(self):
        model = ChainMDP()
        cfg = SolverConfig(horizon=3, n_episodes=0, n_particles=8)
        with pytest.raises(NoEpisodes):
            plan(make_belief(0), None, model, cfg, np.random.default_rng(0))

    def test_determinism(self):
        model = ChainMDP()
        cfg = SolverConfig(horizon=4, n_episodes=500, n_particles=16, ucb_c=5.0)
        runs = {plan(make_belief(1), None, model, cfg,
                     np.random.default_rng(9))[0] for _ in range(3)}
        assert len(runs) == 1

    def test_anytime_prefix_returns_valid_action(self):
        model = ChainMDP()
        actions = model.action_set()
        for k in (1, 2, 5, 17):
            cfg = SolverConfig(horizon=4, n_episodes=k, n_particles=8,
                               ucb_c=10.0)
            action, _ = plan(make_belief(2), None, model, cfg,
                             np.random.default_rng(3))
            assert action in actions


class TestSampleEpisode:
    def test_terminal_start_gives_length_one(self):
        model = ChainMDP()
        model.is_terminal = lambda s: True
        model.terminal_value = lambda s: -7.0
        tree = BeliefTree(make_belief(0), model)
        cfg = SolverConfig(horizon=5, n_episodes=1, n_particles=4)
        ep = sample_episode(tree, model, cfg, np.random.default_rng(0))
        assert len(ep) == 1
        assert ep.steps == []
        assert ep.final_value == -7.0

    def test_horizon_one_episode_shape(self):
        model = ChainMDP()
        tree = BeliefTree(make_belief(2), model)
        cfg = SolverConfig(horizon=1, n_episodes=1, n_particles=4)
        ep = sample_episode(tree, model, cfg, np.random.default_rng(0))
        assert len(ep.steps) == 1
        assert len(ep) == 2

    def test_deterministic_replay(self):
        model = ChainMDP()
        cfg = SolverConfig(horizon=4, n_episodes=1, n_particles=4, ucb_c=3.0)
        eps = []
        for _ in range(2):
            tree = BeliefTree(make_belief(2), model)
            ep = sample_episode(tree, model, cfg, np.random.default_rng(42))
            eps.append([(s, a, k, r) for s, a, k, r in ep.steps])
        assert eps[0] == eps[1]

    def test_stats_count_episodes(self):
        model = ChainMDP()
        tree = BeliefTree(make_belief(2), model)
        cfg = SolverConfig(horizon=3, n_episodes=1, n_particles=4, ucb_c=2.0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            sample_episode(tree, model, cfg, rng)
        assert sum(tree.root.counts) == 50
        assert tree.root.total == 50


class TestUcbSelect:
    def test_greedy_when_c_zero(self):
        node = BeliefNode(2)
        node.counts = [1, 100]
        node.qvals = [10.0, 0.0]
        node.total = 101
        assert ucb_select(node, 0.0) == 0

    def test_untried_first(self):
        node = BeliefNode(2)
        node.counts = [0, 5]
        node.qvals = [0.0, 3.0]
        node.total = 5
        assert ucb_select(node, 100.0) == 0

    def test_exploration_bonus_prefers_rare_action(self):
        node = BeliefNode(2)
        node.counts = [1, 10]
        node.qvals = [0.0, 0.0]
        node.total = 11
        assert ucb_select(node, 1.0) == 0

    def test_matches_direct_formula_on_random_tables(self):
        rng = np.random.default_rng(314)
        for _ in range(1000):
            n_actions = int(rng.integers(2, 6))
            node = BeliefNode(n_actions)
            node.counts = [int(c) for c in rng.integers(1, 50, n_actions)]
            node.qvals = [float(q) for q in rng.normal(0, 100, n_actions)]
            node.total = sum(node.counts)
            c = float(rng.uniform(0, 1000))
            scores = [node.qvals[a]
                      + c * math.sqrt(math.log(node.total) / node.counts[a])
                      for a in range(n_actions)]
            assert ucb_select(node, c) == int(np.argmax(scores))


class TestQEstimate:
    def test_single_episode_sum(self):
        model = ChainMDP()
        tree = BeliefTree(make_belief(0), model)
        ep = Episode([(0, 1, 0, 1.0), (1, 1, 0, 1.0), (2, 1, 0, 1.0)], 3, 0.0)
        tree.insert_episode(ep, gamma=1.0)
        assert q_estimate(tree.root, 1) == pytest.approx(3.0)

    def test_mean_of_two_episodes(self):
        model = ChainMDP()
        tree = BeliefTree(make_belief(0), model)
        tree.insert_episode(Episode([(0, 0, 0, 2.0)], 1, 0.0), gamma=1.0)
        tree.insert_episode(Episode([(0, 0, 0, 4.0)], 1, 0.0), gamma=1.0)
        assert q_estimate(tree.root, 0) == pytest.approx(3.0)

    def test_discounted_tail(self):
        model = ChainMDP()
        tree = BeliefTree(make_belief(0), model)
        tree.insert_episode(Episode([(0, 0, 0, 4.0), (1, 0, 0, 2.0)], 2, 0.0),
                            gamma=0.5)
        assert q_estimate(tree.root, 0) == pytest.approx(4.0 + 0.5 * 2.0)

    def test_no_visits_raises(self):
        node = BeliefNode(2)
        with pytest.raises(NoVisits):
            q_estimate(node, 0)

    def test_incremental_matches_recomputation(self):
        model = ChainMDP()
        cfg = SolverConfig(horizon=4, n_episodes=300, n_particles=16,
                           ucb_c=7.0, gamma=0.9)
        rng = np.random.default_rng(5)
        tree = BeliefTree(make_belief(2), model)
        for _ in range(cfg.n_episodes):
            sample_episode(tree, model, cfg, rng)
        for a in range(2):
            eps = [ep for ep in tree.episodes
                   if ep.steps and ep.steps[0][1] == a]
            if not eps:
                continue
            mean = np.mean([ep.tail_return(0, cfg.gamma) for ep in eps])
            assert tree.root.qvals[a] == pytest.approx(mean, rel=1e-9)
            assert tree.root.counts[a] == len(eps)


class TestAdvance:
    def test_deterministic_domain_point_mass(self):
        model = ChainMDP()
        model.p_move = 1.0
        cfg = SolverConfig(horizon=3, n_episodes=100, n_particles=16, ucb_c=2.0)
        rng = np.random.default_rng(0)
        action, tree = plan(make_belief(2), None, model, cfg, rng)
        tree2 = advance(tree, action, 3 if action == 1 else 1, model, cfg, rng)
        expected = 3 if action == 1 else 1
        assert all(s == expected for s in tree2.root_belief.states)

    def test_unseen_observation_key_starts_fresh(self):
        model = ChainMDP()
        cfg = SolverConfig(horizon=3, n_episodes=100, n_particles=16, ucb_c=2.0)
        rng = np.random.default_rng(2)
        action, tree = plan(make_belief(2), None, model, cfg, rng)
        # observation 4 is unreachable from state 2 in one step
        tree2 = advance(tree, action, 4, model, cfg, rng,
                        regenerate=lambda obs: make_belief(int(obs), 16))
        assert len(tree2.episodes) == 0
        action2, _ = plan(tree2.root_belief, tree2, model, cfg, rng)
        assert action2 in model.action_set()

    def test_recount_matches_retained_episodes(self):
        model = ChainMDP()
        cfg = SolverConfig(horizon=4, n_episodes=800, n_particles=16, ucb_c=5.0)
        rng = np.random.default_rng(7)
        action, tree = plan(make_belief(2), None, model, cfg, rng)
        a_idx = tree.actions.index(action)
        obs = 3 if action == 1 else 1
        key = model.observation_key(obs)
        retained = [ep for ep in tree.episodes
                    if ep.steps and ep.steps[0][1] == a_idx
                    and ep.steps[0][2] == key and len(ep.steps) > 1]
        tree2 = advance(tree, action, obs, model, cfg, rng)
        assert sum(tree2.root.counts) == len(retained)
        for a in range(2):
            eps = [ep for ep in retained if ep.steps[1][1] == a]
            assert tree2.root.counts[a] == len(eps)
            if eps:
                mean = np.mean([ep.tail_return(1, cfg.gamma) for ep in eps])
                assert tree2.root.qvals[a] == pytest.approx(mean, rel=1e-9)


class TestBandit:
    def test_best_arm_dominates_pulls(self):
        model = Bandit()
        cfg = SolverConfig(horizon=1, n_episodes=10_000, n_particles=4,
                           ucb_c=1.0)
        _, tree = plan(ParticleBelief([0] * 4), None, model, cfg,
                       np.random.default_rng(0))
        frac = tree.root.counts[0] / sum(tree.root.counts)
        assert frac > 0.9


class TestLookahead:
    def test_constant_reward_depth_three(self):
        model = ChainMDP()
        model.reward = lambda s, a, ns: 1.0
        cfg = SolverConfig(horizon=5, n_episodes=1, n_particles=4,
                           lookahead_depth=3)
        value = lookahead_value(2, model, cfg, np.random.default_rng(0))
        assert value == pytest.approx(3.0)

    def test_terminal_in_one_step(self):
        model = ChainMDP()
        model.reward = lambda s, a, ns: 4.0
        model.is_terminal = lambda s: s != 2
        cfg = SolverConfig(horizon=5, n_episodes=1, n_particles=4,
                           lookahead_depth=3)
        value = lookahead_value(2, model, cfg, np.random.default_rng(0))
        assert value == pytest.approx(4.0)

    def test_zero_reward_domain(self):
        model = ChainMDP()
        model.reward = lambda s, a, ns: 0.0
        cfg = SolverConfig(horizon=5, n_episodes=1, n_particles=4)
        assert lookahead_value(2, model, cfg, np.random.default_rng(0)) == 0.0
