import numpy as np
import pytest

from raplab.envs import DynamicsParams, holdout_suite
from raplab.errors import ConfigError, NumericError, ShapeError
from raplab.evaluation import (
    EvalScore,
    EvalSpec,
    adversary_count_sweep,
    episode_returns,
    evaluate,
    evaluate_against,
    holdout_eval,
    swap_matrix,
    transfer_grid,
)
from raplab.nn import ActorCritic, ParameterSet
from raplab.ppo import PPOConfig
from raplab.trainer import TrainConfig, init_population

WALKER = "point_wind_walker"
NOMINAL = DynamicsParams.nominal(WALKER)


def constant_policy(mean, obs_dim=5, log_std=-5.0):
    """Scripted policy: zero hidden weights, so the action mean is the output bias."""
    mean = np.asarray(mean, dtype=np.float64)
    k = len(mean)
    policy = ParameterSet(
        ((np.zeros((1, obs_dim)), np.zeros(1)), (np.zeros((k, 1)), mean)), np.full(k, log_std)
    )
    value = ParameterSet(((np.zeros((1, obs_dim)), np.zeros(1)), (np.zeros((1, 1)), np.zeros(1))))
    return ActorCritic(policy, value)


def trained_like(seed):
    cfg = TrainConfig(mode="rap", env_id=WALKER, seed=seed, n=2, hidden=(8,))
    return init_population(cfg)


# evaluate ---------------------------------------------------------------------------
def test_single_rollout_has_zero_std():
    s = evaluate(trained_like(0).agent, WALKER, NOMINAL, n_rollouts=1, horizon=50)
    assert s.std == 0 and s.n_rollouts == 1


def test_idle_policy_near_zero_return():
    s = evaluate(constant_policy([0.0, 0.0]), WALKER, NOMINAL)
    assert abs(s.mean) < 0.5
    assert s.n_rollouts == 20


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        evaluate(constant_policy([0.0], obs_dim=5), WALKER, NOMINAL, n_rollouts=1)


def test_evaluate_seed_stable_and_order_free():
    agent = trained_like(1).agent
    a = episode_returns(agent, WALKER, NOMINAL, 6, seed=3, horizon=40)
    b = episode_returns(agent, WALKER, NOMINAL, 6, seed=3, horizon=40)
    c = episode_returns(agent, WALKER, NOMINAL, 3, seed=3, horizon=40)
    assert a == b and a[:3] == c
    assert EvalScore.from_returns(a[::-1]).mean == pytest.approx(EvalScore.from_returns(a).mean, abs=1e-12)


def test_eval_spec_validation():
    with pytest.raises(ConfigError):
        EvalSpec(grid_points=1)
    with pytest.raises(ConfigError):
        EvalSpec(n_rollouts=0)
    with pytest.raises(ConfigError):
        EvalSpec(holdout_hi=0.5, holdout_lo=0.7)


# grid ---------------------------------------------------------------------------------
def test_grid_axes_and_aggregate():
    g = transfer_grid(constant_policy([0.5, 0.0]), WALKER, n_rollouts=2, horizon=20)
    assert g.mass_values == pytest.approx([0.7, 0.85, 1.0, 1.15, 1.3], abs=1e-15)
    assert g.friction_values == pytest.approx([0.7, 0.85, 1.0, 1.15, 1.3], abs=1e-15)
    assert sum(len(r) for r in g.scores) == 25
    assert g.mean() == pytest.approx(np.mean([[c.mean for c in row] for row in g.scores]), abs=1e-12)
    # lighter, less draggy walker moves faster
    m = g.means()
    assert m[0, 0] > m[-1, -1]


def test_degenerate_grid_equals_nominal():
    agent = trained_like(2).agent
    g = transfer_grid(agent, WALKER, (1, 1), (1, 1), 3, n_rollouts=3, seed=5, horizon=30)
    ref = evaluate(agent, WALKER, NOMINAL, 3, seed=5, horizon=30)
    assert all(cell == ref for row in g.scores for cell in row)


def test_grid_rejects_single_point():
    with pytest.raises(ConfigError):
        transfer_grid(trained_like(0).agent, WALKER, grid_points=1)


# holdout -------------------------------------------------------------------------------
def test_holdout_named_scores_and_aggregate():
    suite = holdout_suite(WALKER)
    res = holdout_eval(constant_policy([0.5, 0.0]), WALKER, suite, n_rollouts=2, horizon=20)
    assert res.names == ["A", "B"] and len(res.scores) == 2
    assert res.aggregate == pytest.approx(np.mean([s.mean for s in res.scores]), abs=1e-15)


# swap ------------------------------------------------------------------------------------
def test_swap_single_seed_is_self_play():
    pop = trained_like(0)
    m = swap_matrix([pop.agent], [pop.adversaries], WALKER, 1.0, n_rollouts=2, horizon=30)
    assert m.means().shape == (1, 1)
    assert m.scores[0][0] == evaluate_against(pop.agent, pop.adversaries, WALKER, 1.0, 2, 0, 30)
    assert m.relative_degradation() == 0.0


def test_swap_diagonal_and_permutation():
    pops = [trained_like(s) for s in range(3)]
    agents = [p.agent for p in pops]
    advs = [p.adversaries for p in pops]
    m = swap_matrix(agents, advs, WALKER, 1.0, n_rollouts=2, seed=4, horizon=30)
    for s in range(3):
        assert m.scores[s][s] == evaluate_against(agents[s], advs[s], WALKER, 1.0, 2, 4, 30)
    perm = [2, 0, 1]
    mp = swap_matrix([agents[i] for i in perm], [advs[i] for i in perm], WALKER, 1.0, 2, 4, horizon=30)
    np.testing.assert_array_equal(mp.means(), m.means()[np.ix_(perm, perm)])


def test_swap_rejects_mixed_population_sizes():
    pops = [trained_like(0), trained_like(1)]
    with pytest.raises(ConfigError):
        swap_matrix([p.agent for p in pops], [pops[0].adversaries, pops[1].adversaries[:1]], WALKER, 1.0)


def test_compensating_agent_is_exploited_by_swap():
    # the agent cancels a known upward push; a backward push it was not built for
    # slows it and tips it over
    pushes_up = constant_policy([0.0, 1.0])
    pushes_back = constant_policy([-1.0, 0.0])
    agent = constant_policy([1.0, -0.25])
    diag = evaluate_against(agent, [pushes_up], WALKER, 1.0, n_rollouts=5)
    off = evaluate_against(agent, [pushes_back], WALKER, 1.0, n_rollouts=5)
    assert off.mean < diag.mean
    agents = [agent, constant_policy([1.0, 0.25])]
    advs = [[pushes_up], [constant_policy([0.0, -1.0])]]
    m = swap_matrix(agents, advs, WALKER, 1.0, n_rollouts=3)
    means = m.means()
    assert means[0, 0] > means[0, 1] and means[1, 1] > means[1, 0]
    assert m.relative_degradation() > 0


# sweep ------------------------------------------------------------------------------------
def test_sweep_accounting_identical():
    base = TrainConfig(
        mode="rap", env_id=WALKER, seed=0, n=1, horizon=40, iterations=2, hidden=(8,),
        ppo=PPOConfig(train_batch_size=120, minibatch_size=60, sgd_epochs=1),
    )
    spec = EvalSpec(grid_points=2, n_rollouts=1)
    rows = adversary_count_sweep(base, [1, 2, 3, 5], [0, 1], spec)
    assert [r.count for r in rows] == [1, 2, 3, 5]
    assert {r.total_env_steps for r in rows} == {2 * 2 * 120}
    assert all(r.seeds_ok == [0, 1] and not r.seeds_failed for r in rows)


def test_sweep_records_failures():
    def broken(cfg):
        raise NumericError("boom")

    base = TrainConfig(mode="rap", env_id=WALKER, seed=0, n=1, iterations=1)
    rows = adversary_count_sweep(base, [1], [0, 1], EvalSpec(grid_points=2), trainer=broken)
    assert rows[0].seeds_failed == [0, 1] and np.isnan(rows[0].grid_mean)
    with pytest.raises(ConfigError):
        adversary_count_sweep(base, [0], [0], EvalSpec())
