from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from raplab.envs import DomainSpec, DynamicsParams
from raplab.errors import ConfigError
from raplab.ppo import PPOConfig, ppo_update
from raplab.rng import Streams
from raplab.trainer import (
    TrainConfig,
    collect_iteration,
    collect_rollout,
    init_population,
    sample_adversary,
    train,
    train_iteration,
)

WALKER = "point_wind_walker"
SMALL_PPO = PPOConfig(train_batch_size=300, minibatch_size=64, sgd_epochs=2)


def small(mode="rap", n=3, **kw):
    base = dict(mode=mode, env_id=WALKER, seed=0, n=n, ppo=SMALL_PPO, horizon=60, iterations=2, hidden=(8, 8))
    base.update(kw)
    return TrainConfig(**base)


def trajectories_equal(a, b):
    return all(
        np.array_equal(getattr(a, f), getattr(b, f))
        for f in ("obs", "actions", "logp", "values", "rewards", "dones")
    ) and a.bootstrap_value == b.bootstrap_value


# config -------------------------------------------------------------------------
@pytest.mark.parametrize(
    "kw",
    [
        dict(mode="rap", n=0),
        dict(mode="single_adversary", n=2),
        dict(mode="vanilla", n=1),
        dict(mode="domain_randomization", n=0),
        dict(mode="rap", n=-1),
        dict(mode="rap", n=2, alpha=-0.5),
        dict(mode="bogus", n=0),
    ],
)
def test_train_config_rules(kw):
    with pytest.raises(ConfigError):
        TrainConfig(env_id=WALKER, seed=0, **kw)


# population -----------------------------------------------------------------------
def test_init_population_vanilla_agent_only():
    st = init_population(small("vanilla", 0))
    assert st.adversaries == [] and st.counts == []


def test_init_population_deterministic_and_distinct():
    a = init_population(small(n=3))
    b = init_population(small(n=3))
    digests = [m.digest() for m in [a.agent, *a.adversaries]]
    assert digests == [m.digest() for m in [b.agent, *b.adversaries]]
    assert len(set(digests)) == 4
    assert all(adv.act_dim == a.agent.act_dim for adv in a.adversaries)


def test_sample_adversary_basic():
    rng = np.random.default_rng(0)
    assert all(sample_adversary(1, rng) == 1 for _ in range(50))
    s1 = [sample_adversary(5, np.random.default_rng(3)) for _ in range(1)]
    assert s1 == [sample_adversary(5, np.random.default_rng(3))]
    with pytest.raises(ConfigError):
        sample_adversary(0, rng)


def test_sample_adversary_uniform_counts():
    rng = np.random.default_rng(0)
    draws = np.array([sample_adversary(5, rng) for _ in range(10_000)])
    counts = np.bincount(draws, minlength=6)[1:]
    assert draws.min() == 1 and draws.max() == 5
    assert np.all((counts >= 1800) & (counts <= 2200))
    assert stats.chisquare(counts).pvalue > 1e-4


def test_selection_uniform_across_iterations():
    """Chi-square on the per-iteration selection streams over many seeds."""
    failures = 0
    for seed in range(100):
        rng = Streams(seed).generator("select", 0)
        counts = np.bincount([sample_adversary(3, rng) for _ in range(300)], minlength=4)[1:]
        failures += stats.chisquare(counts).pvalue <= 1e-4
    assert failures == 0


# rollouts -------------------------------------------------------------------------
def test_zero_sum_exact():
    cfg = small(n=2)
    st = init_population(cfg)
    streams = Streams(7)
    checked = 0
    for k in range(100):
        idx = 1 + k % 2
        ro = collect_rollout(
            st.agent, st.adversaries[idx - 1], WALKER, DynamicsParams.nominal(WALKER), 1.0, 40,
            streams.sub("r", k), adversary_index=idx,
        )
        assert len(ro.agent) == len(ro.adversary) <= 40
        assert np.array_equal(ro.adversary.obs, ro.agent.obs)
        assert np.all(ro.adversary.rewards == -ro.agent.rewards)
        assert np.all(ro.adversary.rewards + ro.agent.rewards == 0)
        checked += 1
    assert checked == 100


def test_no_adversary_rollout():
    st = init_population(small("vanilla", 0))
    ro = collect_rollout(st.agent, None, WALKER, DynamicsParams.nominal(WALKER), 1.0, 30, Streams(0))
    assert ro.adversary is None and len(ro.agent) <= 30


def test_budget_is_exact():
    cfg = small(n=3)
    st = init_population(cfg)
    rollouts = collect_iteration(st, cfg, Streams(0))
    assert sum(len(r.agent) for r in rollouts) == cfg.ppo.train_batch_size
    # only the final rollout may be cut short by the budget
    assert all(r.completed for r in rollouts[:-1])


def test_dr_params_fresh_per_rollout():
    cfg = small("domain_randomization", 0, domain=DomainSpec.uniform(WALKER))
    rollouts = collect_iteration(init_population(cfg), cfg, Streams(0))
    masses = [r.params.mass_scale for r in rollouts]
    assert len(set(masses)) == len(masses) > 1
    assert all(0.7 <= m <= 1.3 for m in masses)


# reductions -----------------------------------------------------------------------
def test_rap_n1_equals_single_adversary():
    s_rap, c_rap = train(small("rap", 1))
    s_single, c_single = train(small("single_adversary", 1))
    assert s_rap.agent.digest() == s_single.agent.digest()
    assert s_rap.adversaries[0].digest() == s_single.adversaries[0].digest()
    assert [c["mean_reward"] for c in c_rap] == [c["mean_reward"] for c in c_single]


def test_rap_alpha_zero_equals_vanilla():
    cfg_rap = small("rap", 2, alpha=0.0)
    cfg_van = small("vanilla", 0)
    st_rap, st_van = init_population(cfg_rap), init_population(cfg_van)
    assert st_rap.agent.digest() == st_van.agent.digest()
    ro_rap = collect_iteration(st_rap, cfg_rap, Streams(0))
    ro_van = collect_iteration(st_van, cfg_van, Streams(0))
    assert len(ro_rap) == len(ro_van)
    assert all(trajectories_equal(a.agent, b.agent) for a, b in zip(ro_rap, ro_van))
    s1, _ = train(cfg_rap)
    s2, _ = train(cfg_van)
    assert s1.agent.digest() == s2.agent.digest()


# updates ----------------------------------------------------------------------------
def test_iteration_updates_and_isolation():
    cfg = small(n=3)
    streams = Streams(cfg.seed)
    st0 = init_population(cfg, streams)
    rollouts = collect_iteration(st0, cfg, streams)
    st1, info = train_iteration(st0, cfg, streams)
    assert sum(info["counts"]) == info["rollouts"] == len(rollouts)
    for i in range(1, 4):
        own = [r.adversary for r in rollouts if r.adversary.adversary_index == i]
        alone, _, _ = ppo_update(
            st0.adversaries[i - 1], st0.adversary_opts[i - 1], own, cfg.adversary_config,
            streams.generator("shuffle", 0, i),
        )
        assert alone.digest() == st1.adversaries[i - 1].digest()
        changed = st1.adversaries[i - 1].digest() != st0.adversaries[i - 1].digest()
        assert changed == (info["counts"][i - 1] > 0)


def test_idle_adversary_unchanged():
    # many adversaries and few rollouts: some adversary must sit out
    cfg = small(n=12, ppo=replace(SMALL_PPO, train_batch_size=120), horizon=60)
    st0 = init_population(cfg)
    st1, info = train_iteration(st0, cfg, Streams(cfg.seed))
    idle = [i for i, c in enumerate(info["counts"]) if c == 0]
    busy = [i for i, c in enumerate(info["counts"]) if c > 0]
    assert idle and busy
    for i in idle:
        assert st1.adversaries[i].digest() == st0.adversaries[i].digest()
    for i in busy:
        assert st1.adversaries[i].digest() != st0.adversaries[i].digest()


def test_env_steps_independent_of_population_size():
    for n in (1, 2, 5):
        cfg = small(n=n)
        st, curve = train(cfg)
        assert st.env_steps == cfg.iterations * cfg.ppo.train_batch_size
        assert all(c["env_steps"] == cfg.ppo.train_batch_size for c in curve)


# train --------------------------------------------------------------------------------
def test_zero_iterations_returns_initial_state(tmp_path):
    cfg = small(iterations=0)
    st, curve = train(cfg, tmp_path)
    assert curve == [] and st.iteration == 0
    assert st.agent.digest() == init_population(cfg).agent.digest()
    assert (tmp_path / "agent.ckpt").exists()


def test_train_deterministic(tmp_path):
    cfg = small(n=2, iterations=3, checkpoint_every=2)
    train(cfg, tmp_path / "a")
    train(cfg, tmp_path / "b")
    for name in ("agent.ckpt", "adversary_1.ckpt", "adversary_2.ckpt", "curve.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_curve_columns(tmp_path):
    train(small(n=2), tmp_path)
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    header = [l for l in lines if not l.startswith("#")][0]
    assert header == "iteration,mean_reward,std_reward,env_steps,J_1,J_2"
