import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raplab.envs import (
    AdversarialEnv,
    DomainRandomizedEnv,
    DomainSpec,
    DynamicsParams,
    PointWindWalker,
    SwingPendulum,
    combine_actions,
    dr_sample,
    get_spec,
    holdout_names,
    holdout_suite,
    make_env,
    wrap_angle,
)
from raplab.errors import ConfigError, NumericError, ProtocolError

WALKER = "point_wind_walker"
PENDULUM = "swing_pendulum"
finite = st.floats(-1e6, 1e6, allow_nan=False)


# reset ---------------------------------------------------------------------------
@pytest.mark.parametrize("env_id", [WALKER, PENDULUM])
def test_reset_deterministic_and_prev_action_zero(env_id):
    env = make_env(env_id)
    p = DynamicsParams.nominal(env_id)
    o1 = env.reset(p, np.random.default_rng(3))
    o2 = env.reset(p, np.random.default_rng(3))
    assert np.array_equal(o1, o2)
    act_dim = get_spec(env_id).act_dim
    assert np.all(o1[-act_dim:] == 0)
    assert env.t == 0


def test_walker_reset_noise_bound():
    env = make_env(WALKER)
    p = DynamicsParams.nominal(WALKER)
    rng = np.random.default_rng(0)
    pos = []
    for _ in range(1000):
        env.reset(p, rng)
        pos.append(env.state[:2])
        assert np.all(env.state[2:] == 0)
    assert np.abs(np.array(pos)).max() <= 0.01


def test_pendulum_reset_hanging_down():
    env = make_env(PENDULUM)
    rng = np.random.default_rng(0)
    for _ in range(200):
        env.reset(DynamicsParams.nominal(PENDULUM), rng)
        theta, omega = env.state
        assert -math.pi < theta <= math.pi
        assert abs(wrap_angle(theta - math.pi)) <= 0.1 + 1e-12
        assert omega == 0


def test_unknown_env():
    with pytest.raises(ConfigError):
        make_env("hopper")


def test_wrong_friction_arity():
    with pytest.raises(ConfigError):
        make_env(WALKER).reset(DynamicsParams(1.0, (1.0,)), np.random.default_rng(0))


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_dynamics_params_validation(bad):
    with pytest.raises(ConfigError):
        DynamicsParams(bad, (1.0, 1.0))
    with pytest.raises(ConfigError):
        DynamicsParams(1.0, (1.0, bad))


def test_dynamics_params_record_round_trip():
    p = DynamicsParams(1.1, (0.7, 1.3))
    assert DynamicsParams.from_record(p.to_record()) == p


# step ----------------------------------------------------------------------------
def _at_rest(env):
    env.reset(DynamicsParams.nominal(env.spec.env_id), np.random.default_rng(0))
    env.state = np.zeros_like(env.state)


def test_rest_is_fixed_point():
    env = make_env(WALKER)
    _at_rest(env)
    obs, r, done = env.step(np.zeros(2))
    assert np.all(env.state == 0) and r == 0 and not done


def test_single_euler_step_semi_implicit():
    env = make_env(WALKER)
    _at_rest(env)
    env.step(np.array([1.0, 0.0]))
    x, y, vx, vy = env.state
    # v first: vx = (1 - 0.5*0)/1 * 0.05; then x = 0.05 * vx
    assert vx == pytest.approx(0.05, abs=1e-15)
    assert x == pytest.approx(0.0025, abs=1e-15)
    assert y == 0 and vy == 0


def test_walker_reward_and_prev_action():
    env = make_env(WALKER)
    _at_rest(env)
    obs, r, _ = env.step(np.array([1.25, 0.0]), agent_action=np.array([1.0, 0.0]))
    assert r == pytest.approx(0.0625 - 0.01, abs=1e-15)
    assert np.array_equal(obs[-2:], [1.0, 0.0])
    assert obs[0] == env.state[1]


def test_doubling_mass_halves_acceleration():
    rng = np.random.default_rng(1)
    dt = 0.05
    for _ in range(20):
        state = rng.uniform(-1, 1, size=4)
        action = rng.uniform(-1, 1, size=2)
        a1 = (PointWindWalker.integrate(state, action, DynamicsParams(1.0, (1.0, 1.0)), dt) - state)[2:] / dt
        a2 = (PointWindWalker.integrate(state, action, DynamicsParams(2.0, (1.0, 1.0)), dt) - state)[2:] / dt
        np.testing.assert_allclose(a2, a1 / 2, rtol=1e-9, atol=1e-12)


def test_topple_ends_episode():
    env = make_env(WALKER)
    _at_rest(env)
    env.state[1] = 0.999
    env.state[3] = 1.0
    _, _, done = env.step(np.zeros(2))
    assert done and not env.truncated


@pytest.mark.parametrize("env_id", [WALKER, PENDULUM])
def test_episode_cap_and_latch(env_id):
    env = make_env(env_id, horizon=37)
    env.reset(DynamicsParams.nominal(env_id), np.random.default_rng(0))
    steps, done = 0, False
    while not done:
        _, _, done = env.step(np.zeros(env.spec.act_dim))
        steps += 1
    assert steps == 37 and env.truncated
    with pytest.raises(ProtocolError):
        env.step(np.zeros(env.spec.act_dim))


def test_step_before_reset_is_protocol_error():
    with pytest.raises(ProtocolError):
        make_env(WALKER).step(np.zeros(2))


def test_non_finite_action():
    env = make_env(WALKER)
    env.reset(DynamicsParams.nominal(WALKER), np.random.default_rng(0))
    with pytest.raises(NumericError):
        env.step(np.array([np.nan, 0.0]))


def test_pendulum_reward_upright_is_zero():
    env = make_env(PENDULUM)
    _at_rest(env)
    _, r, _ = env.step(np.zeros(1))
    assert r == 0 and env.state[0] == 0


def test_wrap_angle_range():
    for t in np.linspace(-20, 20, 1001):
        w = wrap_angle(t)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(t), abs_tol=1e-9)
    assert wrap_angle(math.pi) == math.pi and wrap_angle(-math.pi) == math.pi


# invariants ----------------------------------------------------------------------
def _rollout(cls, state, actions, params, dt, substeps):
    for a in actions:
        for _ in range(substeps):
            state = cls.integrate(state, a, params, dt / substeps)
    return state


@pytest.mark.parametrize("env_id", [WALKER, PENDULUM])
def test_euler_consistency(env_id):
    """Error against a fine reference shrinks about 2x per halving of the step."""
    cls = PointWindWalker if env_id == WALKER else SwingPendulum
    spec = get_spec(env_id)
    rng = np.random.default_rng(2)
    params = DynamicsParams(1.2, (0.8,) * spec.n_friction)
    for _ in range(10):
        actions = rng.uniform(-1, 1, size=(20, spec.act_dim))
        if env_id == WALKER:
            s0 = np.concatenate([rng.uniform(-0.01, 0.01, 2), rng.uniform(-0.5, 0.5, 2)])
        else:
            s0 = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)])
        ref = _rollout(cls, s0, actions, params, 0.05, 256)
        errs = []
        for sub in (1, 2, 4):
            d = _rollout(cls, s0, actions, params, 0.05, sub) - ref
            if env_id == PENDULUM:
                d[0] = wrap_angle(d[0])
            errs.append(np.linalg.norm(d))
        assert errs[0] / errs[1] >= 1.8
        assert errs[1] / errs[2] >= 1.8


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    st.floats(0.5, 2.0),
    st.floats(0.5, 2.0),
)
def test_monotone_drag(v0, mass, fric):
    state = np.array([0.0, 0.0, v0[0], v0[1]])
    params = DynamicsParams(mass, (fric, fric * 0.8))
    ke = state[2:] @ state[2:]
    for _ in range(100):
        state = PointWindWalker.integrate(state, np.zeros(2), params, 0.05)
        new = state[2:] @ state[2:]
        assert new <= ke
        ke = new


# combine_actions -----------------------------------------------------------------
def test_combine_separate_clip_example():
    assert combine_actions(np.array([1.5]), np.array([0.5]), 1.0)[0] == 1.25


def test_combine_zero_adversary_and_zero_alpha():
    a = np.array([0.3, -2.0])
    assert np.array_equal(combine_actions(a, np.zeros(2), 1.0), np.clip(a, -1, 1))
    assert np.array_equal(combine_actions(a, np.array([9.0, -9.0]), 0.0), np.clip(a, -1, 1))


@settings(max_examples=300, deadline=None)
@given(finite, finite, st.floats(0, 5))
def test_combine_clipping_independence(a, b, alpha):
    total = combine_actions(np.array([a]), np.array([b]), alpha)[0]
    agent_part = min(max(a, -1.0), 1.0)
    adv_part = total - agent_part
    assert abs(agent_part) <= 1
    assert abs(adv_part) <= 0.25 * alpha + 1e-12
    if abs(b) >= 0.25 and alpha > 0:
        assert abs(adv_part) == pytest.approx(0.25 * alpha, rel=1e-12)


def test_adversarial_env_uses_agent_action_for_cost():
    env = AdversarialEnv(make_env(WALKER), alpha=1.0)
    env.reset(DynamicsParams.nominal(WALKER), np.random.default_rng(0))
    env.env.state = np.zeros(4)
    obs, r, _ = env.step(np.array([2.0, 0.0]), np.array([0.5, 0.5]))
    vx = 0.05 * 1.25
    assert r == pytest.approx(vx - 0.01, abs=1e-15)
    assert np.array_equal(obs[-2:], [1.0, 0.0])
    with pytest.raises(ConfigError):
        AdversarialEnv(make_env(WALKER), alpha=-1)


# domain randomization ------------------------------------------------------------
def test_dr_point_interval():
    spec = DomainSpec((1.0, 1.0), ((1.0, 1.0), (1.0, 1.0)))
    p = dr_sample(spec, np.random.default_rng(0))
    assert p.mass_scale == 1 and p.friction_scales == (1, 1)


def test_dr_statistics_and_coverage():
    spec = DomainSpec.uniform(WALKER)
    rng = np.random.default_rng(0)
    draws = [dr_sample(spec, rng) for _ in range(10_000)]
    for values in ([d.mass_scale for d in draws], [d.friction_scales[0] for d in draws]):
        v = np.array(values)
        assert v.min() >= 0.7 and v.max() <= 1.3
        assert abs(v.mean() - 1.0) <= 0.01
        counts, _ = np.histogram(v, bins=10, range=(0.7, 1.3))
        assert np.all(counts > 0)
    assert all(d.friction_scales[0] == d.friction_scales[1] for d in draws)


def test_dr_independent_components():
    spec = DomainSpec.uniform(WALKER, shared=False)
    d = dr_sample(spec, np.random.default_rng(1))
    assert d.friction_scales[0] != d.friction_scales[1]


def test_dr_seeds_differ():
    spec = DomainSpec.uniform(WALKER)
    a = [dr_sample(spec, np.random.default_rng(0)).mass_scale for _ in range(1)]
    b = [dr_sample(spec, np.random.default_rng(1)).mass_scale for _ in range(1)]
    assert a != b


def test_dr_params_constant_within_episode():
    env = DomainRandomizedEnv(make_env(WALKER, horizon=50), DomainSpec.uniform(WALKER))
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(5):
        env.reset(rng)
        p = env.params
        done = False
        while not done:
            _, _, done = env.step(rng.uniform(-1, 1, 2))
            assert env.params is p
        seen.add(p)
    assert len(seen) == 5


def test_domain_spec_validation():
    with pytest.raises(ConfigError):
        DomainSpec((1.3, 0.7), ((1, 1),))
    with pytest.raises(ConfigError):
        DomainSpec((0.7, 1.3), ((0.5, 1.0), (0.7, 1.3)), shared_friction=True)
    with pytest.raises(ConfigError):
        DomainRandomizedEnv(make_env(WALKER), DomainSpec.uniform(PENDULUM))


# holdout -------------------------------------------------------------------------
def test_holdout_walker_example():
    suite = holdout_suite(WALKER, 1.3, 0.7)
    assert suite == [DynamicsParams(1.0, (1.3, 0.7)), DynamicsParams(1.0, (0.7, 1.3))]
    assert suite == holdout_suite(WALKER, 1.3, 0.7)


def test_holdout_pendulum_combinations():
    suite = holdout_suite(PENDULUM)
    assert len(suite) == 4
    assert {(p.mass_scale, p.friction_scales[0]) for p in suite} == {
        (m, f) for m in (0.7, 1.3) for f in (0.7, 1.3)
    }


@pytest.mark.parametrize("hi,lo", [(0.7, 1.3), (1.0, 1.0), (1.0, 0.0)])
def test_holdout_bad_bounds(hi, lo):
    with pytest.raises(ConfigError):
        holdout_suite(WALKER, hi, lo)


def test_holdout_names():
    assert holdout_names(3) == ["A", "B", "C"]
    names = holdout_names(30)
    assert len(set(names)) == 30 and names[26] == "AA"
