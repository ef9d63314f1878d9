import numpy as np
import pytest

from drivesim.policies import ReplayPolicy, StaticGaussianPolicy
from drivesim.baselines import StaticGaussian
from drivesim.simenv import (Env, NoEligibleScene, SimConfig,
                             SteppedAfterTermination, rollout)


@pytest.fixture()
def env(fixture_scene, fixture_roadway):
    return Env(fixture_scene, fixture_roadway)


def _first_scene(env):
    f = env.eligible_frames[0]
    return f, env._eligible[f][0]


class _ConstantPolicy:
    def __init__(self, accel, turn_rate):
        self.action = np.array([accel, turn_rate])

    def reset(self):
        pass

    def act(self, obs, env, rng):
        return self.action.copy(), 0.0


def test_eligibility_requires_full_horizon(env):
    horizon = env.config.horizon
    assert env.eligible_frames  # fixture episodes are long enough
    for f, vids in env._eligible.items():
        for vid in vids:
            tr = env.scene.trajectories[vid]
            assert int(tr.frames[-1]) - f >= horizon


def test_no_eligible_scene_when_horizon_exceeds_data(fixture_scene,
                                                     fixture_roadway):
    env = Env(fixture_scene, fixture_roadway, SimConfig(horizon=100000))
    with pytest.raises(NoEligibleScene):
        env.reset(np.random.default_rng(0))


def test_reset_rejects_ineligible_frame(env):
    bad = max(env.scene.frame_range) + 1
    with pytest.raises(NoEligibleScene):
        env.reset(np.random.default_rng(0), frame=bad)


def test_reset_returns_observation_vector(env):
    obs = env.reset(np.random.default_rng(0))
    assert obs.shape == (51,)
    assert np.all(np.isfinite(obs))


def test_step_after_termination_raises(env):
    f, e = _first_scene(env)
    rollout(_ConstantPolicy(0.0, 0.0), env, np.random.default_rng(0),
            frame=f, ego_id=e)
    assert env.terminated is not None
    with pytest.raises(SteppedAfterTermination):
        env.step(np.zeros(2))


def test_horizon_caps_episode_length(env):
    f, e = _first_scene(env)
    ro = rollout(ReplayPolicy(), env, np.random.default_rng(0),
                 frame=f, ego_id=e)
    assert len(ro) <= env.config.horizon
    if ro.termination == "horizon":
        assert len(ro) == env.config.horizon


def test_exact_replay_matches_recorded_states(env):
    f, e = _first_scene(env)
    ro = rollout(ReplayPolicy(), env, np.random.default_rng(0),
                 frame=f, ego_id=e)
    tr = env.scene.trajectories[e]
    off = int(f - tr.frames[0])
    for k, st in enumerate(ro.states):
        rec = tr.states[off + 1 + k]
        assert st.x == rec.x and st.y == rec.y
        assert st.heading == rec.heading and st.speed == rec.speed


def test_reverse_termination_on_hard_brake(env):
    f, e = _first_scene(env)
    ro = rollout(_ConstantPolicy(-8.0, 0.0), env, np.random.default_rng(0),
                 frame=f, ego_id=e)
    assert ro.termination == "reverse"
    assert ro.states[-1].speed < 0.0


def test_offroad_termination_on_constant_turn(env):
    f, e = _first_scene(env)
    ro = rollout(_ConstantPolicy(0.0, 0.5), env, np.random.default_rng(0),
                 frame=f, ego_id=e)
    assert ro.termination in ("offroad", "collision")


def test_termination_consistent_with_indicator_bits(env):
    sg = StaticGaussian(mu=np.zeros(2), sigma=np.diag([1.0, 0.01]))
    policy = StaticGaussianPolicy(sg)
    rng = np.random.default_rng(1)
    for _ in range(5):
        ro = rollout(policy, env, rng)
        last = ro.indicator_bits[-1]
        if ro.termination == "collision":
            assert last[0] > 0.5
        elif ro.termination == "offroad":
            assert last[0] <= 0.5 and last[1] > 0.5
        # every step before the last is unterminated
        for bits in ro.indicator_bits[:-1]:
            assert bits[0] <= 0.5 and bits[1] <= 0.5


def test_actions_are_clamped(env):
    f, e = _first_scene(env)
    env.reset(np.random.default_rng(0), frame=f, ego_id=e)
    env.step(np.array([50.0, -50.0]))
    a = env.rollout.actions[0]
    assert a[0] == env.config.accel_bounds[1]
    assert a[1] == env.config.turn_rate_bounds[0]


def test_rollout_deterministic_for_fixed_seed(env):
    sg = StaticGaussian(mu=np.zeros(2), sigma=np.eye(2) * 0.01)
    f, e = _first_scene(env)
    runs = []
    for _ in range(2):
        ro = rollout(StaticGaussianPolicy(sg), env,
                     np.random.default_rng(7), frame=f, ego_id=e)
        runs.append(([(s.x, s.y, s.heading, s.speed) for s in ro.states],
                     ro.termination))
    assert runs[0] == runs[1]


def test_rollout_records_matching_lengths(env):
    f, e = _first_scene(env)
    ro = rollout(_ConstantPolicy(0.0, 0.0), env, np.random.default_rng(0),
                 frame=f, ego_id=e)
    n = len(ro)
    assert len(ro.states) == n
    assert len(ro.observations) == n
    assert len(ro.log_probs) == n
    assert len(ro.indicator_bits) == n
    assert len(ro.lead_info) == n
    assert len(ro.recorded_future) == n
