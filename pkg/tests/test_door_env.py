import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foresight_dpl import door_env
from foresight_dpl.door_env import (DEMO_LENGTH, MODES, DoorMode, EnvConfig, EnvState, grip_engaged,
                                    is_success, render, reset, script_demo, step)
from foresight_dpl.numeric import Rng

# the literal unit-gain, 0.05-per-step configuration used by the worked examples
UNIT = EnvConfig(gain=1.0, max_joint_delta=0.05)
AT_HANDLE = np.array([0.8, 1.0, 0.0])


def engaged_state(mode, cfg=UNIT):
    return EnvState(q=AT_HANDLE.copy(), d=0.0, mode=mode)


def test_reset_identical_across_modes():
    obs = [reset(m, UNIT)[1] for m in MODES]
    assert all(np.array_equal(obs[0], o) for o in obs)
    s, o = reset(DoorMode.PUSH, UNIT)
    assert np.array_equal(o[3:], [0.0, 0.0, 0.0, 0.5])
    assert s.step_count == 0 and s.d == 0.0 and np.all(s.q == 0)


def test_pull_blocks_pushing():
    s, _ = step(engaged_state(DoorMode.PULL), AT_HANDLE + [0.05, 0, 0], UNIT)
    assert s.d == 0.0


def test_push_opens_by_gain_times_motion():
    s, obs = step(engaged_state(DoorMode.PUSH), AT_HANDLE + [0.05, 0, 0], UNIT)
    assert s.d == pytest.approx(0.05, abs=1e-15)
    assert obs[3] == pytest.approx(0.05, abs=1e-15)


def test_pull_and_slide_actuation():
    s, _ = step(engaged_state(DoorMode.PULL), AT_HANDLE - [0.05, 0, 0], UNIT)
    assert s.d == pytest.approx(0.05)
    s, _ = step(engaged_state(DoorMode.SLIDE), AT_HANDLE + [0, 0, -0.04], UNIT)
    assert s.d == pytest.approx(0.04)


def test_gain_scales_displacement():
    cfg = EnvConfig(gain=3.0, max_joint_delta=0.05)
    s, _ = step(engaged_state(DoorMode.PUSH, cfg), AT_HANDLE + [0.05, 0, 0], cfg)
    assert s.d == pytest.approx(0.15)


@given(st.sampled_from(MODES), st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_no_engagement_no_door_motion(mode, command, q):
    q = np.clip(np.array(q), door_env.JOINT_LO, door_env.JOINT_HI)
    q[1] = min(q[1], 0.69)  # gripper open
    s, _ = step(EnvState(q=q, d=0.0, mode=mode), np.array(command), UNIT)
    assert s.d == 0.0


def test_engagement_rule():
    assert grip_engaged(np.array([0.8, 0.7, 0.0]), 0.0, UNIT)
    assert grip_engaged(np.array([0.85, 0.7, 0.05]), 0.0, UNIT)
    assert not grip_engaged(np.array([0.86, 0.9, 0.0]), 0.0, UNIT)
    assert not grip_engaged(np.array([0.8, 0.69, 0.0]), 0.0, UNIT)
    assert not grip_engaged(np.array([0.8, 0.9, 0.2]), 0.0, UNIT)
    # once the door has moved, the closed gripper keeps the handle
    assert grip_engaged(np.array([0.95, 0.9, 0.0]), 0.1, UNIT)


def test_motion_clipped_and_clamped():
    s, _ = step(EnvState(q=np.zeros(3), d=0.0, mode=DoorMode.PUSH), np.array([1.0, -1.0, -1.0]), UNIT)
    assert s.q == pytest.approx([0.05, 0.0, -0.05])
    s, _ = step(EnvState(q=np.array([1.0, 1.0, 1.0]), d=0.0, mode=DoorMode.PUSH), np.full(3, 5.0), UNIT)
    assert np.array_equal(s.q, [1.0, 1.0, 1.0])


def test_step_rejects_bad_commands():
    s, _ = reset(DoorMode.PUSH, UNIT)
    with pytest.raises(ValueError):
        step(s, np.array([0.0, np.nan, 0.0]), UNIT)
    with pytest.raises(ValueError):
        step(s, np.zeros(2), UNIT)


def test_success_rule():
    mk = lambda d, n: EnvState(q=np.zeros(3), d=d, mode=DoorMode.PUSH, step_count=n)
    assert is_success(mk(0.5, 100), UNIT) is True
    assert not is_success(mk(0.49, 10), UNIT)
    assert not is_success(mk(0.6, 101), UNIT)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(MODES), st.integers(0, 2**32))
def test_random_walk_invariants(mode, seed):
    """d never decreases, observation stays in range and depends on (q, d) only."""
    rng = np.random.default_rng(seed)
    s = EnvState(q=AT_HANDLE.copy(), d=0.0, mode=mode)
    for _ in range(40):
        prev = s.d
        s, obs = step(s, s.q + rng.normal(0, 0.05, 3), UNIT)
        assert s.d >= prev
        assert np.all(obs >= door_env.OBS_LO) and np.all(obs <= door_env.OBS_HI)
        assert np.array_equal(render(s.q, s.d, UNIT), obs)


def test_sensor_noise_clamped():
    cfg = EnvConfig(sensor_noise_std=0.5)
    s, obs = reset(DoorMode.PUSH, cfg, Rng(0))
    assert np.all(obs >= door_env.OBS_LO) and np.all(obs <= door_env.OBS_HI)
    with pytest.raises(ValueError):
        reset(DoorMode.PUSH, cfg, None)


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(gain=0.0)
    with pytest.raises(ValueError):
        EnvConfig(sensor_noise_std=-1.0)


@pytest.mark.parametrize("mode", MODES)
def test_noise_free_demo_succeeds(mode):
    demo = script_demo(mode, jitter_std=0.0)
    assert demo.shape == (DEMO_LENGTH, door_env.OBS_DIM)
    assert demo[-1, 3] >= 0.5
    # approach, then grasp, then actuate
    assert demo[20, 0] == pytest.approx(0.8) and demo[20, 1] == 0.0
    assert demo[30, 1] == pytest.approx(1.0)
    assert demo[30, 5] == 1.0


@pytest.mark.parametrize("mode", MODES)
def test_five_jittered_demos_distinct_and_successful(mode):
    root = Rng(2)
    demos = [script_demo(mode, 0.01, root.derive(k)) for k in range(5)]
    for a in range(5):
        assert demos[a][-1, 3] >= 0.5
        for b in range(a + 1, 5):
            assert not np.array_equal(demos[a], demos[b])


def test_demos_share_prefix_across_modes():
    """Without jitter the modes differ only once the door starts to move."""
    d = {m: script_demo(m, 0.0) for m in MODES}
    first = min(int(np.argmax(d[m][:, 3] > 0)) for m in MODES)
    assert first > 30
    for m in MODES:
        assert np.array_equal(d[m][:first], d[DoorMode.PUSH][:first])


def test_demo_argument_errors():
    with pytest.raises(ValueError):
        script_demo(DoorMode.PUSH, -0.1)
    with pytest.raises(ValueError):
        script_demo(DoorMode.PUSH, 0.01, rng=None)


def test_unit_gain_schedule_cannot_open_push_door():
    """With unit gain and 0.05 per step the push travel is capped by the joint range."""
    with pytest.raises(RuntimeError):
        script_demo(DoorMode.PUSH, 0.0, cfg=UNIT)
