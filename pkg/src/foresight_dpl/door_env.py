"""Kinematic three-mode door and a scripted demonstrator.

Observation layout (D = 7)::

    [q1 arm extension, q2 grip, q3 lateral, door displacement, contact, grip engaged, 0.5]

The door opens only under its own mode's motion. While the gripper holds
the handle the arm is compliant along the correct direction and blocked in
every other direction, so a wrong attempt leaves both the door and the arm
where they were. The rendered observation depends on (q, d) only, so the
three modes look identical until the door actually moves.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, replace

import numpy as np

from .numeric import Rng

OBS_DIM = 7
JOINT_LO = np.array([0.0, 0.0, -1.0])
JOINT_HI = np.array([1.0, 1.0, 1.0])
OBS_LO = np.concatenate([JOINT_LO, np.zeros(4)])
OBS_HI = np.concatenate([JOINT_HI, np.ones(4)])
APPEARANCE = 0.5


class DoorMode(enum.Enum):
    PUSH = "push"
    PULL = "pull"
    SLIDE = "slide"


MODES = (DoorMode.PUSH, DoorMode.PULL, DoorMode.SLIDE)


@dataclass(frozen=True)
class EnvConfig:
    contact_point: float = 0.8
    grip_threshold: float = 0.7
    contact_tolerance: float = 0.05
    max_joint_delta: float = 0.1
    gain: float = 3.0
    success_threshold: float = 0.5
    max_steps: int = 100
    sensor_noise_std: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name == "sensor_noise_std":
                if value < 0:
                    raise ValueError("sensor_noise_std must be >= 0")
            elif not value > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class EnvState:
    q: np.ndarray
    d: float
    mode: DoorMode
    step_count: int = 0


def in_contact(q, d: float, cfg: EnvConfig) -> bool:
    if d > 0.0:
        # the handle travels with a closed gripper once the door has moved
        return bool(q[1] >= cfg.grip_threshold)
    return bool(abs(q[0] - cfg.contact_point) <= cfg.contact_tolerance
                and abs(q[2]) <= cfg.contact_tolerance)


def grip_engaged(q, d: float, cfg: EnvConfig) -> bool:
    return bool(q[1] >= cfg.grip_threshold and in_contact(q, d, cfg))


def render(q, d: float, cfg: EnvConfig) -> np.ndarray:
    """Noise-free observation for joints q and displacement d."""
    contact = in_contact(q, d, cfg)
    engaged = grip_engaged(q, d, cfg)
    visual = [min(d, 1.0), float(contact), float(engaged), APPEARANCE]
    return np.concatenate([np.asarray(q, dtype=np.float64), visual])


def _observe(state: EnvState, cfg: EnvConfig, rng: Rng | None) -> np.ndarray:
    obs = render(state.q, state.d, cfg)
    if cfg.sensor_noise_std > 0:
        if rng is None:
            raise ValueError("sensor noise requires an rng")
        obs = np.clip(obs + cfg.sensor_noise_std * rng.normal(obs.shape), OBS_LO, OBS_HI)
    return obs


def reset(mode: DoorMode, cfg: EnvConfig, rng: Rng | None = None) -> tuple[EnvState, np.ndarray]:
    state = EnvState(q=np.zeros(3), d=0.0, mode=DoorMode(mode), step_count=0)
    return state, _observe(state, cfg, rng)


def _allowed_motion(delta: np.ndarray, mode: DoorMode) -> np.ndarray:
    """Joint motion permitted while the handle is held; grip is always free."""
    out = np.array([0.0, delta[1], 0.0])
    if mode is DoorMode.PUSH:
        out[0] = max(delta[0], 0.0)
    elif mode is DoorMode.PULL:
        out[0] = min(delta[0], 0.0)
    else:
        out[2] = delta[2]
    return out


def step(state: EnvState, command, cfg: EnvConfig, rng: Rng | None = None) -> tuple[EnvState, np.ndarray]:
    """Move joints toward ``command`` (joint targets) and update the door."""
    command = np.asarray(command, dtype=np.float64)
    if command.shape != (3,):
        raise ValueError(f"command must have 3 entries, got shape {command.shape}")
    if not np.all(np.isfinite(command)):
        raise ValueError("command contains non-finite entries")
    q = state.q
    delta = np.clip(command - q, -cfg.max_joint_delta, cfg.max_joint_delta)
    engaged = grip_engaged(q, state.d, cfg)
    if engaged:
        delta = _allowed_motion(delta, state.mode)
    q_new = np.clip(q + delta, JOINT_LO, JOINT_HI)
    moved = q_new - q

    d = state.d
    if engaged:
        if state.mode is DoorMode.PUSH:
            d += cfg.gain * max(0.0, moved[0])
        elif state.mode is DoorMode.PULL:
            d += cfg.gain * max(0.0, -moved[0])
        else:
            d += cfg.gain * abs(moved[2])
    new_state = replace(state, q=q_new, d=d, step_count=state.step_count + 1)
    return new_state, _observe(new_state, cfg, rng)


def is_success(state: EnvState, cfg: EnvConfig) -> bool:
    return bool(state.d >= cfg.success_threshold and state.step_count <= cfg.max_steps)


# demonstration schedule
APPROACH_STEPS = 20
GRASP_STEPS = 10
DEMO_LENGTH = 70
DEMO_SPEED = 0.05
DEMO_TRAVEL = 0.2
MAX_DWELL = 8


def script_demo(mode: DoorMode, jitter_std: float = 0.01, rng: Rng | None = None,
                cfg: EnvConfig = EnvConfig(), max_dwell: int = MAX_DWELL) -> np.ndarray:
    """One successful demonstration, shape (DEMO_LENGTH, OBS_DIM).

    Approach the handle (steps 0-19), close the gripper (20-29), then actuate
    (30-69): hold the handle for a random dwell of 0..max_dwell steps, move
    along the mode's direction for DEMO_TRAVEL and hold. Command jitter is
    added to every joint target. Without an rng the dwell is zero.
    """
    if jitter_std < 0:
        raise ValueError("jitter_std must be >= 0")
    if jitter_std > 0 and rng is None:
        raise ValueError("jitter requires an rng")
    mode = DoorMode(mode)
    axis, sign = {DoorMode.PUSH: (0, 1.0), DoorMode.PULL: (0, -1.0), DoorMode.SLIDE: (2, 1.0)}[mode]
    dwell = rng.integers(max_dwell + 1) if rng is not None and max_dwell > 0 else 0
    actuate_from = APPROACH_STEPS + GRASP_STEPS + dwell
    state, obs = reset(mode, cfg, rng)
    observations = [obs]
    travel = 0.0
    for k in range(DEMO_LENGTH - 1):
        # nominal targets are absolute so jitter does not accumulate
        if k < APPROACH_STEPS:
            target = np.array([cfg.contact_point * (k + 1) / APPROACH_STEPS, 0.0, 0.0])
        elif k < APPROACH_STEPS + GRASP_STEPS:
            target = np.array([cfg.contact_point, (k - APPROACH_STEPS + 1) / GRASP_STEPS, 0.0])
        else:
            if k >= actuate_from and grip_engaged(state.q, state.d, cfg):
                travel = min(travel + DEMO_SPEED, DEMO_TRAVEL)
            target = np.array([cfg.contact_point, 1.0, 0.0])
            target[axis] += sign * travel
        if jitter_std > 0:
            target = target + jitter_std * rng.normal(3)
        state, obs = step(state, target, cfg, rng)
        observations.append(obs)
    if not is_success(state, cfg):
        raise RuntimeError(f"scripted {mode.value} demo failed to open the door (d={state.d:.3f})")
    return np.array(observations)
