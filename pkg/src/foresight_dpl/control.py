"""Closed-loop control episodes for the three compared variants.

At every step the network consumes the current observation, the variant
optionally modifies the recurrent state, and the joint part of the
predicted next observation is sent to the door as the joint command.

* ``conventional``: state is left untouched.
* ``noised``: one noise draw with the foresight noise scale, no selection.
* ``foresight``: full refinement every ``interval`` steps.
"""
from __future__ import annotations

import numpy as np

from . import door_env
from .door_env import DoorMode, EnvConfig
from .foresight import ForesightConfig, refine, state_noise_std
from .numeric import Rng
from .srnn import Params, State, cell_forward

VARIANTS = ("foresight", "conventional", "noised")


def episode_streams(seed: int, mode: DoorMode, episode: int) -> tuple[Rng, Rng]:
    """(env rng, model rng) for one episode; independent of the variant so
    that variants see common random numbers."""
    master = Rng(seed)
    tag = f"{DoorMode(mode).value}/{episode}"
    return master.derive("env/" + tag), master.derive("model/" + tag)


def run_episode(p: Params, mode: DoorMode, variant: str, fcfg: ForesightConfig, env_cfg: EnvConfig,
                seed: int, episode: int = 0) -> tuple[list[dict], bool]:
    """Run one episode of ``env_cfg.max_steps`` control steps.

    Record t holds the observation consumed at step t, the prediction it
    produced, the (possibly refined) state carried to step t + 1 and the door
    displacement at the time of the observation.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if p.obs_dim != door_env.OBS_DIM:
        raise ValueError(f"model obs_dim {p.obs_dim} != environment obs_dim {door_env.OBS_DIM}")
    mode = DoorMode(mode)
    env_rng, model_rng = episode_streams(seed, mode, episode)
    env_state, obs = door_env.reset(mode, env_cfg, env_rng)
    state = State.zeros(p.hidden_dim)
    records = []
    for t in range(env_cfg.max_steps):
        state, pred = cell_forward(p, state, obs)
        fs = None
        if variant == "foresight" and t % fcfg.interval == 0:
            out = refine(p, state, pred, fcfg, model_rng)
            state = out.refined_state
            fs = {
                "chosen_index": out.chosen_index,
                "candidate_scores": out.candidate_scores.tolist(),
                "noise_std_used": float(out.noise_std_used[0]),
            }
        elif variant == "noised":
            std = state_noise_std(pred.var, fcfg, p.hidden_dim)
            state = State.from_flat(state.flat() + std * model_rng.normal(std.shape))
        records.append({
            "type": "step",
            "episode": episode,
            "variant": variant,
            "mode": mode.value,
            "t": t,
            "obs": obs.tolist(),
            "pred_mean": pred.mean.tolist(),
            "pred_var": pred.var.tolist(),
            "h": state.h.tolist(),
            "c": state.c.tolist(),
            "foresight": fs,
            "d": env_state.d,
        })
        command = pred.mean[:3]
        if not np.all(np.isfinite(command)):
            raise FloatingPointError(f"non-finite command at step {t}")
        env_state, obs = door_env.step(env_state, command, env_cfg, env_rng)
    return records, door_env.is_success(env_state, env_cfg)
