"""Hidden-state refinement by noisy closed-loop foresight.

Each refinement perturbs the recurrent state with n Gaussian noise draws
whose scale follows the current predicted variance, imagines T steps ahead
by feeding the network its own predicted means, and keeps the candidate
whose final predicted variance is lowest.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import Rng
from .srnn import Params, Prediction, State, step_batch

DEGENERATE_SPREAD = 1e-12


@dataclass(frozen=True)
class ForesightConfig:
    n: int = 16
    T: int = 10
    sigma_lo: float = 0.05
    sigma_hi: float = 0.15
    interval: int = 1
    include_unperturbed: bool = False
    aggregate: str = "mean"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.interval < 1:
            raise ValueError("interval must be >= 1")
        if not 0 < self.sigma_lo <= self.sigma_hi:
            raise ValueError("need 0 < sigma_lo <= sigma_hi")
        if self.aggregate != "mean":
            raise ValueError("aggregate must be 'mean'")


@dataclass(frozen=True)
class ForesightOutcome:
    chosen_index: int
    candidate_scores: np.ndarray
    refined_state: State
    noise_std_used: np.ndarray | None = None


def normalize_variance(var, cfg: ForesightConfig) -> np.ndarray:
    """Min-max map of the predicted variance onto [sigma_lo, sigma_hi]."""
    var = np.asarray(var, dtype=np.float64)
    lo, hi = var.min(), var.max()
    if hi - lo < DEGENERATE_SPREAD:
        return np.full(var.shape, 0.5 * (cfg.sigma_lo + cfg.sigma_hi))
    s = cfg.sigma_lo + (cfg.sigma_hi - cfg.sigma_lo) * (var - lo) / (hi - lo)
    # guard rounding at the interval ends
    return np.clip(s, cfg.sigma_lo, cfg.sigma_hi)


def state_noise_std(var, cfg: ForesightConfig, hidden_dim: int) -> np.ndarray:
    """Per-dimension std for the 2H state noise: the mean of the normalized variance."""
    s = normalize_variance(var, cfg)
    return np.full(2 * hidden_dim, float(np.mean(s)))


def sample_candidates(state: State, std, n: int, rng: Rng, include_unperturbed: bool = False) -> list[State]:
    if n < 1:
        raise ValueError("n must be >= 1")
    base = state.flat()
    std = np.broadcast_to(np.asarray(std, dtype=np.float64), base.shape)
    if np.any(std < 0):
        raise ValueError("noise std must be >= 0")
    noised = n - 1 if include_unperturbed else n
    noise = rng.normal((noised, base.size)) * std
    flat = base + noise
    if include_unperturbed:
        flat = np.vstack([base[None], flat])
    return [State.from_flat(row) for row in flat]


def rollout_batch(p: Params, h, c, seed_input, T: int):
    """Closed-loop rollout for a batch of states; returns the list of (mean, var) per step."""
    if T < 1:
        raise ValueError("T must be >= 1")
    x = np.broadcast_to(seed_input, (h.shape[0], p.obs_dim)) if h.ndim == 2 else seed_input
    traj = []
    for _ in range(T):
        h, c, mean, var = step_batch(p, h, c, x)
        traj.append((mean, var))
        x = mean
    return traj


def closed_loop_rollout(p: Params, state: State, seed_input, T: int) -> tuple[Prediction, list[Prediction]]:
    traj = rollout_batch(p, state.h, state.c, np.asarray(seed_input, dtype=np.float64), T)
    preds = [Prediction(m, v) for m, v in traj]
    return preds[-1], preds


def score(var) -> np.ndarray:
    """Scalar expected variance: arithmetic mean over observation dimensions."""
    return np.mean(var, axis=-1)


def select_hidden(candidates, scores) -> ForesightOutcome:
    scores = np.asarray(scores, dtype=np.float64)
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    if len(candidates) != scores.shape[0]:
        raise ValueError(f"{len(candidates)} candidates but {scores.shape[0]} scores")
    # np.argmin returns the first minimum, i.e. lowest index on ties
    k = int(np.argmin(scores))
    return ForesightOutcome(k, scores, candidates[k])


def refine(p: Params, state: State, current_pred: Prediction, cfg: ForesightConfig, rng: Rng) -> ForesightOutcome:
    std = state_noise_std(current_pred.var, cfg, p.hidden_dim)
    candidates = sample_candidates(state, std, cfg.n, rng, cfg.include_unperturbed)
    H = np.stack([s.h for s in candidates])
    C = np.stack([s.c for s in candidates])
    traj = rollout_batch(p, H, C, current_pred.mean, cfg.T)
    scores = score(traj[-1][1])
    out = select_hidden(candidates, scores)
    return ForesightOutcome(out.chosen_index, out.candidate_scores, out.refined_state, std)
