"""Learning from demonstration: full-batch teacher-forced NLL minimisation."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numeric import Rng
from .srnn import PARAM_NAMES, Params, backward_batch, forward_batch, init_params, param_shapes

FORMAT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch: int, demo_index: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, demo {demo_index}")
        self.epoch = epoch
        self.demo_index = demo_index


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    warmup_epochs: int = 0  # leading epochs fit the mean only (unit variance)
    nll_beta: float = 1.0  # per-dim NLL terms weighted by stop-gradient var**beta; 0 is the plain NLL
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    input_noise_std: float = 0.03
    state_noise_std: float = 0.15  # Gaussian jitter on (h, c) at every training step
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables intermediate checkpoints

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        if not (self.lr > 0 and self.clip_norm > 0 and self.adam_eps > 0):
            raise ValueError("lr, clip_norm and adam_eps must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not 0 <= self.nll_beta <= 1:
            raise ValueError("nll_beta must lie in [0, 1]")
        if self.input_noise_std < 0 or self.state_noise_std < 0 or self.checkpoint_every < 0:
            raise ValueError("noise stds and checkpoint_every must be >= 0")


@dataclass
class TrainReport:
    epoch_losses: list[float]
    final_loss: float
    wall_clock: float = 0.0
    checkpoint_path: str | None = None
    intermediate_checkpoints: list[str] = field(default_factory=list)


def _groups(demos):
    """Demos grouped by length, ascending demo index inside each group.

    Returns a list of (indices, X, Y) with X, Y shaped (T, B, D).
    """
    by_len: dict[int, list[int]] = {}
    for k, demo in enumerate(demos):
        by_len.setdefault(len(demo), []).append(k)
    out = []
    for length, idx in by_len.items():
        if length < 2:
            raise ValueError(f"demo {idx[0]} has fewer than 2 observations")
        stack = np.stack([demos[k] for k in idx], axis=1)
        out.append((idx, stack[:-1], stack[1:]))
    return out


def _check_demos(demos) -> list[np.ndarray]:
    if len(demos) == 0:
        raise ValueError("need at least one demonstration")
    demos = [np.asarray(d, dtype=np.float64) for d in demos]
    dims = {d.shape[-1] for d in demos}
    if len(dims) != 1 or any(d.ndim != 2 for d in demos):
        raise ValueError(f"demonstrations must share one obs dimension, got {sorted(dims)}")
    return demos


def _loss_and_grad(p: Params, groups, n_demos: int, noise_rng: Rng | None = None,
                   input_noise: float = 0.0, state_noise: float = 0.0,
                   epoch: int = 0, need_grad: bool = True, mean_only: bool = False,
                   beta: float = 0.0):
    total = 0.0
    grad = None
    H = p.hidden_dim
    for idx, X, Y in groups:
        B = len(idx)
        noise = None
        if noise_rng is not None:
            if input_noise > 0:
                X = X + input_noise * noise_rng.normal(X.shape)
            if state_noise > 0:
                noise = state_noise * noise_rng.normal((X.shape[0], B, 2 * H))
        # overflow surfaces as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            losses, steps = forward_batch(p, np.zeros((B, H)), np.zeros((B, H)), X, Y, noise)
        bad = ~np.isfinite(losses)
        if bad.any():
            j = int(np.argmax(bad))
            raise NonFiniteLossError(epoch, idx[j], float(losses[j]))
        total += float(np.sum(losses))
        if need_grad:
            g = backward_batch(p, X, Y, steps, weights=np.full(B, 1.0 / n_demos),
                               mean_only=mean_only, beta=beta)
            grad = g if grad is None else Params(**{n: a + getattr(g, n) for n, a in grad.items()})
    return total / n_demos, grad


def evaluate_nll(p: Params, demos) -> float:
    """Mean teacher-forced NLL over demos (each demo's NLL is a mean over its steps)."""
    demos = _check_demos(demos)
    loss, _ = _loss_and_grad(p, _groups(demos), len(demos), need_grad=False)
    return loss


def global_norm(g: Params) -> float:
    return float(np.sqrt(sum(np.sum(a * a) for a in g.arrays())))


def clip_gradient(g: Params, clip_norm: float) -> Params:
    norm = global_norm(g)
    if norm <= clip_norm:
        return g
    scale = clip_norm / norm
    return g.map(lambda a: a * scale)


class Adam:
    def __init__(self, p: Params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = p.map(np.zeros_like)
        self.v = p.map(np.zeros_like)
        self.t = 0

    def update(self, p: Params, g: Params) -> Params:
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t
        new = {}
        for name, w in p.items():
            gw = getattr(g, name)
            m = getattr(self.m, name)
            v = getattr(self.v, name)
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * gw
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * gw * gw
            new[name] = w - cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        return Params(**new)


def train(demos, cfg: TrainConfig, obs_dim: int, hidden_dim: int, out_dir=None,
          meta: dict | None = None) -> tuple[Params, TrainReport]:
    """Train from scratch; returns the final parameters and the loss report.

    ``epoch_losses[e]`` is the clean (noise-free) mean NLL of the parameters at
    the start of epoch e, so ``epoch_losses[0]`` is the initial loss.
    """
    demos = _check_demos(demos)
    if demos[0].shape[-1] != obs_dim:
        raise ValueError(f"demo obs dim {demos[0].shape[-1]} != model obs_dim {obs_dim}")
    start = time.perf_counter()
    root = Rng(cfg.seed)
    p = init_params(obs_dim, hidden_dim, root.derive("init"))
    noise_rng = root.derive("training-noise")
    noisy = cfg.input_noise_std > 0 or cfg.state_noise_std > 0
    groups = _groups(demos)
    n = len(demos)
    opt = Adam(p, cfg)
    out_dir = Path(out_dir) if out_dir is not None else None
    report = TrainReport(epoch_losses=[], final_loss=float("nan"))
    for epoch in range(cfg.epochs):
        warm = epoch < cfg.warmup_epochs
        if noisy:
            clean, _ = _loss_and_grad(p, groups, n, epoch=epoch, need_grad=False)
            _, grad = _loss_and_grad(p, groups, n, noise_rng, cfg.input_noise_std,
                                     cfg.state_noise_std, epoch, mean_only=warm, beta=cfg.nll_beta)
        else:
            clean, grad = _loss_and_grad(p, groups, n, epoch=epoch, mean_only=warm, beta=cfg.nll_beta)
        report.epoch_losses.append(clean)
        p = opt.update(p, clip_gradient(grad, cfg.clip_norm))
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            path = out_dir / f"checkpoint_epoch{epoch + 1:05d}.json"
            save_checkpoint(p, path, dict(meta or {}, epoch=epoch + 1))
            report.intermediate_checkpoints.append(str(path))
    report.final_loss, _ = _loss_and_grad(p, groups, n, epoch=cfg.epochs, need_grad=False)
    report.wall_clock = time.perf_counter() - start
    return p, report


def checkpoint_dict(p: Params, meta: dict | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "obs_dim": p.obs_dim,
        "hidden_dim": p.hidden_dim,
        "params": {name: getattr(p, name).tolist() for name in PARAM_NAMES},
        "meta": meta or {},
    }


def save_checkpoint(p: Params, path, meta: dict | None = None) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_dict(p, meta), indent=1) + "\n")


def params_from_dict(doc: dict) -> Params:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointError("not a checkpoint document")
    if doc["format_version"] != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint format_version {doc['format_version']!r} (expected {FORMAT_VERSION})")
    try:
        D, H = int(doc["obs_dim"]), int(doc["hidden_dim"])
        raw = doc["params"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"malformed checkpoint header: {e}") from None
    arrays = {}
    for name, shape in param_shapes(D, H).items():
        if name not in raw:
            raise CheckpointShapeError(f"missing parameter {name}")
        a = np.asarray(raw[name], dtype=np.float64)
        if a.shape != shape:
            raise CheckpointShapeError(f"parameter {name} has shape {a.shape}, expected {shape}")
        if not np.all(np.isfinite(a)):
            raise CheckpointError(f"parameter {name} contains non-finite values")
        arrays[name] = a
    extra = set(raw) - set(PARAM_NAMES)
    if extra:
        raise CheckpointShapeError(f"unexpected parameters {sorted(extra)}")
    return Params(**arrays)


def load_checkpoint(path) -> Params:
    return load_checkpoint_with_meta(path)[0]


def load_checkpoint_with_meta(path) -> tuple[Params, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupted checkpoint {path}: {e}") from None
    p = params_from_dict(doc)
    return p, doc.get("meta", {})
