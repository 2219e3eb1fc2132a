"""Stochastic recurrent network: an LSTM cell with a Gaussian output head.

The head predicts the mean and variance of the next observation::

    mean = W_mean h' + b_mean
    var  = softplus(W_var h' + b_var) + VAR_FLOOR

All math is written over a leading batch axis so that training can unroll
every demonstration at once and the foresight module can roll out all
candidate states in a single pass. Single-sequence helpers wrap the batched
kernels.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .numeric import Rng, sigmoid, softplus

VAR_FLOOR = 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))

GATES = ("i", "f", "g", "o")

# canonical parameter order, also used by the checkpoint format
PARAM_NAMES = (
    "W_i", "U_i", "b_i",
    "W_f", "U_f", "b_f",
    "W_g", "U_g", "b_g",
    "W_o", "U_o", "b_o",
    "W_mean", "b_mean",
    "W_var", "b_var",
)


@dataclass
class Params:
    W_i: np.ndarray
    U_i: np.ndarray
    b_i: np.ndarray
    W_f: np.ndarray
    U_f: np.ndarray
    b_f: np.ndarray
    W_g: np.ndarray
    U_g: np.ndarray
    b_g: np.ndarray
    W_o: np.ndarray
    U_o: np.ndarray
    b_o: np.ndarray
    W_mean: np.ndarray
    b_mean: np.ndarray
    W_var: np.ndarray
    b_var: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.W_i.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_i.shape[0]

    def items(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def map(self, fn) -> "Params":
        return Params(**{name: fn(a) for name, a in self.items()})

    def copy(self) -> "Params":
        return self.map(np.copy)

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, flat, obs_dim: int, hidden_dim: int) -> "Params":
        flat = np.asarray(flat, dtype=np.float64)
        out, pos = {}, 0
        for name, shape in param_shapes(obs_dim, hidden_dim).items():
            size = int(np.prod(shape))
            out[name] = flat[pos:pos + size].reshape(shape).copy()
            pos += size
        if pos != flat.size:
            raise ValueError(f"expected {pos} values, got {flat.size}")
        return cls(**out)

    @classmethod
    def zeros(cls, obs_dim: int, hidden_dim: int) -> "Params":
        return cls(**{n: np.zeros(s) for n, s in param_shapes(obs_dim, hidden_dim).items()})


def param_shapes(obs_dim: int, hidden_dim: int) -> dict[str, tuple]:
    D, H = obs_dim, hidden_dim
    shapes = {}
    for g in GATES:
        shapes[f"W_{g}"] = (H, D)
        shapes[f"U_{g}"] = (H, H)
        shapes[f"b_{g}"] = (H,)
    shapes["W_mean"] = (D, H)
    shapes["b_mean"] = (D,)
    shapes["W_var"] = (D, H)
    shapes["b_var"] = (D,)
    return {name: shapes[name] for name in PARAM_NAMES}


@dataclass(frozen=True)
class State:
    """Recurrent memory (h, c); arrays may carry a leading batch axis."""
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int, batch: int | None = None) -> "State":
        shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
        return cls(np.zeros(shape), np.zeros(shape))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.h, self.c], axis=-1)

    @classmethod
    def from_flat(cls, x) -> "State":
        x = np.asarray(x, dtype=np.float64)
        H = x.shape[-1] // 2
        return cls(x[..., :H].copy(), x[..., H:].copy())


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray
    var: np.ndarray


def init_params(obs_dim: int, hidden_dim: int, rng: Rng) -> Params:
    """Uniform(+-1/sqrt(fan_in)) weights, forget bias +1, other biases zero.

    Gate fan-in is obs_dim + hidden_dim (the concatenated [x, h] input);
    head fan-in is hidden_dim.
    """
    if obs_dim < 1 or hidden_dim < 1:
        raise ValueError("obs_dim and hidden_dim must be >= 1")
    shapes = param_shapes(obs_dim, hidden_dim)
    gate_bound = 1.0 / np.sqrt(obs_dim + hidden_dim)
    head_bound = 1.0 / np.sqrt(hidden_dim)
    out = {}
    for name in PARAM_NAMES:
        shape = shapes[name]
        if name.startswith("b_"):
            out[name] = np.zeros(shape)
        else:
            bound = head_bound if name in ("W_mean", "W_var") else gate_bound
            out[name] = (2.0 * rng.uniform(shape) - 1.0) * bound
    out["b_f"] = np.ones(shapes["b_f"])
    return Params(**out)


def _gates(p: Params, h, x):
    a_i = x @ p.W_i.T + h @ p.U_i.T + p.b_i
    a_f = x @ p.W_f.T + h @ p.U_f.T + p.b_f
    a_g = x @ p.W_g.T + h @ p.U_g.T + p.b_g
    a_o = x @ p.W_o.T + h @ p.U_o.T + p.b_o
    return sigmoid(a_i), sigmoid(a_f), np.tanh(a_g), sigmoid(a_o)


def _step(p: Params, h, c, x):
    i, f, g, o = _gates(p, h, x)
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    mean = h_new @ p.W_mean.T + p.b_mean
    z = h_new @ p.W_var.T + p.b_var
    var = softplus(z) + VAR_FLOOR
    return h_new, c_new, mean, var, (i, f, g, o, tc, z)


def step_batch(p: Params, h, c, x):
    """Batched cell step; returns (h', c', mean, var)."""
    h_new, c_new, mean, var, _ = _step(p, h, c, x)
    return h_new, c_new, mean, var


def cell_forward(p: Params, state: State, x) -> tuple[State, Prediction]:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite entries")
    if x.shape[-1] != p.obs_dim:
        raise ValueError(f"input dim {x.shape[-1]} != obs_dim {p.obs_dim}")
    h, c, mean, var = step_batch(p, state.h, state.c, x)
    return State(h, c), Prediction(mean, var)


def gaussian_nll(pred: Prediction, target) -> float | np.ndarray:
    """Negative log-likelihood summed over the last axis."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != np.shape(pred.mean):
        raise ValueError(f"target shape {target.shape} != prediction shape {np.shape(pred.mean)}")
    r = target - pred.mean
    return np.sum(0.5 * (LOG_2PI + np.log(pred.var)) + r * r / (2.0 * pred.var), axis=-1)


def _check_seq(p: Params, inputs, targets):
    X = np.asarray(inputs, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"length mismatch: {X.shape[0]} inputs vs {Y.shape[0]} targets")
    if X.shape[0] < 1:
        raise ValueError("sequence must contain at least one step")
    if X.shape != Y.shape or X.shape[-1] != p.obs_dim:
        raise ValueError(f"inputs {X.shape} / targets {Y.shape} inconsistent with obs_dim {p.obs_dim}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("sequence contains non-finite entries")
    return X, Y


def forward_batch(p: Params, h0, c0, X, Y, state_noise=None):
    """Teacher-forced unroll over X, Y of shape (T, B, D).

    ``state_noise`` (T, B, 2H), if given, is added to (h, c) before each step.
    Returns per-sequence mean-over-time NLL (shape (B,)) and the cache needed
    by :func:`backward_batch`.
    """
    T = X.shape[0]
    H = p.hidden_dim
    h, c = h0, c0
    steps = []
    losses = np.zeros(X.shape[1])
    for t in range(T):
        if state_noise is not None:
            h = h + state_noise[t, :, :H]
            c = c + state_noise[t, :, H:]
        h_new, c_new, mean, var, aux = _step(p, h, c, X[t])
        losses += gaussian_nll(Prediction(mean, var), Y[t])
        steps.append((h, c, h_new, c_new, mean, var, aux))
        h, c = h_new, c_new
    return losses / T, steps


def backward_batch(p: Params, X, Y, steps, weights=None, mean_only: bool = False,
                   beta: float = 0.0) -> Params:
    """Gradient of sum_b weights[b] * loss_b where loss_b is the mean-over-time NLL.

    With ``mean_only`` the variance is held at 1, i.e. the objective becomes
    half the squared error and the variance branch receives no gradient.
    ``beta > 0`` weights each per-dimension NLL term by var**beta treated as a
    constant (beta-NLL); beta = 0 is the exact NLL gradient.
    """
    T, B = X.shape[0], X.shape[1]
    w = np.ones(B) if weights is None else np.asarray(weights, dtype=np.float64)
    scale = (w / T)[:, None]
    grads = {name: np.zeros_like(a) for name, a in p.items()}
    H = p.hidden_dim
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h, c, h_new, c_new, mean, var, (i, f, g, o, tc, z) = steps[t]
        x = X[t]
        r = mean - Y[t]
        if mean_only:
            dmean = scale * r
            dz = np.zeros_like(z)
        else:
            wt = scale * var ** beta if beta else scale
            dmean = wt * r / var
            dvar = wt * (0.5 / var - r * r / (2.0 * var * var))
            dz = dvar * sigmoid(z)
        grads["W_mean"] += dmean.T @ h_new
        grads["b_mean"] += dmean.sum(axis=0)
        grads["W_var"] += dz.T @ h_new
        grads["b_var"] += dz.sum(axis=0)

        dh = dmean @ p.W_mean + dz @ p.W_var + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * c * f * (1.0 - f),
            "g": dc * i * (1.0 - g * g),
            "o": do * o * (1.0 - o),
        }
        dh_next = np.zeros((B, H))
        for k in GATES:
            grads[f"W_{k}"] += da[k].T @ x
            grads[f"U_{k}"] += da[k].T @ h
            grads[f"b_{k}"] += da[k].sum(axis=0)
            dh_next += da[k] @ getattr(p, f"U_{k}")
        dc_next = dc * f
    return Params(**grads)


def forward_sequence(p: Params, initial_state: State, inputs, targets):
    """Teacher-forced unroll of one sequence.

    Returns (mean NLL over steps, list of predictions, list of post-step states).
    """
    X, Y = _check_seq(p, inputs, targets)
    loss, steps = forward_batch(p, initial_state.h[None], initial_state.c[None], X[:, None], Y[:, None])
    preds = [Prediction(s[4][0], s[5][0]) for s in steps]
    states = [State(s[2][0], s[3][0]) for s in steps]
    return float(loss[0]), preds, states


def backward_sequence(p: Params, initial_state: State, inputs, targets) -> Params:
    """Exact BPTT gradient of the mean-over-steps NLL of one sequence."""
    X, Y = _check_seq(p, inputs, targets)
    X, Y = X[:, None], Y[:, None]
    _, steps = forward_batch(p, initial_state.h[None], initial_state.c[None], X, Y)
    return backward_batch(p, X, Y, steps)


def jacobian_state(p: Params, state: State, x) -> np.ndarray:
    """d(h', c') / d(h, c) at one operating point, blocks ordered (h, c)."""
    x = np.asarray(x, dtype=np.float64)
    h, c = state.h, state.c
    i, f, g, o = _gates(p, h, x)
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    di = i * (1.0 - i)
    df = f * (1.0 - f)
    dg = 1.0 - g * g
    do = o * (1.0 - o)
    dc_dh = (c * df)[:, None] * p.U_f + (g * di)[:, None] * p.U_i + (i * dg)[:, None] * p.U_g
    dc_dc = np.diag(f)
    k = o * (1.0 - tc * tc)
    dh_dh = (tc * do)[:, None] * p.U_o + k[:, None] * dc_dh
    dh_dc = np.diag(k * f)
    return np.block([[dh_dh, dh_dc], [dc_dh, dc_dc]])
