"""Post-hoc analyses of control logs: local Lyapunov exponents and PCA."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .srnn import Params, State, jacobian_state

POWER_TOL = 1e-10
POWER_MAX_ITER = 1000
SIGMA_FLOOR = 1e-300
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100

LYAPUNOV_HEADER = ["episode", "t", "lambda", "variant"]
PCA_HEADER = ["episode", "t", "pc1", "pc2", "variant", "mode"]


class LogMismatchError(ValueError):
    """Log and checkpoint disagree on dimensions."""


# ---------------------------------------------------------------- Lyapunov

def sigma_max(J) -> float:
    """Largest singular value by power iteration on J^T J."""
    J = np.asarray(J, dtype=np.float64)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {J.shape}")
    n = J.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    JtJ = J.T @ J
    v = np.full(n, 1.0 / math.sqrt(n))
    lam = 0.0
    for _ in range(POWER_MAX_ITER):
        w = JtJ @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        w /= norm
        # Rayleigh quotient of the unit vector
        new_lam = float(w @ JtJ @ w)
        done = abs(new_lam - lam) <= POWER_TOL * max(abs(new_lam), 1.0)
        v, lam = w, new_lam
        if done:
            break
    return math.sqrt(max(lam, 0.0))


def local_lyapunov(J) -> float:
    """ln sigma_max(J); -inf when the map collapses every direction."""
    s = sigma_max(J)
    if s < SIGMA_FLOOR:
        return float("-inf")
    return math.log(s)


@dataclass
class LyapunovProfile:
    episode: int
    variant: str
    t: list[int]
    lam: list[float]


def _state_jacobian(p: Params, state: State, x, space: str) -> np.ndarray:
    J = jacobian_state(p, state, x)
    if space == "hc":
        return J
    if space == "h":
        H = p.hidden_dim
        return J[:H, :H]
    raise ValueError(f"space must be 'hc' or 'h', got {space!r}")


def split_episodes(records) -> list[list[dict]]:
    """Group step records by (variant, mode, episode) in order of first appearance."""
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        if r.get("type", "step") != "step":
            continue
        groups.setdefault((r["variant"], r["mode"], r["episode"]), []).append(r)
    out = []
    for key, recs in groups.items():
        ts = [r["t"] for r in recs]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"non-increasing t in episode {key}")
        out.append(recs)
    return out


def _check_dims(p: Params, rec: dict):
    H, D = p.hidden_dim, p.obs_dim
    if len(rec["h"]) != H or len(rec["c"]) != H or len(rec["obs"]) != D:
        raise LogMismatchError(
            f"log record has h={len(rec['h'])}, c={len(rec['c'])}, obs={len(rec['obs'])}; "
            f"checkpoint expects H={H}, D={D}")


def lyapunov_profile(episode_records, p: Params, space: str = "hc") -> LyapunovProfile:
    """One exponent per logged transition t -> t+1.

    The operating point of transition t is the state carried out of step t
    together with the observation consumed at step t + 1.
    """
    recs = list(episode_records)
    if not recs:
        raise ValueError("empty episode")
    for r in recs:
        _check_dims(p, r)
    ts, lams = [], []
    for cur, nxt in zip(recs, recs[1:]):
        state = State(np.asarray(cur["h"], dtype=np.float64), np.asarray(cur["c"], dtype=np.float64))
        J = _state_jacobian(p, state, np.asarray(nxt["obs"], dtype=np.float64), space)
        ts.append(int(cur["t"]))
        lams.append(local_lyapunov(J))
    return LyapunovProfile(int(recs[0]["episode"]), recs[0]["variant"], ts, lams)


def mean_profile(profiles) -> np.ndarray:
    """Step-wise mean over equally long profiles."""
    lengths = {len(pr.lam) for pr in profiles}
    if len(lengths) != 1:
        raise ValueError("profiles differ in length")
    return np.mean(np.array([pr.lam for pr in profiles]), axis=0)


# ---------------------------------------------------------------- PCA

def jacobi_eigh(A, tol: float = JACOBI_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic Jacobi sweeps."""
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(A).max(initial=0.0)))):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = max(float(np.linalg.norm(A)), 1e-300)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = float(A[q, q] - A[p, p])
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff  # theta would overflow; small-angle limit
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- R^T A R with R the (p, q) plane rotation
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi sweeps did not converge")
    return np.diag(A).copy(), V


@dataclass
class PCAFit:
    mean: np.ndarray
    components: np.ndarray  # (k, dim), rows orthonormal
    eigenvalues: np.ndarray  # all eigenvalues, descending
    explained_variance_ratio: np.ndarray  # first k


def pca_fit(points, k: int = 2) -> PCAFit:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if k < 1 or k > X.shape[1]:
        raise ValueError(f"k must lie in [1, {X.shape[1]}]")
    if X.shape[0] < k + 1:
        raise ValueError(f"need at least {k + 1} points, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain non-finite values")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    vals, vecs = jacobi_eigh(cov)
    order = np.argsort(-vals, kind="stable")
    vals = np.maximum(vals[order], 0.0)
    vecs = vecs[:, order]
    comps = vecs[:, :k].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total = float(vals.sum())
    ratio = vals[:k] / total if total > 0 else np.zeros(k)
    return PCAFit(mean, comps, vals, ratio)


def pca_project(points, fit: PCAFit) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.shape[-1] != fit.mean.shape[0]:
        raise ValueError(f"points have dim {X.shape[-1]}, fit expects {fit.mean.shape[0]}")
    return (X - fit.mean) @ fit.components.T


def hidden_points(records, use_c: bool = False) -> np.ndarray:
    rows = [r["h"] + r["c"] if use_c else r["h"] for r in records]
    return np.asarray(rows, dtype=np.float64)


# ---------------------------------------------------------------- I/O

def read_log(path) -> tuple[dict | None, list[dict]]:
    """Header record (if any) and step records of a JSONL log."""
    header = None
    steps = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: bad JSON ({e})") from None
            kind = rec.get("type", "step")
            if kind == "header":
                header = rec
            elif kind == "step":
                steps.append(rec)
    return header, steps


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv_text(comment: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write(comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def lyapunov_csv(profiles, comment: str) -> str:
    rows = [[pr.episode, t, _fmt(lam), pr.variant]
            for pr in profiles for t, lam in zip(pr.t, pr.lam)]
    return _csv_text(comment, LYAPUNOV_HEADER, rows)


def pca_csv(episodes, fit: PCAFit, comment: str, use_c: bool = False) -> str:
    rows = []
    for recs in episodes:
        Y = pca_project(hidden_points(recs, use_c), fit)
        for r, (a, b) in zip(recs, Y):
            rows.append([r["episode"], r["t"], _fmt(a), _fmt(b), r["variant"], r["mode"]])
    return _csv_text(comment, PCA_HEADER, rows)


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
