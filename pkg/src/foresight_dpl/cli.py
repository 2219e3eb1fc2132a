"""Command-line pipeline: gen-demos, train, run, eval, analyze.

Exit codes: 0 ok, 2 configuration, 3 I/O, 4 numeric failure, 5 compatibility.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, door_env
from .config import ConfigError, RunConfig, load_config
from .control import VARIANTS, run_episode
from .door_env import MODES, DoorMode
from .numeric import Rng
from .trainer import (FORMAT_VERSION, CheckpointError, CheckpointShapeError, CheckpointVersionError,
                      NonFiniteLossError, load_checkpoint_with_meta, save_checkpoint, train)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_COMPAT = 0, 2, 3, 4, 5

CELL_META = {"cell": "lstm", "gates": "i,f,g,o", "head": "gaussian mean + softplus variance",
             "variance_fed_back": False}


class CompatError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config(args) -> RunConfig:
    return load_config(getattr(args, "config", None), getattr(args, "set", None) or ())


# ---------------------------------------------------------------- gen-demos

def demo_filename(mode: DoorMode, k: int) -> str:
    return f"{mode.value}_{k:03d}.jsonl"


def cmd_gen_demos(args) -> int:
    cfg = _config(args)
    if args.per_mode < 1:
        raise ConfigError("--per-mode must be >= 1")
    if args.jitter < 0:
        raise ConfigError("--jitter must be >= 0")
    out = Path(args.out)
    root = Rng(args.seed)
    entries = []
    for mode in MODES:
        for k in range(args.per_mode):
            try:
                obs = door_env.script_demo(mode, args.jitter, root.derive(f"demo/{mode.value}/{k}"), cfg.env)
            except RuntimeError as e:
                raise ConfigError(f"env settings cannot support the scripted demos: {e}") from None
            name = demo_filename(mode, k)
            lines = [json.dumps({"t": t, "obs": row.tolist()}) for t, row in enumerate(obs)]
            _write(out / name, "\n".join(lines) + "\n")
            entries.append({"file": name, "mode": mode.value, "index": k})
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_sha256": cfg.sha256(),
        "seed": args.seed,
        "jitter_std": args.jitter,
        "per_mode": args.per_mode,
        "env": cfg.to_dict()["env"],
        "demos": entries,
    }
    _write(out / "manifest.json", _dump(manifest))
    return EXIT_OK


def load_demos(directory) -> tuple[dict, list[np.ndarray]]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    demos = []
    for entry in manifest["demos"]:
        rows = []
        with open(directory / entry["file"]) as fh:
            for t, line in enumerate(fh):
                rec = json.loads(line)
                if rec["t"] != t:
                    raise ValueError(f"{entry['file']}: expected t={t}, got {rec['t']}")
                rows.append(rec["obs"])
        demos.append(np.asarray(rows, dtype=np.float64))
    return manifest, demos


# ---------------------------------------------------------------- train

def cmd_train(args) -> int:
    cfg = _config(args)
    try:
        manifest, demos = load_demos(args.demos)
    except (KeyError, json.JSONDecodeError, ValueError) as e:
        raise OSError(f"unreadable demo set {args.demos}: {e}") from None
    dims = {d.shape[-1] for d in demos}
    if dims != {cfg.model.obs_dim}:
        raise CompatError(f"demo obs dims {sorted(dims)} do not match model.obs_dim {cfg.model.obs_dim}")
    meta = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.sha256(),
        "demo_manifest_sha256": _file_sha256(Path(args.demos) / "manifest.json"),
        "model": CELL_META,
    }
    ckpt = Path(args.out)
    inter_dir = ckpt.parent / (ckpt.stem + "_epochs") if cfg.training.checkpoint_every else None
    p, rep = train(demos, cfg.training, cfg.model.obs_dim, cfg.model.hidden_dim, inter_dir, meta)
    save_checkpoint(p, ckpt, meta)
    report = {
        "format_version": FORMAT_VERSION,
        "config_sha256": cfg.sha256(),
        "checkpoint": ckpt.name,
        "n_demos": len(demos),
        "epochs": cfg.training.epochs,
        "initial_loss": rep.epoch_losses[0],
        "final_loss": rep.final_loss,
        "epoch_losses": rep.epoch_losses,
        "intermediate_checkpoints": [Path(c).name for c in rep.intermediate_checkpoints],
    }
    report_path = Path(args.report) if args.report else ckpt.parent / "train_report.json"
    _write(report_path, _dump(report))
    print(f"trained {len(demos)} demos: loss {rep.epoch_losses[0]:.4f} -> {rep.final_loss:.4f} "
          f"({rep.wall_clock:.1f} s)")
    return EXIT_OK


# ---------------------------------------------------------------- run / eval

def _load_for_control(args):
    p, meta = load_checkpoint_with_meta(args.ckpt)
    # without --config, the configuration echoed in the checkpoint applies
    base = meta.get("config") if args.config is None else None
    cfg = load_config(args.config, args.set or (), base if isinstance(base, dict) else None)
    if p.obs_dim != door_env.OBS_DIM or p.obs_dim != cfg.model.obs_dim:
        raise CompatError(f"checkpoint obs_dim {p.obs_dim} incompatible with the environment "
                          f"({door_env.OBS_DIM})")
    if p.hidden_dim != cfg.model.hidden_dim:
        raise CompatError(f"checkpoint hidden_dim {p.hidden_dim} != model.hidden_dim {cfg.model.hidden_dim}")
    return p, cfg


def cmd_run(args) -> int:
    p, cfg = _load_for_control(args)
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    mode = DoorMode(args.mode)
    lines = [json.dumps({
        "type": "header",
        "format_version": FORMAT_VERSION,
        "config_sha256": cfg.sha256(),
        "checkpoint_sha256": _file_sha256(args.ckpt),
        "mode": mode.value,
        "variant": args.variant,
        "seed": args.seed,
        "episodes": args.episodes,
        "foresight": cfg.to_dict()["foresight"],
    }, sort_keys=True)]
    wins = 0
    for ep in range(args.episodes):
        records, success = run_episode(p, mode, args.variant, cfg.foresight, cfg.env, args.seed, ep)
        lines.extend(json.dumps(r, sort_keys=True) for r in records)
        lines.append(json.dumps({"type": "episode_end", "episode": ep, "variant": args.variant,
                                 "mode": mode.value, "success": success,
                                 "final_d": records[-1]["d"] if records else 0.0}, sort_keys=True))
        wins += success
    _write(args.log, "\n".join(lines) + "\n")
    print(f"{args.variant}/{mode.value}: {wins}/{args.episodes} successful episodes")
    return EXIT_OK


def evaluate(p, cfg: RunConfig, episodes: int, seeds, variants=VARIANTS) -> dict:
    """Success table over variants x modes x seeds plus modes-solved counts."""
    table = []
    solved: dict[str, dict[str, int]] = {v: {} for v in variants}
    mean_rate: dict[str, dict[str, float]] = {v: {} for v in variants}
    for variant in variants:
        for seed in seeds:
            rates = []
            for mode in MODES:
                wins = sum(run_episode(p, mode, variant, cfg.foresight, cfg.env, seed, ep)[1]
                           for ep in range(episodes))
                rate = wins / episodes
                rates.append(rate)
                table.append({"variant": variant, "mode": mode.value, "seed": seed,
                              "successes": wins, "episodes": episodes, "success_rate": rate})
            solved[variant][str(seed)] = sum(r >= 0.5 for r in rates)
            mean_rate[variant][str(seed)] = float(np.mean(rates))
    return {"table": table, "modes_solved": solved, "mean_success_rate": mean_rate}


def format_table(result: dict) -> str:
    rows = ["variant       seed  push   pull   slide  solved"]
    cells = {(r["variant"], r["seed"], r["mode"]): r["success_rate"] for r in result["table"]}
    for variant, per_seed in result["modes_solved"].items():
        for seed, n in per_seed.items():
            rates = [cells[(variant, int(seed), m.value)] for m in MODES]
            rows.append(f"{variant:<13} {seed:>4}  " + "  ".join(f"{r:5.2f}" for r in rates) + f"  {n}/3")
    return "\n".join(rows)


def cmd_eval(args) -> int:
    p, cfg = _load_for_control(args)
    episodes = args.episodes if args.episodes is not None else cfg.eval.episodes
    seeds = args.seeds if args.seeds is not None else list(cfg.eval.seeds)
    if episodes < 1 or not seeds:
        raise ConfigError("need episodes >= 1 and at least one seed")
    result = evaluate(p, cfg, episodes, seeds, cfg.eval.variants)
    report = {
        "format_version": FORMAT_VERSION,
        "config_sha256": cfg.sha256(),
        "checkpoint_sha256": _file_sha256(args.ckpt),
        "episodes": episodes,
        "seeds": list(seeds),
        "variants": list(cfg.eval.variants),
        "modes": [m.value for m in MODES],
        **result,
    }
    _write(args.report, _dump(report))
    print(format_table(result))
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def _analysis_inputs(args):
    p, _ = load_checkpoint_with_meta(args.ckpt)
    try:
        header, steps = analysis.read_log(args.log)
    except ValueError as e:
        raise OSError(str(e)) from None
    if not steps:
        raise OSError(f"log {args.log} has no step records")
    for r in steps:
        if len(r["h"]) != p.hidden_dim or len(r["obs"]) != p.obs_dim:
            raise CompatError(f"log states (H={len(r['h'])}, D={len(r['obs'])}) do not match checkpoint "
                              f"(H={p.hidden_dim}, D={p.obs_dim})")
    sha = (header or {}).get("config_sha256", "unknown")
    comment = f"# format_version={FORMAT_VERSION} config_sha256={sha}"
    return p, analysis.split_episodes(steps), comment


def cmd_lyapunov(args) -> int:
    p, episodes, comment = _analysis_inputs(args)
    profiles = [analysis.lyapunov_profile(recs, p, args.space) for recs in episodes]
    analysis.write_text(args.out, analysis.lyapunov_csv(profiles, comment))
    return EXIT_OK


def cmd_pca(args) -> int:
    _, episodes, comment = _analysis_inputs(args)
    points = np.vstack([analysis.hidden_points(recs, args.use_c) for recs in episodes])
    fit = analysis.pca_fit(points, 2)
    analysis.write_text(args.out, analysis.pca_csv(episodes, fit, comment, args.use_c))
    print("explained variance ratio: " + ", ".join(f"{r:.4f}" for r in fit.explained_variance_ratio))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="foresight-dpl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="run configuration JSON")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")

    sp = sub.add_parser("gen-demos", help="write scripted demonstrations")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--per-mode", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jitter", type=float, default=0.01, help="command jitter std")
    sp.set_defaults(func=cmd_gen_demos)

    sp = sub.add_parser("train", help="fit the model to a demo set")
    common(sp)
    sp.add_argument("--demos", required=True)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--report", help="train report path (default: train_report.json beside the checkpoint)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("run", help="closed-loop episodes with one variant")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--mode", required=True, choices=[m.value for m in MODES])
    sp.add_argument("--variant", required=True, choices=VARIANTS)
    sp.add_argument("--episodes", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--log", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("eval", help="success table over modes, variants and seeds")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--seeds", type=_seed_list)
    sp.add_argument("--report", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("analyze", help="Lyapunov or PCA analysis of a run log")
    asub = sp.add_subparsers(dest="analysis", required=True)
    lp = asub.add_parser("lyapunov")
    lp.add_argument("--space", choices=("hc", "h"), default="hc", help="state space of the Jacobian")
    lp.set_defaults(func=cmd_lyapunov)
    pp = asub.add_parser("pca")
    pp.add_argument("--use-c", action="store_true", help="fit on (h, c) instead of h")
    pp.set_defaults(func=cmd_pca)
    for x in (lp, pp):
        x.add_argument("--log", required=True)
        x.add_argument("--ckpt", required=True)
        x.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        code, msg = EXIT_CONFIG, f"config error: {e}"
    except (CheckpointVersionError, CheckpointShapeError, CompatError, analysis.LogMismatchError) as e:
        code, msg = EXIT_COMPAT, f"incompatible input: {e}"
    except (NonFiniteLossError, FloatingPointError) as e:
        code, msg = EXIT_NUMERIC, f"numeric failure: {e}"
    except (OSError, CheckpointError) as e:
        code, msg = EXIT_IO, f"I/O error: {e}"
    print(msg, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
