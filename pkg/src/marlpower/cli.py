"""Command line entry point: ``marlpower {train,test,bench,oracle} [flags]``.

Settings are resolved as defaults < ``--config`` JSON file < flags. Flags use
the RunConfig field names, with either hyphens or underscores.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .baselines import fp_solve, grid_oracle, wmmse_solve
from .config import BASELINES, RunConfig
from .experiment import run_experiment, train_or_load
from .simcore import Network

log = logging.getLogger("marlpower")


def parse_doppler(text: str):
    """Float in Hz, ``uncorrelated`` (independent slots) or ``random``."""
    t = text.strip().lower()
    if t in ("uncorrelated", "inf"):
        return math.inf
    if t == "random":
        return "random"
    return float(text)


def _flag_spec(name: str, ftype: str) -> dict:
    if name == "f_d":
        return {"type": parse_doppler}
    if name == "links_per_cell":
        return {"type": int, "nargs": "+"}
    if ftype == "bool":
        return {"action": argparse.BooleanOptionalAction}
    if ftype.startswith("list[int]"):
        return {"type": int, "nargs": "+"}
    if ftype.startswith("list[str]"):
        return {"type": str, "nargs": "+"}
    base = ftype.split("|")[0].strip()
    return {"type": {"int": int, "float": float}.get(base, str)}


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON file with RunConfig fields")
    group = parser.add_argument_group("run configuration")
    for f in fields(RunConfig):
        opts = {f"--{f.name.replace('_', '-')}", f"--{f.name}"}
        group.add_argument(*sorted(opts), dest=f.name, default=argparse.SUPPRESS,
                           **_flag_spec(f.name, str(f.type)))


def resolve_config(args: argparse.Namespace, **forced) -> tuple[RunConfig, dict]:
    """RunConfig from defaults, an optional JSON file and explicit flags."""
    base = {}
    if args.config is not None:
        with open(args.config) as fh:
            base = json.load(fh)
    names = {f.name for f in fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    lpc = overrides.get("links_per_cell")
    if isinstance(lpc, list) and len(lpc) == 1:
        overrides["links_per_cell"] = lpc[0]
    merged = {**base, **overrides, **forced}
    return RunConfig.from_dict(merged), overrides


def cmd_train(config: RunConfig, args) -> dict:
    out = {}
    for seed in config.seeds:
        run_dir = Path(config.out_dir) / f"seed_{seed}" / "dqn-matched"
        train_or_load(config, seed, run_dir, reuse=not args.retrain, progress_every=args.progress)
        out[str(seed)] = str(run_dir / "checkpoint.json")
        print(f"seed {seed}: {out[str(seed)]}")
    return out


def cmd_oracle(config: RunConfig, args) -> dict:
    """Grid search against FP and WMMSE on the first slot of each seed's network."""
    out = {}
    for seed in config.seeds:
        sc = config.sim_config(seed)
        st = Network(sc).reset()
        w = np.ones(st.n)
        grid = grid_oracle(st.g_now, w, sc.P_max, sc.sigma2, config.levels)
        rng = np.random.default_rng(seed)
        kw = dict(tol=config.solver_tol, max_iter=config.solver_max_iter)
        fp = fp_solve(st.g_now, w, sc.P_max, sc.sigma2, rng=rng, **kw)
        wm = wmmse_solve(st.g_now, w, sc.P_max, sc.sigma2, **kw)
        out[str(seed)] = {
            "grid": grid.objective, "fp": fp.objective, "wmmse": wm.objective,
            "fp_ratio": fp.objective / grid.objective, "wmmse_ratio": wm.objective / grid.objective,
            "grid_p": grid.p.tolist(), "fp_p": fp.p.tolist(), "wmmse_p": wm.p.tolist(),
        }
        print(f"seed {seed}: grid {grid.objective:.4f} fp {fp.objective:.4f} wmmse {wm.objective:.4f}")
    path = Path(config.out_dir) / "oracle.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"config": config.to_dict(), "results": out}, fh, indent=1, sort_keys=True)
    return out


def _print_summary(summary: dict) -> None:
    for name, agg in summary["allocators"].items():
        line = f"{name:14s} {agg['average_mean']:.4f} +- {agg['average_std']:.4f}"
        if "sum_log_rate_end_mean" in agg:
            line += f"   sum-log {agg['sum_log_rate_end_mean']:.3f}"
        print(line)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marlpower", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)
    helps = {
        "train": "train the shared Q-network on each seed and save checkpoints",
        "test": "train (if needed) and test every selected allocator, write summary",
        "bench": "run the model-based and trivial baselines only",
        "oracle": "compare FP and WMMSE with exhaustive grid search on small networks",
    }
    for verb, text in helps.items():
        p = sub.add_parser(verb, help=text, description=text)
        add_config_flags(p)
        if verb in ("train", "test"):
            p.add_argument("--retrain", action="store_true", help="ignore matching checkpoints on disk")
            p.add_argument("--progress", type=int, default=0, metavar="SLOTS",
                           help="log the training rate every SLOTS slots")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "train":
            config, _ = resolve_config(args, allocators=["dqn-matched"], checkpoint=None)
            cmd_train(config, args)
        elif args.verb == "oracle":
            config, _ = resolve_config(args)
            cmd_oracle(config, args)
        else:
            forced = {}
            if args.verb == "bench":
                given = getattr(args, "allocators", None) or list(BASELINES)
                forced["allocators"] = [a for a in given if a in BASELINES]
            config, overrides = resolve_config(args, **forced)
            summary = run_experiment(config, overrides, reuse=not getattr(args, "retrain", False),
                                     progress_every=getattr(args, "progress", 0))
            _print_summary(summary)
    except (OSError, ValueError, KeyError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"marlpower: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
