"""``rap-lab`` command line.

Verbs::

    rap-lab train  --config cfg.yaml [--seed-override K] [--out DIR]
    rap-lab eval   --checkpoint DIR --grid [--holdout] [--config cfg.yaml]
    rap-lab swap   --runs DIR [DIR ...] [--alpha A]
    rap-lab sweep  --config cfg.yaml --counts 1,2,3,5 [--seeds 0,1,2]
    rap-lab report --run DIR

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
``RAP_LAB_OUT`` overrides the output root.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .config import config_hash, load_config
from .envs import holdout_suite
from .errors import ConfigError, RapLabError
from .evaluation import EvalSpec, adversary_count_sweep, holdout_eval, swap_matrix, transfer_grid
from .experiment import (
    OUT_ENV,
    _now,
    expand_run_dirs,
    load_run_policies,
    resolve_output_dir,
    run_experiment,
    write_manifest,
)
from .reports import (
    read_grid_csv,
    read_swap_csv,
    read_sweep_csv,
    write_grid_csv,
    write_holdout_csv,
    write_swap_csv,
    write_sweep_csv,
)
from .svg import emit_heatmap_svg

log = logging.getLogger("raplab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg = replace(cfg, seed=args.seed_override, seeds=(args.seed_override,))
    result = run_experiment(cfg, args.out, progress=_progress if args.verbose else None)
    print(f"run written to {result.out_dir}")
    for seed, err in result.failures.items():
        print(f"FAILED {seed}: {err}", file=sys.stderr)
    return result.exit_code


def _progress(stats):
    log.info("iteration %d mean_reward %.3f", stats["iteration"], stats["mean_reward"])


def _eval_spec(args) -> EvalSpec:
    if args.config:
        spec = load_config(args.config).eval
    else:
        spec = EvalSpec()
    changes = {}
    if args.n_rollouts is not None:
        changes["n_rollouts"] = args.n_rollouts
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.grid_points is not None:
        changes["grid_points"] = args.grid_points
    return replace(spec, **changes) if changes else spec


def cmd_eval(args) -> int:
    if not (args.grid or args.holdout):
        raise ConfigError("eval needs at least one of --grid / --holdout")
    ckpt = Path(args.checkpoint)
    agent, _, meta = load_run_policies(ckpt)
    env_id = meta["env_id"]
    spec = _eval_spec(args)
    horizon = args.horizon
    out = Path(args.out) if args.out else ckpt / "eval"
    out.mkdir(parents=True, exist_ok=True)
    h = _digest({"agent": agent.digest(), "eval": spec.__dict__, "horizon": horizon})
    if args.grid:
        grid = transfer_grid(
            agent, env_id, spec.mass_range, spec.friction_range, spec.grid_points,
            spec.n_rollouts, spec.seed, horizon,
        )
        write_grid_csv(grid, out / "grid.csv", h, spec.seed)
        emit_heatmap_svg(grid, out / "heatmap.svg", title=f"{ckpt.name}: mean return")
        print(f"grid mean {grid.mean():.4f} -> {out / 'grid.csv'}")
    if args.holdout:
        suite = holdout_suite(env_id, spec.holdout_hi, spec.holdout_lo)
        res = holdout_eval(agent, env_id, suite, spec.n_rollouts, spec.seed, horizon)
        write_holdout_csv(res, out / "holdout.csv", h, spec.seed)
        print(f"holdout aggregate {res.aggregate:.4f} -> {out / 'holdout.csv'}")
    return EXIT_OK


def cmd_swap(args) -> int:
    dirs = expand_run_dirs(args.runs)
    agents, adv_sets, metas = [], [], []
    for d in dirs:
        agent, advs, meta = load_run_policies(d)
        agents.append(agent)
        adv_sets.append(advs)
        metas.append(meta)
    env_ids = {m["env_id"] for m in metas}
    if len(env_ids) != 1:
        raise ConfigError(f"runs mix environments: {sorted(env_ids)}")
    env_id = env_ids.pop()
    alpha = args.alpha if args.alpha is not None else metas[0].get("alpha", 1.0)
    labels = [f"{d.parent.name}/{d.name}" for d in dirs]
    matrix = swap_matrix(agents, adv_sets, env_id, alpha, args.n_rollouts, args.seed, labels, args.horizon)
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, ".")) / "swap"
    out.mkdir(parents=True, exist_ok=True)
    h = _digest({"agents": [a.digest() for a in agents], "alpha": alpha, "seed": args.seed,
                 "n_rollouts": args.n_rollouts})
    path = write_swap_csv(matrix, out / "swap.csv", h, args.seed)
    print(f"relative off-diagonal degradation {matrix.relative_degradation():.4f} -> {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seeds = args.seeds or list(cfg.seeds)
    cfg = replace(cfg, mode="rap", n=max(args.counts), seeds=tuple(seeds))
    base = cfg.train_config()
    out = resolve_output_dir(cfg, args.out)
    if not args.out:
        out = out.with_name(out.name + "_sweep")
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    rows = adversary_count_sweep(base, args.counts, seeds, cfg.eval)
    h = config_hash(cfg)
    write_sweep_csv(rows, out / "sweep.csv", h, ";".join(map(str, seeds)))
    failures = {f"{r.count}/{s}": "training failed" for r in rows for s in r.seeds_failed}
    write_manifest(cfg, out, {}, {}, started, failures)
    for r in rows:
        print(f"n={r.count}: grid {r.grid_mean:.3f}±{r.grid_std:.3f} "
              f"holdout {r.holdout_mean:.3f} steps {r.total_env_steps}")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_report(args) -> int:
    from .plotting import plot_swap_matrix, plot_sweep, plot_training_curves, plot_transfer_grid

    run = Path(args.run)
    figs = run / "figures"
    made = []
    if (run / "grid.csv").exists():
        _, grid = read_grid_csv(run / "grid.csv")
        made.append(plot_transfer_grid(grid, figs / "grid.png", title=run.name))
    if (run / "swap.csv").exists():
        _, matrix = read_swap_csv(run / "swap.csv")
        made.append(plot_swap_matrix(matrix, figs / "swap.png"))
    if (run / "sweep.csv").exists():
        made.append(plot_sweep(read_sweep_csv(run / "sweep.csv"), figs / "sweep.png"))
    curves = {}
    for d in sorted(run.glob("seed_*")):
        if (d / "curve.csv").exists():
            lines = (d / "curve.csv").read_text().splitlines()
            curves[d.name] = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    if curves:
        made.append(plot_training_curves(curves, figs / "curves.png", title=run.name))
    if not made:
        raise ConfigError(f"{run}: nothing to report (no grid/swap/sweep/curve CSVs)")
    for p in made:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rap-lab", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train every seed, evaluate, write the artifact tree")
    t.add_argument("--config", required=True)
    t.add_argument("--seed-override", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="transfer grid / holdout for one checkpoint directory")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--grid", action="store_true")
    e.add_argument("--holdout", action="store_true")
    e.add_argument("--config", help="take eval settings from this config")
    e.add_argument("--n-rollouts", type=int)
    e.add_argument("--grid-points", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--horizon", type=int, default=200)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("swap", help="adversary swap matrix across runs")
    s.add_argument("--runs", nargs="+", required=True)
    s.add_argument("--alpha", type=float)
    s.add_argument("--n-rollouts", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--horizon", type=int, default=200)
    s.add_argument("--out")
    s.set_defaults(func=cmd_swap)

    w = sub.add_parser("sweep", help="adversary-count sweep at a fixed step budget")
    w.add_argument("--config", required=True)
    w.add_argument("--counts", type=_int_list, default=[1, 2, 3, 5])
    w.add_argument("--seeds", type=_int_list)
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="render matplotlib figures from a run's CSVs")
    r.add_argument("--run", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RapLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
