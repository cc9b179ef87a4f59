"""Train -> evaluate -> report orchestration, run manifests and artifact schemas.

Run directory layout::

    <out>/config.yaml          canonical config (what the manifest hash covers)
    <out>/manifest.json
    <out>/grid.csv             seed-pooled transfer grid
    <out>/holdout.csv          seed-pooled holdout table
    <out>/heatmap.svg
    <out>/swap.csv             adversarial modes with >= 2 seeds
    <out>/seed_<s>/agent.ckpt, adversary_<i>.ckpt, curve.csv, grid.csv, holdout.csv
"""
from __future__ import annotations

import datetime as _dt
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import yaml

from . import __version__
from .config import ExperimentConfig, canonical_yaml, config_hash, parse_config
from .envs import holdout_suite
from .evaluation import (
    EvalScore,
    HoldoutResult,
    TransferGrid,
    holdout_eval,
    swap_matrix,
    transfer_grid,
)
from .errors import RapLabError
from .nn import load_checkpoint
from .reports import write_grid_csv, write_holdout_csv, write_swap_csv
from .svg import emit_heatmap_svg
from .trainer import ADVERSARIAL_MODES, policy_filenames, train

log = logging.getLogger(__name__)

OUT_ENV = "RAP_LAB_OUT"


def resolve_output_dir(cfg: ExperimentConfig, override: Optional[str] = None) -> Path:
    if override:
        return Path(override)
    root = os.environ.get(OUT_ENV)
    if root:
        return Path(root) / cfg.name
    return Path(cfg.output_dir)


def seed_dir(out: Path, seed: int) -> Path:
    return out / f"seed_{seed}"


def has_swap(cfg: ExperimentConfig) -> bool:
    return cfg.mode in ADVERSARIAL_MODES and len(cfg.seeds) >= 2


def expected_artifacts(cfg: ExperimentConfig) -> List[str]:
    """Relative paths every successful run of this config must produce."""
    files = ["config.yaml", "manifest.json", "grid.csv", "holdout.csv", "heatmap.svg"]
    if has_swap(cfg):
        files.append("swap.csv")
    for s in cfg.seeds:
        d = f"seed_{s}"
        files += [f"{d}/{name}" for name in policy_filenames(cfg.n)]
        files += [f"{d}/curve.csv", f"{d}/grid.csv", f"{d}/holdout.csv"]
    return files


def missing_artifacts(cfg: ExperimentConfig, out) -> List[str]:
    out = Path(out)
    return [p for p in expected_artifacts(cfg) if not (out / p).is_file()]


# pooling across seeds ----------------------------------------------------------------
def pool_scores(scores: Sequence[EvalScore]) -> EvalScore:
    """Combine equal-size per-seed scores as if all returns were one sample."""
    means = [s.mean for s in scores]
    mu = sum(means) / len(means)
    var = sum(s.std**2 + (s.mean - mu) ** 2 for s in scores) / len(scores)
    return EvalScore(mu, math.sqrt(var), sum(s.n_rollouts for s in scores))


def pool_grids(grids: Sequence[TransferGrid]) -> TransferGrid:
    first = grids[0]
    scores = []
    for i in range(len(first.mass_values)):
        row = []
        for j in range(len(first.friction_values)):
            cells = [g.scores[i][j] for g in grids if g.scores[i][j] is not None]
            row.append(pool_scores(cells) if cells else None)
        scores.append(row)
    return TransferGrid(list(first.mass_values), list(first.friction_values), scores)


def pool_holdouts(results: Sequence[HoldoutResult]) -> HoldoutResult:
    first = results[0]
    scores = [pool_scores([r.scores[k] for r in results]) for k in range(len(first.names))]
    return HoldoutResult(list(first.names), list(first.params), scores)


# manifest ----------------------------------------------------------------------------
@dataclass
class RunManifest:
    config_hash: str
    seed: int
    seeds: List[int]
    tool_version: str
    started: str
    finished: str
    checkpoints: Dict[str, List[str]]
    artifacts: List[str]
    failures: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(
    cfg: ExperimentConfig,
    out,
    checkpoints: Dict[str, List[str]],
    timings: Dict[str, float],
    started: str,
    failures: Optional[Dict[str, str]] = None,
) -> RunManifest:
    """Persist the canonical config next to a manifest carrying its hash."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(canonical_yaml(cfg))
    artifacts = sorted(
        str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"
    )
    manifest = RunManifest(
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        seeds=list(cfg.seeds),
        tool_version=__version__,
        started=started,
        finished=_now(),
        checkpoints=checkpoints,
        artifacts=sorted(artifacts + ["manifest.json"]),
        failures=dict(failures or {}),
        timings=timings,
    )
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest


def verify_manifest(out) -> bool:
    """Re-canonicalise the stored config and compare its hash to the manifest's."""
    out = Path(out)
    manifest = json.loads((out / "manifest.json").read_text())
    try:
        cfg = parse_config(yaml.safe_load((out / "config.yaml").read_text()))
    except RapLabError:
        return False
    return config_hash(cfg) == manifest["config_hash"]


# orchestration ------------------------------------------------------------------------
@dataclass
class RunResult:
    out_dir: Path
    manifest: RunManifest
    failures: Dict[str, str]

    @property
    def exit_code(self) -> int:
        return 0 if not self.failures else 2


def _evaluate_seed(cfg: ExperimentConfig, sdir: Path, agent, h: str, seed: int):
    ev = cfg.eval
    grid = transfer_grid(
        agent, cfg.env_id, ev.mass_range, ev.friction_range, ev.grid_points,
        ev.n_rollouts, ev.seed, cfg.horizon,
    )
    suite = holdout_suite(cfg.env_id, ev.holdout_hi, ev.holdout_lo)
    hold = holdout_eval(agent, cfg.env_id, suite, ev.n_rollouts, ev.seed, cfg.horizon)
    write_grid_csv(grid, sdir / "grid.csv", h, seed)
    write_holdout_csv(hold, sdir / "holdout.csv", h, seed)
    return grid, hold


def run_experiment(
    cfg: ExperimentConfig, out_dir: Optional[str] = None, progress=None
) -> RunResult:
    """Train every seed, evaluate, and write the full artifact tree.

    A failing seed is recorded and skipped; the others still complete.
    """
    out = resolve_output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    h = config_hash(cfg)
    failures: Dict[str, str] = {}
    checkpoints: Dict[str, List[str]] = {}
    timings: Dict[str, float] = {}
    grids, holds, trained = [], [], []
    for seed in cfg.seeds:
        sdir = seed_dir(out, seed)
        t0 = time.perf_counter()
        try:
            tcfg = cfg.train_config(seed)
            state, _ = train(tcfg, sdir, progress=progress, config_hash=h)
            checkpoints[str(seed)] = [
                str((sdir / name).relative_to(out)) for name in policy_filenames(cfg.n)
            ]
            timings[f"train_seed_{seed}"] = round(time.perf_counter() - t0, 3)
            t1 = time.perf_counter()
            grid, hold = _evaluate_seed(cfg, sdir, state.agent, h, seed)
            timings[f"eval_seed_{seed}"] = round(time.perf_counter() - t1, 3)
        except RapLabError as exc:
            log.error("seed %d failed: %s", seed, exc)
            failures[str(seed)] = f"{type(exc).__name__}: {exc}"
            continue
        grids.append(grid)
        holds.append(hold)
        trained.append((seed, state))

    seeds_label = ";".join(str(s) for s, _ in trained)
    if grids:
        pooled = pool_grids(grids)
        write_grid_csv(pooled, out / "grid.csv", h, seeds_label)
        write_holdout_csv(pool_holdouts(holds), out / "holdout.csv", h, seeds_label)
        emit_heatmap_svg(pooled, out / "heatmap.svg", title=f"{cfg.name}: mean return")
    if has_swap(cfg) and len(trained) >= 2:
        t0 = time.perf_counter()
        try:
            matrix = swap_matrix(
                [st.agent for _, st in trained],
                [st.adversaries for _, st in trained],
                cfg.env_id,
                cfg.alpha,
                cfg.eval.n_rollouts,
                cfg.eval.seed,
                labels=[f"seed_{s}" for s, _ in trained],
                horizon=cfg.horizon,
            )
            write_swap_csv(matrix, out / "swap.csv", h, seeds_label)
        except RapLabError as exc:
            failures["swap"] = f"{type(exc).__name__}: {exc}"
        timings["swap"] = round(time.perf_counter() - t0, 3)
    manifest = write_manifest(cfg, out, checkpoints, timings, started, failures)
    return RunResult(out, manifest, failures)


def load_run_policies(path):
    """Load ``(agent, adversaries, meta)`` from a seed directory."""
    path = Path(path)
    agent, meta = load_checkpoint(path / "agent.ckpt")
    adversaries = []
    i = 1
    while (path / f"adversary_{i}.ckpt").exists():
        adversaries.append(load_checkpoint(path / f"adversary_{i}.ckpt")[0])
        i += 1
    return agent, adversaries, meta


def expand_run_dirs(paths: Sequence) -> List[Path]:
    """Seed directories named directly, or every ``seed_*`` inside a run directory."""
    out: List[Path] = []
    for p in map(Path, paths):
        if (p / "agent.ckpt").exists():
            out.append(p)
        else:
            found = sorted(
                (d for d in p.glob("seed_*") if (d / "agent.ckpt").exists()),
                key=lambda d: int(d.name.split("_", 1)[1]),
            )
            if not found:
                raise RapLabError(f"{p}: no agent.ckpt and no seed_* checkpoints")
            out += found
    return out
