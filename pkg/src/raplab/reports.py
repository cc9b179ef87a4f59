"""CSV persistence for evaluation results.

Every file starts with a ``# config_hash=... seed=...`` comment line. Floats
are written with ``repr`` so a read-back reproduces them exactly.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .evaluation import EvalScore, HoldoutResult, SwapMatrix, SweepRow, TransferGrid


def _header_line(config_hash: str, seed) -> str:
    return f"# config_hash={config_hash} seed={seed}\n"


def _write(path, comment: str, rows: Sequence[Sequence]) -> Path:
    buf = io.StringIO()
    buf.write(comment)
    csv.writer(buf, lineterminator="\n").writerows(rows)
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def _read(path) -> Tuple[dict, List[List[str]]]:
    lines = Path(path).read_text().splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
        lines = lines[1:]
    return meta, list(csv.reader(lines))


def _num(x) -> str:
    # float() first: numpy scalars repr as ``np.float64(...)``
    return repr(float(x))


def _cell(score: Optional[EvalScore]) -> str:
    return "nan;nan" if score is None else f"{_num(score.mean)};{_num(score.std)}"


def _parse_cell(text: str, n_rollouts: int) -> Optional[EvalScore]:
    m, s = (float(x) for x in text.split(";"))
    if m != m:  # nan marks a failed cell
        return None
    return EvalScore(m, s, n_rollouts)


def write_grid_csv(grid: TransferGrid, path, config_hash: str, seed) -> Path:
    """Header row holds friction values, first column mass values, cells ``mean;std``."""
    rows = [["mass\\friction", *map(_num, grid.friction_values)]]
    for m, row in zip(grid.mass_values, grid.scores):
        rows.append([_num(m), *map(_cell, row)])
    return _write(path, _header_line(config_hash, seed), rows)


def read_grid_csv(path, n_rollouts: int = 20) -> Tuple[dict, TransferGrid]:
    meta, rows = _read(path)
    frictions = [float(x) for x in rows[0][1:]]
    masses, scores = [], []
    for r in rows[1:]:
        masses.append(float(r[0]))
        scores.append([_parse_cell(c, n_rollouts) for c in r[1:]])
    return meta, TransferGrid(masses, frictions, scores)


def write_holdout_csv(result: HoldoutResult, path, config_hash: str, seed) -> Path:
    rows = [["test", "mean", "std", "mass_scale", "friction_scales"]]
    for name, p, s in zip(result.names, result.params, result.scores):
        rows.append([name, _num(s.mean), _num(s.std), _num(p.mass_scale),
                     ";".join(map(_num, p.friction_scales))])
    rows.append(["aggregate", _num(result.aggregate), "", "", ""])
    return _write(path, _header_line(config_hash, seed), rows)


def read_holdout_csv(path) -> Tuple[dict, List[Tuple[str, float, float]], float]:
    meta, rows = _read(path)
    tests, aggregate = [], float("nan")
    for r in rows[1:]:
        if r[0] == "aggregate":
            aggregate = float(r[1])
        else:
            tests.append((r[0], float(r[1]), float(r[2])))
    return meta, tests, aggregate


def write_swap_csv(matrix: SwapMatrix, path, config_hash: str, seed) -> Path:
    """Rows are agents, columns adversary sets; the comment records alpha."""
    comment = _header_line(config_hash, seed).rstrip("\n") + f" alpha={_num(matrix.alpha)}\n"
    rows = [["agent\\adversary", *matrix.labels]]
    for label, row in zip(matrix.labels, matrix.scores):
        rows.append([label, *map(_cell, row)])
    return _write(path, comment, rows)


def read_swap_csv(path, n_rollouts: int = 20) -> Tuple[dict, SwapMatrix]:
    meta, rows = _read(path)
    labels = rows[0][1:]
    scores = [[_parse_cell(c, n_rollouts) for c in r[1:]] for r in rows[1:]]
    return meta, SwapMatrix(labels, scores, float(meta.get("alpha", "nan")))


def write_sweep_csv(rows: Sequence[SweepRow], path, config_hash: str, seed) -> Path:
    out = [["count", "grid_mean", "grid_std", "holdout_mean", "holdout_std",
            "total_env_steps", "seeds_ok", "seeds_failed"]]
    for r in rows:
        out.append([
            r.count, _num(r.grid_mean), _num(r.grid_std), _num(r.holdout_mean),
            _num(r.holdout_std), r.total_env_steps,
            ";".join(map(str, r.seeds_ok)), ";".join(map(str, r.seeds_failed)),
        ])
    return _write(path, _header_line(config_hash, seed), out)


def read_sweep_csv(path) -> List[dict]:
    _, rows = _read(path)
    header = rows[0]
    return [dict(zip(header, r)) for r in rows[1:]]
