"""CSV/JSON result bundle.

Every writer emits rows in a fixed order with fixed headers, so the same
scenario and seed always produce byte-identical files.  Only
``manifest.json`` carries a wall-clock timestamp, and it is kept out of the
output hash.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
from dataclasses import astuple, fields
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .allocator import EpisodeRecord
from .config import ScenarioConfig
from .experiment import FairnessRow, ScoreRow

SCHEMA_VERSION = "1"
ROLLING_WINDOW = 500

TRACE_HEADER = (
    "episode", "reward", "constraint_violation", "epsilon", "objective",
    "running_max_reward", "rolling_reward", "rolling_constraint_violation",
)
SCORE_HEADER = tuple(f.name for f in fields(ScoreRow))
FAIRNESS_HEADER = tuple(f.name for f in fields(FairnessRow))
CLASS_ORDER = ("EF", "AF", "BE")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def rolling_mean(values: Sequence[float], window: int = ROLLING_WINDOW) -> list[float]:
    """Trailing mean over up to ``window`` values (shorter at the start)."""
    out, acc = [], 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def trace_rows(trace: Sequence[EpisodeRecord], window: int = ROLLING_WINDOW) -> list[tuple]:
    rewards = [r.reward for r in trace]
    viol = [r.constraint_violation for r in trace]
    rr, rc = rolling_mean(rewards, window), rolling_mean(viol, window)
    best = np.maximum.accumulate(rewards).tolist() if rewards else []
    return [
        (r.episode, r.reward, r.constraint_violation, r.epsilon, r.objective, best[i], rr[i], rc[i])
        for i, r in enumerate(trace)
    ]


def write_trace(path: Path, trace: Sequence[EpisodeRecord], window: int = ROLLING_WINDOW) -> None:
    _write_csv(path, TRACE_HEADER, trace_rows(trace, window))


def write_scores(path: Path, rows: Sequence[ScoreRow]) -> None:
    _write_csv(path, SCORE_HEADER, (astuple(r) for r in rows))


def write_fairness(path: Path, rows: Sequence[FairnessRow]) -> None:
    _write_csv(path, FAIRNESS_HEADER, (astuple(r) for r in rows))


def _describe(values: Sequence[float]) -> dict:
    a = np.asarray(values, dtype=float)
    q1, med, q3 = (float(x) for x in np.percentile(a, [25, 50, 75]))
    iqr = q3 - q1
    outside = (a < q1 - 1.5 * iqr) | (a > q3 + 1.5 * iqr)
    return {
        "count": int(a.size),
        "median": med,
        "q1": q1,
        "q3": q3,
        "mean": float(a.mean()),
        "outlier_fraction": float(outside.mean()),
    }


def summarize(scores: Sequence[ScoreRow], fairness: Sequence[FairnessRow]) -> dict:
    """Per (policy, EF weight) class statistics of composite scores plus mean fairness."""
    groups: dict[tuple[str, float], dict[str, list[float]]] = {}
    for r in scores:
        groups.setdefault((r.policy, r.ef_weight), {}).setdefault(r.traffic_class, []).append(r.omega_total)
    fair: dict[tuple[str, float], list[float]] = {}
    for r in fairness:
        fair.setdefault((r.policy, r.ef_weight), []).append(r.fairness_index)
    out = []
    for key in sorted(groups):
        policy, ef_w = key
        classes = {c: _describe(groups[key][c]) for c in CLASS_ORDER if c in groups[key]}
        f = fair.get(key, [])
        out.append(
            {
                "policy": policy,
                "ef_weight": ef_w,
                "classes": classes,
                "fairness_mean": float(np.mean(f)) if f else None,
                "fairness_samples": len(f),
            }
        )
    return {"schema_version": SCHEMA_VERSION, "groups": out}


def write_json(path: Path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "networkx", "pydantic", "PyYAML", "click"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, cfg: ScenarioConfig, command: str, files: Sequence[str]) -> None:
    """Config hash, seed, versions and output digests; timestamp stays out of the hash."""
    digests = {name: file_digest(out_dir / name) for name in sorted(files)}
    body = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": cfg.config_hash(),
        "config": json.loads(cfg.canonical_json()),
        "seed": cfg.seed,
        "headers": {
            "training_trace.csv": list(TRACE_HEADER),
            "qos_scores.csv": list(SCORE_HEADER),
            "fairness.csv": list(FAIRNESS_HEADER),
        },
        "outputs": digests,
        "versions": _versions(),
        "argv": sys.argv[1:],
    }
    body["output_hash"] = hashlib.sha256(
        json.dumps(digests, sort_keys=True).encode()
    ).hexdigest()
    body["created_utc"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    write_json(out_dir / "manifest.json", body)
