"""Command-line front end: ``leoqoe train|compare|sweep-weights|validate-config``."""
from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click
import yaml
from pydantic import ValidationError

from . import allocator
from .config import ScenarioConfig, load_config
from .experiment import (
    build_problem,
    compare_variants,
    run_scenario,
    scenario_flows,
    sweep_variants,
    topologies,
)
from .results import summarize, write_fairness, write_json, write_manifest, write_scores, write_trace
from .routes import NoRouteError
from .simulator import RouteFault
from .traffic import stream_seed

log = logging.getLogger("leoqoe")


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            _fail(f"invalid config:\n{exc}")
        except (OSError, yaml.YAMLError) as exc:
            _fail(f"cannot read config: {exc}")
        except (NoRouteError, RouteFault) as exc:
            _fail(f"unroutable flow: {exc}")

    return wrapper


def _load(config: Path, seed: int | None, episodes: int | None, iterations: int | None) -> ScenarioConfig:
    cfg = load_config(config)
    over = {}
    if seed is not None:
        over["seed"] = seed
    if episodes is not None:
        over["allocator"] = {"episodes": episodes}
    if iterations is not None:
        over["simulator"] = {"iterations": iterations}
    return cfg.with_overrides(**over) if over else cfg


def _out_dir(cfg: ScenarioConfig, out: Path | None) -> Path:
    d = Path(out) if out is not None else Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _progress(it: int, k: int) -> None:
    log.info("iteration %d snapshot %d done", it, k)


common = [
    click.option("--config", "config", type=click.Path(path_type=Path), required=True, help="Scenario YAML."),
    click.option("--out", type=click.Path(path_type=Path), default=None, help="Output directory."),
    click.option("--seed", type=int, default=None, help="Override the scenario seed."),
    click.option("--episodes", type=click.IntRange(min=1), default=None, help="Override MCTS episodes."),
    click.option("--iterations", type=click.IntRange(min=1), default=None, help="Override iterations."),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """LEO network QoS allocation and scheduling experiments."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command("validate-config")
@click.option("--config", "config", type=click.Path(path_type=Path), required=True)
@_guarded
def validate_config(config: Path) -> None:
    """Check a scenario file, including routability of every flow."""
    cfg = load_config(config)
    topos = topologies(cfg)
    flows = scenario_flows(cfg, topos[0].regions, 0)
    for k, topo in enumerate(topos):
        build_problem(cfg, flows, topo, 0, k)
    click.echo(f"ok {cfg.config_hash()} flows={len(flows)} snapshots={len(topos)}")


@main.command()
@with_common
@_guarded
def train(config, out, seed, episodes, iterations) -> None:
    """Train the allocator on snapshot 0 and write the episode trace."""
    cfg = _load(config, seed, episodes, iterations)
    d = _out_dir(cfg, out)
    topo = topologies(cfg)[0]
    flows = scenario_flows(cfg, topo.regions, 0)
    problem = build_problem(cfg, flows, topo, 0, 0)
    mseed = int(stream_seed(cfg.seed, "mcts", 0, 0).generate_state(1)[0])
    res = allocator.train(problem, cfg.allocator.params(), mseed)
    write_trace(d / "training_trace.csv", res.trace)
    write_manifest(d, cfg, "train", ["training_trace.csv"])
    click.echo(f"best reward {res.best_reward:.6f} over {len(res.trace)} episodes -> {d}")


def _emit(cfg: ScenarioConfig, d: Path, result, command: str) -> None:
    files = ["qos_scores.csv", "fairness.csv", "summary.json"]
    write_scores(d / "qos_scores.csv", result.scores)
    write_fairness(d / "fairness.csv", result.fairness)
    write_json(d / "summary.json", summarize(result.scores, result.fairness))
    if (0, 0) in result.traces:
        write_trace(d / "training_trace.csv", result.traces[(0, 0)].trace)
        files.append("training_trace.csv")
    write_manifest(d, cfg, command, files)


@main.command()
@with_common
@click.option("--policies", default=None, help="Comma list of dsroq, dsroq_fifo, baseline.")
@_guarded
def compare(config, out, seed, episodes, iterations, policies) -> None:
    """Evaluate policies on identical flows and arrival seeds."""
    cfg = _load(config, seed, episodes, iterations)
    names = [p.strip() for p in policies.split(",")] if policies else list(cfg.simulator.policies)
    try:
        variants = compare_variants(cfg, names)
    except ValueError as exc:
        _fail(str(exc))
    d = _out_dir(cfg, out)
    result = run_scenario(cfg, variants, progress=_progress)
    _emit(cfg, d, result, "compare")
    click.echo(f"{len(result.scores)} score rows, {len(result.fairness)} fairness rows -> {d}")


@main.command("sweep-weights")
@with_common
@click.option("--ef-weights", default=None, help="Comma list of EF scheduling weights.")
@_guarded
def sweep_weights(config, out, seed, episodes, iterations, ef_weights) -> None:
    """Train once, then re-evaluate scheduling under several EF weights."""
    cfg = _load(config, seed, episodes, iterations)
    try:
        ws = [float(w) for w in ef_weights.split(",")] if ef_weights else list(cfg.simulator.ef_weights)
        variants = sweep_variants(ws)
    except ValueError as exc:
        _fail(str(exc))
    d = _out_dir(cfg, out)
    result = run_scenario(cfg, variants, progress=_progress)
    _emit(cfg, d, result, "sweep-weights")
    click.echo(f"{len(ws)} weights, {len(result.scores)} score rows -> {d}")


if __name__ == "__main__":  # pragma: no cover
    main()
