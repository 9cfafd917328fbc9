"""Experiment runner: synchronous generations over a worker pool.

Every round each agent trains t_ready steps and is evaluated; at the
round barrier the configured scheduler may rewrite agents, emitting the
events that describe what it did. Metrics and events are appended (and
flushed) per round, so a crashed run leaves a valid prefix on disk.

All streams derive from (master_seed, agent_id, kind), so results are
byte-identical across repeats and across worker counts. Trainables move
between workers as payloads; the per-round barrier runs single-threaded
in the parent process.

The runner owns the experiment directory layout:

    config.json     canonical config echo (seeds pinned to the run's seed)
    metrics.csv     round,agent_id,subpop_id,fitness,<one column per hyperparameter>
    events.jsonl    one EvolutionEvent per line, in application order
    checkpoints/    full engine state per round (when enabled)
    result.json     summary incl. wall-clock
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import EliteArchive, backtrack, rs_round, update_elites
from .core import (
    AgentState,
    ConfigError,
    HyperparamSpace,
    HyperparamVector,
    Population,
    SpaceEntry,
    sample_hyperparams,
)
from .events import EvolutionEvent, read_events, write_events
from .mfpbt import MfpbtConfig, mfpbt_round, subpop_due
from .pbt import pbt_evolution_step
from .seeding import agent_trainable_seed, seed_hierarchy
from .trainables import build_trainable

ALGORITHMS = ("rs", "pbt", "mfpbt", "pbt_bt")

CONFIG_VERSION = 1

_CONFIG_KEYS = {
    "version", "algorithm", "num_agents", "num_subpops", "deltas", "t_ready",
    "total_steps", "eval_repeats", "search_space", "trainable",
    "variance_exploitation", "symmetric_migration", "clamp_hyperparams",
    "seeds", "elite_capacity", "backtrack_period", "checkpoint_every",
    "workers", "out_dir",
}


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    num_agents: int
    t_ready: int
    total_steps: int
    search_space: HyperparamSpace
    trainable: dict
    num_subpops: int = 1
    deltas: tuple[int, ...] = (1,)
    eval_repeats: int = 1
    variance_exploitation: bool = False
    symmetric_migration: bool = False
    clamp_hyperparams: bool = False
    seeds: tuple[int, ...] = (0,)
    elite_capacity: int | None = None
    backtrack_period: int | None = None
    checkpoint_every: int = 0
    workers: int = 1
    out_dir: str | None = None

    @property
    def num_rounds(self) -> int:
        return self.total_steps // self.t_ready

    @property
    def subpop_size(self) -> int:
        return self.num_agents // self.num_subpops

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: unknown {self.algorithm!r}, expected one of {ALGORITHMS}")
        if self.num_agents < 4:
            raise ConfigError(f"num_agents: need at least 4, got {self.num_agents}")
        if self.num_subpops < 1:
            raise ConfigError(f"num_subpops: need at least 1, got {self.num_subpops}")
        if self.num_agents % self.num_subpops != 0:
            raise ConfigError(
                f"num_agents: {self.num_agents} not divisible by num_subpops {self.num_subpops}"
            )
        if self.subpop_size % 4 != 0:
            raise ConfigError(
                f"num_agents: sub-population size {self.subpop_size} must be a multiple of 4"
            )
        if len(self.deltas) != self.num_subpops:
            raise ConfigError(
                f"deltas: got {len(self.deltas)} periods for {self.num_subpops} sub-populations"
            )
        if list(self.deltas) != sorted(set(self.deltas)) or any(
            int(d) != d or d < 1 for d in self.deltas
        ):
            raise ConfigError(f"deltas: must be strictly increasing positive integers, got {self.deltas}")
        if self.algorithm == "mfpbt":
            MfpbtConfig(deltas=self.deltas)  # also checks deltas[0] == 1
        elif self.num_subpops != 1:
            raise ConfigError(f"num_subpops: {self.algorithm} runs a single population")
        if self.t_ready < 1:
            raise ConfigError(f"t_ready: need >= 1, got {self.t_ready}")
        if self.total_steps < self.t_ready or self.total_steps % self.t_ready != 0:
            raise ConfigError(
                f"total_steps: {self.total_steps} must be a positive multiple of t_ready {self.t_ready}"
            )
        if self.eval_repeats < 1:
            raise ConfigError(f"eval_repeats: need >= 1, got {self.eval_repeats}")
        if not self.seeds:
            raise ConfigError("seeds: need at least one master seed")
        if any(int(s) != s or s < 0 for s in self.seeds):
            raise ConfigError(f"seeds: must be non-negative integers, got {self.seeds}")
        if self.algorithm == "pbt_bt":
            if self.elite_capacity is None or self.elite_capacity < 1:
                raise ConfigError(f"elite_capacity: pbt_bt needs >= 1, got {self.elite_capacity}")
            if self.backtrack_period is None or self.backtrack_period < 1:
                raise ConfigError(f"backtrack_period: pbt_bt needs >= 1, got {self.backtrack_period}")
        else:
            if self.elite_capacity is not None or self.backtrack_period is not None:
                raise ConfigError("elite_capacity/backtrack_period: only valid for pbt_bt")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every: need >= 0, got {self.checkpoint_every}")
        if self.workers < 1:
            raise ConfigError(f"workers: need >= 1, got {self.workers}")
        build_trainable(self.trainable)  # raises on unknown kind or bad params

    def to_json_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "algorithm": self.algorithm,
            "num_agents": self.num_agents,
            "num_subpops": self.num_subpops,
            "deltas": list(self.deltas),
            "t_ready": self.t_ready,
            "total_steps": self.total_steps,
            "eval_repeats": self.eval_repeats,
            "search_space": [
                {"name": e.name, "low": e.low, "high": e.high, "scale": e.scale}
                for e in self.search_space.entries
            ],
            "trainable": {
                "kind": self.trainable.get("kind"),
                "params": dict(self.trainable.get("params") or {}),
            },
            "variance_exploitation": self.variance_exploitation,
            "symmetric_migration": self.symmetric_migration,
            "clamp_hyperparams": self.clamp_hyperparams,
            "seeds": list(self.seeds),
            "elite_capacity": self.elite_capacity,
            "backtrack_period": self.backtrack_period,
            "checkpoint_every": self.checkpoint_every,
            "workers": self.workers,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if data.get("version") != CONFIG_VERSION:
            raise ConfigError(f"version: expected {CONFIG_VERSION}, got {data.get('version')!r}")
        required = ("algorithm", "num_agents", "t_ready", "total_steps", "search_space", "trainable")
        missing = [k for k in required if k not in data]
        if missing:
            raise ConfigError(f"missing config keys: {missing}")
        entries = []
        for e in data["search_space"]:
            extra = set(e) - {"name", "low", "high", "scale"}
            if extra:
                raise ConfigError(f"search_space: unknown entry keys {sorted(extra)}")
            entries.append(
                SpaceEntry(
                    name=e["name"],
                    low=float(e["low"]),
                    high=float(e["high"]),
                    scale=e.get("scale", "log-uniform"),
                )
            )
        cfg = cls(
            algorithm=data["algorithm"],
            num_agents=int(data["num_agents"]),
            num_subpops=int(data.get("num_subpops", 1)),
            deltas=tuple(int(d) for d in data.get("deltas", [1])),
            t_ready=int(data["t_ready"]),
            total_steps=int(data["total_steps"]),
            eval_repeats=int(data.get("eval_repeats", 1)),
            search_space=HyperparamSpace(tuple(entries)),
            trainable=dict(data["trainable"]),
            variance_exploitation=bool(data.get("variance_exploitation", False)),
            symmetric_migration=bool(data.get("symmetric_migration", False)),
            clamp_hyperparams=bool(data.get("clamp_hyperparams", False)),
            seeds=tuple(int(s) for s in data.get("seeds", [0])),
            elite_capacity=data.get("elite_capacity"),
            backtrack_period=data.get("backtrack_period"),
            checkpoint_every=int(data.get("checkpoint_every", 0)),
            workers=int(data.get("workers", 1)),
            out_dir=data.get("out_dir"),
        )
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class MetricRow:
    round: int
    agent_id: int
    subpop_id: int
    fitness: float
    hyperparams: tuple[float, ...]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seed: int
    run_dir: str | None
    metrics: list[MetricRow]
    events: list[EvolutionEvent]
    initial_hyperparams: dict[int, HyperparamVector]
    wall_clock: float

    def best_by_round(self) -> list[float]:
        rounds = self.config.num_rounds
        best = [-math.inf] * rounds
        for row in self.metrics:
            idx = row.round - 1
            if row.fitness > best[idx]:
                best[idx] = row.fitness
        return best

    def final_best(self) -> float:
        return self.best_by_round()[-1]

    def best_agent_at(self, round_no: int) -> int:
        """Best snapshot fitness at a round; ties go to the lower agent id."""
        rows = [r for r in self.metrics if r.round == round_no]
        if not rows:
            raise ValueError(f"no metrics for round {round_no}")
        return min(rows, key=lambda r: (-r.fitness, r.agent_id)).agent_id


# ----------------------------------------------------------------- tasks

def _init_task(args: tuple) -> dict:
    trainable_spec, seed_int, hmap = args
    t = build_trainable(trainable_spec)
    t.init(seed_int, hmap)
    return t.export_payload()


def _train_eval_task(args: tuple) -> tuple[dict, float]:
    trainable_spec, payload, hmap, steps, eval_repeats = args
    t = build_trainable(trainable_spec)
    t.import_payload(payload)
    t.set_hyperparams(hmap)
    t.train(steps)
    return t.export_payload(), float(t.evaluate(eval_repeats))


def _eval_task(args: tuple) -> float:
    trainable_spec, payload, hmap, eval_repeats = args
    t = build_trainable(trainable_spec)
    t.import_payload(payload)
    t.set_hyperparams(hmap)
    return float(t.evaluate(eval_repeats))


class _TaskRunner:
    """Maps task functions over argument lists, inline or via processes."""

    def __init__(self, workers: int) -> None:
        self.workers = max(1, int(workers))
        self._pool: ProcessPoolExecutor | None = None

    def __enter__(self) -> _TaskRunner:
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def map(self, fn, args_list: Sequence[tuple]) -> list:
        if self._pool is None:
            return [fn(a) for a in args_list]
        return list(self._pool.map(fn, args_list, chunksize=1))


def evaluate_all(
    population: Population,
    trainable_spec: dict,
    hp_names: Sequence[str],
    eval_repeats: int,
    workers: int = 1,
) -> None:
    """Evaluate every agent's snapshot fitness from its current payload."""
    args = [
        (trainable_spec, a.weights, dict(zip(hp_names, a.hyperparams.values)), eval_repeats)
        for a in population.agents
    ]
    with _TaskRunner(workers) as tr:
        values = tr.map(_eval_task, args)
    for a, v in zip(population.agents, values):
        if not math.isfinite(v):
            raise ValueError(f"agent {a.agent_id} produced non-finite fitness {v!r}")
        a.snapshot_fitness = v


# ------------------------------------------------------------ persistence

def _fmt(x: float) -> str:
    return repr(float(x))


def _metrics_header(space: HyperparamSpace) -> str:
    return ",".join(["round", "agent_id", "subpop_id", "fitness", *space.names])


def _metric_line(row: MetricRow) -> str:
    parts = [str(row.round), str(row.agent_id), str(row.subpop_id), _fmt(row.fitness)]
    parts.extend(_fmt(v) for v in row.hyperparams)
    return ",".join(parts)


def read_metrics(path) -> list[MetricRow]:
    rows: list[MetricRow] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        hp_count = len(header) - 4
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append(
                MetricRow(
                    round=int(parts[0]),
                    agent_id=int(parts[1]),
                    subpop_id=int(parts[2]),
                    fitness=float(parts[3]),
                    hyperparams=tuple(float(v) for v in parts[4 : 4 + hp_count]),
                )
            )
    return rows


def metric_hyperparam_names(path) -> tuple[str, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return tuple(header[4:])


def load_run_config(run_dir) -> tuple[ExperimentConfig, int]:
    """Read a run directory's config echo; returns (config, master_seed)."""
    with open(Path(run_dir) / "config.json", "r", encoding="utf-8") as fh:
        data = json.load(fh)
    cfg = ExperimentConfig.from_json_dict(data)
    return cfg, cfg.seeds[0]


# ------------------------------------------------------------------ engine

class _Engine:
    def __init__(self, config: ExperimentConfig, seed: int) -> None:
        self.config = config
        self.seed = int(seed)
        self.space = config.search_space
        self.archive = (
            EliteArchive(config.elite_capacity) if config.algorithm == "pbt_bt" else None
        )
        self.evolve_rngs = {
            i: seed_hierarchy(self.seed, i, "evolve") for i in range(config.num_agents)
        }
        self.population: Population | None = None

    def init_population(self, runner: _TaskRunner) -> None:
        cfg = self.config
        hp_names = list(self.space.names)
        vectors = [
            sample_hyperparams(self.space, seed_hierarchy(self.seed, i, "init"))
            for i in range(cfg.num_agents)
        ]
        args = [
            (
                cfg.trainable,
                agent_trainable_seed(self.seed, i),
                dict(zip(hp_names, vectors[i].values)),
            )
            for i in range(cfg.num_agents)
        ]
        payloads = runner.map(_init_task, args)
        per = cfg.subpop_size
        agents = []
        for i in range(cfg.num_agents):
            payload = payloads[i]
            agents.append(
                AgentState(
                    agent_id=i,
                    subpop_id=i // per,
                    weights=payload,
                    hyperparams=vectors[i],
                    snapshot_fitness=None,
                    rng_stream=agent_trainable_seed(self.seed, i),
                )
            )
        self.population = Population(agents=agents, deltas=self.config.deltas)

    def train_eval_round(self, runner: _TaskRunner) -> None:
        cfg = self.config
        hp_names = self.space.names
        args = [
            (
                cfg.trainable,
                a.weights,
                dict(zip(hp_names, a.hyperparams.values)),
                cfg.t_ready,
                cfg.eval_repeats,
            )
            for a in self.population.agents
        ]
        results = runner.map(_train_eval_task, args)
        for a, (payload, fitness) in zip(self.population.agents, results):
            if not math.isfinite(fitness):
                raise ValueError(f"agent {a.agent_id} produced non-finite fitness {fitness!r}")
            a.weights = payload
            a.snapshot_fitness = fitness

    def barrier_events(self, round_no: int) -> list[EvolutionEvent]:
        cfg = self.config
        pop = self.population
        if cfg.algorithm == "rs":
            return rs_round(pop, round_no)
        if cfg.algorithm == "pbt":
            if not subpop_due(round_no, cfg.deltas[0]):
                return []
            return pbt_evolution_step(
                pop.agents,
                self.evolve_rngs,
                round_no,
                0,
                variance_exploitation=cfg.variance_exploitation,
                space=self.space,
                clamp=cfg.clamp_hyperparams,
            )
        if cfg.algorithm == "mfpbt":
            mconf = MfpbtConfig(
                deltas=cfg.deltas,
                symmetric_migration=cfg.symmetric_migration,
                variance_exploitation=cfg.variance_exploitation,
                clamp_hyperparams=cfg.clamp_hyperparams,
            )
            return mfpbt_round(pop, round_no, self.evolve_rngs, mconf, self.space)
        if cfg.algorithm == "pbt_bt":
            update_elites(self.archive, pop, round_no)
            if subpop_due(round_no, cfg.backtrack_period):
                # Backtracking replaces this round's exploitation step.
                return backtrack(pop, self.archive, round_no)
            if not subpop_due(round_no, cfg.deltas[0]):
                return []
            return pbt_evolution_step(
                pop.agents,
                self.evolve_rngs,
                round_no,
                0,
                variance_exploitation=cfg.variance_exploitation,
                space=self.space,
                clamp=cfg.clamp_hyperparams,
            )
        raise ConfigError(f"algorithm: unknown {cfg.algorithm!r}")

    # ------------------------------------------------------- checkpointing

    def checkpoint_dict(self, round_no: int) -> dict:
        agents = []
        for a in self.population.agents:
            payload = dict(a.weights)
            agents.append(
                {
                    "agent_id": a.agent_id,
                    "subpop_id": a.subpop_id,
                    "hyperparams": list(a.hyperparams.values),
                    "fitness": a.snapshot_fitness,
                    "payload": payload,
                    "evolve_state": self.evolve_rngs[a.agent_id].bit_generator.state,
                }
            )
        return {
            "round": round_no,
            "master_seed": self.seed,
            "agents": agents,
            "archive": self.archive.to_json_dict() if self.archive is not None else None,
        }

    def restore_checkpoint(self, data: dict) -> int:
        cfg = self.config
        per = cfg.subpop_size
        agents = []
        for rec in data["agents"]:
            payload = dict(rec["payload"])
            i = int(rec["agent_id"])
            agents.append(
                AgentState(
                    agent_id=i,
                    subpop_id=i // per,
                    weights=payload,
                    hyperparams=HyperparamVector(tuple(float(v) for v in rec["hyperparams"])),
                    snapshot_fitness=rec["fitness"],
                    rng_stream=agent_trainable_seed(self.seed, i),
                )
            )
            gen = np.random.default_rng()
            gen.bit_generator.state = rec["evolve_state"]
            self.evolve_rngs[i] = gen
        self.population = Population(agents=agents, deltas=cfg.deltas)
        if data.get("archive") is not None:
            self.archive = EliteArchive.from_json_dict(data["archive"])
        return int(data["round"])


def _truncate_log(path: Path, keep_round: int, is_csv: bool) -> None:
    if not path.exists():
        return
    kept = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    for idx, line in enumerate(lines):
        if is_csv and idx == 0:
            kept.append(line)
            continue
        s = line.strip()
        if not s:
            continue
        rnd = int(s.split(",", 1)[0]) if is_csv else json.loads(s)["round"]
        if rnd <= keep_round:
            kept.append(line)
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(kept)


def run_experiment(
    config: ExperimentConfig,
    seed: int | None = None,
    out_dir: str | os.PathLike | None = None,
    *,
    workers: int | None = None,
    stop_after_round: int | None = None,
    resume: bool = False,
) -> ExperimentResult:
    """Run one seed of one configured experiment.

    With out_dir=None the run happens entirely in memory (no files).
    resume=True picks up from the latest checkpoint in out_dir and
    truncates any partial rows written after it.
    """
    config.validate()
    seed = config.seeds[0] if seed is None else int(seed)
    if seed < 0:
        raise ConfigError(f"seeds: master seed must be non-negative, got {seed}")
    workers = config.workers if workers is None else max(1, int(workers))
    start = time.monotonic()

    run_dir = Path(out_dir) if out_dir is not None else None
    metrics_path = events_path = ckpt_dir = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = run_dir / "metrics.csv"
        events_path = run_dir / "events.jsonl"
        ckpt_dir = run_dir / "checkpoints"

    engine = _Engine(config, seed)
    start_round = 0
    metrics: list[MetricRow] = []
    all_events: list[EvolutionEvent] = []

    with _TaskRunner(workers) as tr:
        if resume:
            if run_dir is None or ckpt_dir is None or not ckpt_dir.exists():
                raise ConfigError("resume requires an out_dir with checkpoints")
            snaps = sorted(ckpt_dir.glob("round_*.json"))
            if not snaps:
                raise ConfigError("resume requested but no checkpoint present")
            with open(snaps[-1], "r", encoding="utf-8") as fh:
                start_round = engine.restore_checkpoint(json.load(fh))
            _truncate_log(metrics_path, start_round, is_csv=True)
            _truncate_log(events_path, start_round, is_csv=False)
            metrics = read_metrics(metrics_path)
            all_events = read_events(events_path)
        else:
            engine.init_population(tr)
            if run_dir is not None:
                echo = config.to_json_dict()
                echo["seeds"] = [seed]
                with open(run_dir / "config.json", "w", encoding="utf-8") as fh:
                    json.dump(echo, fh, indent=2, sort_keys=True)
                    fh.write("\n")
                with open(metrics_path, "w", encoding="utf-8") as fh:
                    fh.write(_metrics_header(config.search_space) + "\n")
                with open(events_path, "w", encoding="utf-8") as fh:
                    pass
                if config.checkpoint_every > 0:
                    ckpt_dir.mkdir(exist_ok=True)

        # Initial vectors are a pure function of the seed; recompute so the
        # resume path reports them identically.
        initial_h = {
            i: sample_hyperparams(config.search_space, seed_hierarchy(seed, i, "init"))
            for i in range(config.num_agents)
        }

        last_round = config.num_rounds if stop_after_round is None else min(
            stop_after_round, config.num_rounds
        )
        for round_no in range(start_round + 1, last_round + 1):
            engine.train_eval_round(tr)
            round_rows = [
                MetricRow(
                    round=round_no,
                    agent_id=a.agent_id,
                    subpop_id=a.subpop_id,
                    fitness=a.snapshot_fitness,
                    hyperparams=a.hyperparams.values,
                )
                for a in engine.population.agents
            ]
            metrics.extend(round_rows)
            if metrics_path is not None:
                with open(metrics_path, "a", encoding="utf-8") as fh:
                    for row in round_rows:
                        fh.write(_metric_line(row) + "\n")
                    fh.flush()
            events = engine.barrier_events(round_no)
            all_events.extend(events)
            if events_path is not None and events:
                write_events(events_path, events, append=True)
            engine.population.round_counter = round_no
            if (
                ckpt_dir is not None
                and config.checkpoint_every > 0
                and round_no % config.checkpoint_every == 0
            ):
                with open(ckpt_dir / f"round_{round_no:06d}.json", "w", encoding="utf-8") as fh:
                    json.dump(engine.checkpoint_dict(round_no), fh)

    wall = time.monotonic() - start
    result = ExperimentResult(
        config=config,
        seed=seed,
        run_dir=str(run_dir) if run_dir is not None else None,
        metrics=metrics,
        events=all_events,
        initial_hyperparams=initial_h,
        wall_clock=wall,
    )
    if run_dir is not None and stop_after_round is None:
        counts: dict[str, int] = {}
        for ev in all_events:
            counts[ev.kind] = counts.get(ev.kind, 0) + 1
        summary = {
            "version": 1,
            "algorithm": config.algorithm,
            "master_seed": seed,
            "rounds": config.num_rounds,
            "final_best_fitness": result.final_best(),
            "final_best_agent_id": result.best_agent_at(config.num_rounds),
            "event_counts": counts,
            "wall_clock_seconds": wall,
        }
        with open(run_dir / "result.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result
