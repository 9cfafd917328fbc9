"""Lineage reconstruction and replay from the event log.

Given the events a run emitted, walk backwards from (agent, round) to
recover the chain of payload transfers that produced the snapshot the
runner evaluated at that round (after training, before that round's
barrier). The result is a schedule: an ordered list of segments, each
naming the agent that carried the payload, the hyperparameters it
trained under, and the round interval (start_round, end_round] it
covers. Elite restores add untrained dwell segments for the interval a
payload sat in the archive.

Replaying a schedule from nothing but the master seed reproduces the
final payload and fitness bit for bit, because

  * a train step consumes a fixed number of draws, so a carrier's
    private stream can be fast-forwarded to any round without training;
  * transfers move weights only, so each carrier keeps its own stream;
  * evaluation draws never touch the training stream.

The replay advances and trains in per-round chunks so the draw order
inside each carrier's stream matches the original run exactly.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .events import (
    ELITE_RESTORE,
    SOURCED_KINDS,
    SURVIVE,
    EvolutionEvent,
    read_events,
)
from .runner import load_run_config, read_metrics
from .seeding import agent_trainable_seed
from .trainables import build_trainable, transfer_weights


class LineageError(ValueError):
    """The event log cannot be a record of a well-formed run."""


@dataclass(frozen=True)
class ScheduleSegment:
    """One stretch of a payload's history.

    Covers training rounds start_round+1 .. end_round, all carried out by
    `agent_id` (a member of sub-population `subpop_id`) under
    `hyperparams`. Untrained segments (trained=False) are archive dwells:
    the payload sat frozen over the interval. `kind` names the event that
    put the payload into this segment's hands ("init" for the original
    initialization); the hyperparams field always records what the
    carrier actually trained with, so weights-only transfers keep both
    attributions visible (payload provenance via agent_id, schedule via
    hyperparams).
    """

    start_round: int
    end_round: int
    agent_id: int
    subpop_id: int
    hyperparams: tuple[float, ...] | None
    trained: bool
    kind: str

    @property
    def num_rounds(self) -> int:
        return self.end_round - self.start_round


def validate_event_log(events: Sequence[EvolutionEvent], num_agents: int | None = None) -> None:
    """Structural checks; raises LineageError naming the first broken round."""
    prev_round = 0
    changed_at: set[tuple[int, int]] = set()
    for ev in events:
        r = ev.round
        if r < 1:
            raise LineageError(f"event log broken at round {r}: rounds start at 1")
        if r < prev_round:
            raise LineageError(
                f"event log broken at round {r}: rounds decrease after {prev_round}"
            )
        prev_round = r
        ids = [ev.target_agent_id] + ([ev.source_agent_id] if ev.source_agent_id is not None else [])
        for aid in ids:
            if aid < 0 or (num_agents is not None and aid >= num_agents):
                raise LineageError(f"event log broken at round {r}: agent id {aid} out of range")
        if ev.kind in SOURCED_KINDS and ev.kind != ELITE_RESTORE:
            if ev.source_agent_id == ev.target_agent_id:
                raise LineageError(
                    f"event log broken at round {r}: agent {ev.target_agent_id} clones itself"
                )
            if ev.source_round is not None:
                raise LineageError(
                    f"event log broken at round {r}: {ev.kind} carries a source round"
                )
        if ev.kind == ELITE_RESTORE:
            if ev.source_round is None or not 1 <= ev.source_round <= r:
                raise LineageError(
                    f"event log broken at round {r}: elite restore from round {ev.source_round}"
                )
        if ev.kind != SURVIVE:
            key = (r, ev.target_agent_id)
            if key in changed_at:
                raise LineageError(
                    f"event log broken at round {r}: agent {ev.target_agent_id} rewritten twice"
                )
            changed_at.add(key)
        if not math.isfinite(ev.fitness_snapshot):
            raise LineageError(
                f"event log broken at round {r}: non-finite fitness snapshot"
            )


def reconstruct_schedule(
    events: Sequence[EvolutionEvent],
    agent_id: int,
    final_round: int,
    initial_hyperparams: Mapping[int, Sequence[float]],
    subpop_size: int | None = None,
) -> list[ScheduleSegment]:
    """Provenance of the payload agent_id held when evaluated at final_round.

    The target snapshot is the post-training, pre-barrier state of that
    round, i.e. exactly what metrics.csv records there. subpop_size tags
    each segment with its carrier's sub-population (0 when omitted).
    """
    if final_round < 1:
        raise LineageError(f"final_round must be >= 1, got {final_round}")
    validate_event_log(events)

    def subpop_of(aid: int) -> int:
        return aid // subpop_size if subpop_size else 0

    # Per-target indices of payload-changing events, keyed by file position.
    by_target: dict[int, list[tuple[int, int, EvolutionEvent]]] = {}
    for seq, ev in enumerate(events):
        if ev.kind != SURVIVE:
            by_target.setdefault(ev.target_agent_id, []).append((ev.round, seq, ev))

    def last_before(aid: int, cursor: tuple[int, int]) -> tuple[int, int, EvolutionEvent] | None:
        recs = by_target.get(aid)
        if not recs:
            return None
        keys = [(r, s) for r, s, _ in recs]
        idx = bisect_left(keys, cursor)
        return recs[idx - 1] if idx > 0 else None

    segments: list[ScheduleSegment] = []
    cur = agent_id
    cursor = (final_round, -1)  # exclude all of final_round's own events
    upper = final_round
    hops = 0
    limit = len(events) + 2
    while True:
        hops += 1
        if hops > limit:
            raise LineageError("event log broken: lineage walk does not terminate")
        found = last_before(cur, cursor)
        if found is None:
            if cur not in initial_hyperparams:
                raise LineageError(f"no initial hyperparameters for root agent {cur}")
            segments.append(
                ScheduleSegment(
                    start_round=0,
                    end_round=upper,
                    agent_id=cur,
                    subpop_id=subpop_of(cur),
                    hyperparams=tuple(float(v) for v in initial_hyperparams[cur]),
                    trained=True,
                    kind="init",
                )
            )
            break
        e, seq, ev = found
        if upper > e:
            segments.append(
                ScheduleSegment(
                    start_round=e,
                    end_round=upper,
                    agent_id=cur,
                    subpop_id=subpop_of(cur),
                    hyperparams=ev.hyperparams_after,
                    trained=True,
                    kind=ev.kind,
                )
            )
        if ev.kind == ELITE_RESTORE:
            sr = ev.source_round
            if sr < e:
                segments.append(
                    ScheduleSegment(
                        start_round=sr,
                        end_round=e,
                        agent_id=ev.source_agent_id,
                        subpop_id=subpop_of(ev.source_agent_id),
                        hyperparams=None,
                        trained=False,
                        kind="archive_dwell",
                    )
                )
            cur = ev.source_agent_id
            cursor = (sr, -1)  # snapshot was taken before round sr's events
            upper = sr
        else:
            cur = ev.source_agent_id
            cursor = (e, seq)  # live state: later same-round events excluded
            upper = e
    segments.reverse()
    return segments


def replay_schedule(
    segments: Sequence[ScheduleSegment],
    trainable_spec: Mapping,
    master_seed: int,
    t_ready: int,
    hp_names: Sequence[str],
    eval_repeats: int = 1,
    expected_fitness: Mapping[tuple[int, int], float] | None = None,
) -> tuple[dict, float]:
    """Re-run a schedule from the master seed; returns (payload, fitness).

    The stream advance and the training both happen in per-round chunks
    so draw order matches the original run draw for draw. When
    expected_fitness maps (round, carrier agent_id) to logged values,
    every trained round is cross-checked and the first divergence raises.
    """
    if not segments:
        raise LineageError("empty schedule")
    payload: dict | None = None
    trainable = None
    for seg in segments:
        if not seg.trained:
            continue  # archive dwell: the payload is carried over unchanged
        if seg.hyperparams is None:
            raise LineageError(f"trained segment {seg} lacks hyperparameters")
        hmap = dict(zip(hp_names, seg.hyperparams))
        trainable = build_trainable(trainable_spec)
        trainable.init(agent_trainable_seed(master_seed, seg.agent_id), hmap)
        for _ in range(seg.start_round):
            trainable.advance_rng(t_ready)
        if payload is not None:
            trainable.import_payload(transfer_weights(payload, trainable.export_payload()))
        for r in range(seg.start_round + 1, seg.end_round + 1):
            trainable.train(t_ready)
            if expected_fitness is not None:
                want = expected_fitness.get((r, seg.agent_id))
                if want is not None:
                    got = float(trainable.evaluate(eval_repeats))
                    if got != want:
                        raise LineageError(
                            f"replay diverges at round {r} on agent {seg.agent_id}: "
                            f"replayed {got!r}, logged {want!r}"
                        )
        payload = trainable.export_payload()
    fitness = float(trainable.evaluate(eval_repeats))
    return payload, fitness


def schedule_csv_lines(
    segments: Sequence[ScheduleSegment], hp_names: Sequence[str]
) -> list[str]:
    lines = [
        ",".join(
            ["start_round", "end_round", "agent_id", "subpop_id", "trained", "kind", *hp_names]
        )
    ]
    for seg in segments:
        cells = [
            str(seg.start_round),
            str(seg.end_round),
            str(seg.agent_id),
            str(seg.subpop_id),
            "1" if seg.trained else "0",
            seg.kind,
        ]
        if seg.hyperparams is None:
            cells.extend("" for _ in hp_names)
        else:
            cells.extend(repr(float(v)) for v in seg.hyperparams)
        lines.append(",".join(cells))
    return lines


@dataclass(frozen=True)
class ReplayReport:
    agent_id: int
    final_round: int
    segments: tuple[ScheduleSegment, ...]
    replayed_fitness: float
    logged_fitness: float

    @property
    def exact(self) -> bool:
        return self.replayed_fitness == self.logged_fitness


def replay_run(
    run_dir,
    agent_id: int | None = None,
    final_round: int | None = None,
    verify_rounds: bool = False,
) -> ReplayReport:
    """Reconstruct and replay a logged run; compare against metrics.csv.

    agent_id=None picks the best agent at final_round (id tie-break).
    verify_rounds cross-checks every intermediate round of the lineage
    against the log and raises on the first divergence.
    """
    run_dir = Path(run_dir)
    config, seed = load_run_config(run_dir)
    metrics = read_metrics(run_dir / "metrics.csv")
    if not metrics:
        raise LineageError(f"{run_dir}: metrics.csv is empty")
    events = read_events(run_dir / "events.jsonl")
    last = max(row.round for row in metrics)
    final_round = last if final_round is None else int(final_round)
    rows = {row.agent_id: row for row in metrics if row.round == final_round}
    if not rows:
        raise LineageError(f"{run_dir}: no metrics rows at round {final_round}")
    if agent_id is None:
        agent_id = min(rows.values(), key=lambda r: (-r.fitness, r.agent_id)).agent_id
    if agent_id not in rows:
        raise LineageError(f"{run_dir}: no metrics row for agent {agent_id} at round {final_round}")
    initial_h = {row.agent_id: row.hyperparams for row in metrics if row.round == 1}
    relevant = [ev for ev in events if ev.round <= final_round]
    segments = reconstruct_schedule(
        relevant, agent_id, final_round, initial_h, config.subpop_size
    )
    expected = None
    if verify_rounds:
        expected = {(row.round, row.agent_id): row.fitness for row in metrics}
    _, fitness = replay_schedule(
        segments,
        config.trainable,
        seed,
        config.t_ready,
        config.search_space.names,
        config.eval_repeats,
        expected_fitness=expected,
    )
    return ReplayReport(
        agent_id=agent_id,
        final_round=final_round,
        segments=tuple(segments),
        replayed_fitness=fitness,
        logged_fitness=rows[agent_id].fitness,
    )
