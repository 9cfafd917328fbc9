"""Baseline schedulers: random search and PBT with backtracking.

Random search samples hyperparameters once and never mutates anything, so
it emits no events at all. PBT with backtracking keeps an archive of the
best population snapshots seen so far and periodically replaces the worst
half (capped at the archive capacity) with elite clones.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

from .core import AgentState, ConfigError, HyperparamVector, Population, rank_descending
from .events import ELITE_RESTORE, EvolutionEvent
from .trainables import transfer_weights


def rs_round(population: Population, round_no: int) -> list[EvolutionEvent]:
    """Random search never mutates the population."""
    return []


@dataclass(frozen=True)
class EliteEntry:
    """Deep-copied snapshot of one agent at one round."""

    payload: dict
    hyperparams: HyperparamVector
    fitness: float
    agent_id: int
    round: int


class EliteArchive:
    """The capacity best (round, agent) snapshots observed so far.

    Ordered best first; ties prefer the lower agent id, then the earlier
    round. Entries are deep copies, so later training cannot corrupt them.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ConfigError(f"elite capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.entries: list[EliteEntry] = []

    def update(self, agents: Sequence[AgentState], round_no: int) -> None:
        """Merge this round's snapshots and keep the top capacity."""
        merged = list(self.entries)
        for a in agents:
            if a.snapshot_fitness is None:
                raise ValueError(f"agent {a.agent_id} has no snapshot fitness")
            merged.append(
                EliteEntry(
                    payload=copy.deepcopy(a.weights),
                    hyperparams=a.hyperparams,
                    fitness=a.snapshot_fitness,
                    agent_id=a.agent_id,
                    round=round_no,
                )
            )
        merged.sort(key=lambda e: (-e.fitness, e.agent_id, e.round))
        self.entries = merged[: self.capacity]

    def min_fitness(self) -> float | None:
        return self.entries[-1].fitness if self.entries else None

    def to_json_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "entries": [
                {
                    "payload": e.payload,
                    "hyperparams": list(e.hyperparams.values),
                    "fitness": e.fitness,
                    "agent_id": e.agent_id,
                    "round": e.round,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> EliteArchive:
        archive = cls(int(data["capacity"]))
        archive.entries = [
            EliteEntry(
                payload=e["payload"],
                hyperparams=HyperparamVector(tuple(float(v) for v in e["hyperparams"])),
                fitness=float(e["fitness"]),
                agent_id=int(e["agent_id"]),
                round=int(e["round"]),
            )
            for e in data["entries"]
        ]
        return archive


def update_elites(archive: EliteArchive, population: Population, round_no: int) -> None:
    archive.update(population.agents, round_no)


def backtrack(
    population: Population,
    archive: EliteArchive,
    round_no: int,
) -> list[EvolutionEvent]:
    """Replace the worst agents with elite clones, in place.

    Targets are the bottom min(capacity, N/2) agents by snapshot fitness.
    Elites are assigned cyclically from the best downward (restoring one
    elite onto several agents is fine when the archive is short). Both the
    payload and the hyperparameters of the elite are restored; the target
    keeps its own random streams. An empty archive is a no-op.
    """
    if not archive.entries:
        return []
    ranked = rank_descending(
        [(a.agent_id, a.snapshot_fitness) for a in population.agents]
    )
    count = min(archive.capacity, population.size // 2)
    targets = ranked[len(ranked) - count :]  # descending fitness within the bottom set
    events: list[EvolutionEvent] = []
    for j, target_id in enumerate(targets):
        elite = archive.entries[j % len(archive.entries)]
        target = population.agent(target_id)
        target.weights = transfer_weights(elite.payload, target.weights)
        target.hyperparams = HyperparamVector(elite.hyperparams.values)
        events.append(
            EvolutionEvent(
                round=round_no,
                subpop_id=target.subpop_id,
                target_agent_id=target_id,
                kind=ELITE_RESTORE,
                source_agent_id=elite.agent_id,
                source_round=elite.round,
                hyperparams_after=elite.hyperparams.values,
                fitness_snapshot=target.snapshot_fitness,
            )
        )
    return events
