"""Evolution events: the audit log every scheduler writes.

One event per affected agent per evolution barrier. The JSONL line order
is the total order in which effects were applied, which is what lineage
reconstruction relies on for same-round chains (a later sub-population
may copy state that an earlier one replaced in the same round).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

SURVIVE = "survive"
PERTURBED_CLONE = "perturbed_clone"
MIGRATION_WEIGHTS_ONLY = "migration_weights_only"
MIGRATION_FULL = "migration_full"
ELITE_RESTORE = "elite_restore"

EVENT_KINDS = (SURVIVE, PERTURBED_CLONE, MIGRATION_WEIGHTS_ONLY, MIGRATION_FULL, ELITE_RESTORE)

# Kinds that replace the target's payload from some source.
SOURCED_KINDS = (PERTURBED_CLONE, MIGRATION_WEIGHTS_ONLY, MIGRATION_FULL, ELITE_RESTORE)


@dataclass(frozen=True)
class EvolutionEvent:
    """What happened to one agent at one evolution barrier.

    `source_round` is only set for elite restores, where the payload comes
    from a snapshot taken at an earlier round; for clones and migrations
    the source state is the live state at `round`.
    """

    round: int
    subpop_id: int
    target_agent_id: int
    kind: str
    source_agent_id: int | None
    source_round: int | None
    hyperparams_after: tuple[float, ...]
    fitness_snapshot: float

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == SURVIVE and self.source_agent_id is not None:
            raise ValueError("survive events carry no source")
        if self.kind in SOURCED_KINDS and self.source_agent_id is None:
            raise ValueError(f"{self.kind} events require a source agent")

    def to_json_line(self) -> str:
        rec = {
            "round": self.round,
            "subpop_id": self.subpop_id,
            "target_agent_id": self.target_agent_id,
            "kind": self.kind,
            "source_agent_id": self.source_agent_id,
            "source_round": self.source_round,
            "hyperparams_after": list(self.hyperparams_after),
            "fitness_snapshot": self.fitness_snapshot,
        }
        return json.dumps(rec, separators=(",", ":"))


def event_from_json_line(line: str) -> EvolutionEvent:
    rec = json.loads(line)
    return EvolutionEvent(
        round=int(rec["round"]),
        subpop_id=int(rec["subpop_id"]),
        target_agent_id=int(rec["target_agent_id"]),
        kind=rec["kind"],
        source_agent_id=rec["source_agent_id"],
        source_round=rec["source_round"],
        hyperparams_after=tuple(float(v) for v in rec["hyperparams_after"]),
        fitness_snapshot=float(rec["fitness_snapshot"]),
    )


def write_events(path, events: Iterable[EvolutionEvent], append: bool = True) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json_line())
            fh.write("\n")


def read_events(path) -> list[EvolutionEvent]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(event_from_json_line(line))
    return out
