"""Domain types shared by every scheduler.

Hyperparameter spaces and vectors, per-agent state, the partition of a
population into sub-populations, fitness ranking, and the quartile
brackets used by truncation selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LOG_UNIFORM = "log-uniform"


class ConfigError(ValueError):
    """A configuration or structural invariant was violated."""


@dataclass(frozen=True)
class SpaceEntry:
    """One named hyperparameter with its initial sampling range."""

    name: str
    low: float
    high: float
    scale: str = LOG_UNIFORM

    def __post_init__(self) -> None:
        if not self.name or not self.name.isidentifier():
            raise ConfigError(f"hyperparameter name {self.name!r} is not an identifier")
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ConfigError(f"{self.name}: bounds must be finite")
        if not 0.0 < self.low <= self.high:
            raise ConfigError(
                f"{self.name}: need 0 < low <= high, got [{self.low}, {self.high}]"
            )
        if self.scale != LOG_UNIFORM:
            raise ConfigError(f"{self.name}: unsupported scale {self.scale!r}")


@dataclass(frozen=True)
class HyperparamSpace:
    """Ordered collection of SpaceEntry; vector positions follow entry order."""

    entries: tuple[SpaceEntry, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ConfigError("hyperparameter space must contain at least one entry")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate hyperparameter names: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def to_mapping(self, vector: HyperparamVector) -> dict[str, float]:
        if len(vector.values) != len(self.entries):
            raise ConfigError("vector length does not match space")
        return {e.name: v for e, v in zip(self.entries, vector.values)}

    def clip(self, vector: HyperparamVector) -> HyperparamVector:
        """Clamp each entry back into its initial sampling range."""
        clipped = tuple(
            min(max(v, e.low), e.high) for e, v in zip(self.entries, vector.values)
        )
        return HyperparamVector(clipped)


@dataclass(frozen=True)
class HyperparamVector:
    """Positive reals aligned with a HyperparamSpace's entries."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        for v in vals:
            if not math.isfinite(v) or v <= 0.0:
                raise ConfigError(f"hyperparameter values must be positive reals, got {v}")

    def __len__(self) -> int:
        return len(self.values)

    def scaled(self, factors: Sequence[float]) -> HyperparamVector:
        if len(factors) != len(self.values):
            raise ConfigError("factor list length does not match vector")
        return HyperparamVector(tuple(v * f for v, f in zip(self.values, factors)))


def sample_hyperparams(space: HyperparamSpace, rng: np.random.Generator) -> HyperparamVector:
    """Draw one vector, each entry log-uniform within its range.

    A degenerate range (low == high) returns that bound exactly.
    """
    out = []
    for e in space.entries:
        if e.low == e.high:
            out.append(e.low)
        else:
            out.append(math.exp(rng.uniform(math.log(e.low), math.log(e.high))))
    return HyperparamVector(tuple(out))


@dataclass
class AgentState:
    """One population slot.

    `weights` is an opaque trainable payload (see trainables module for
    the schema); `rng_stream` is the integer seed identifying the agent's
    private stream family.
    """

    agent_id: int
    subpop_id: int
    weights: dict
    hyperparams: HyperparamVector
    snapshot_fitness: float | None = None
    rng_stream: int = 0


@dataclass
class Population:
    """N agents split into M equally sized sub-populations.

    Agents 0..n-1 belong to sub-population 0, the next n to 1, and so on.
    `deltas[i]` is the evolution period (in rounds) of sub-population i.
    """

    agents: list[AgentState]
    deltas: tuple[int, ...]
    round_counter: int = 0

    def __post_init__(self) -> None:
        n_total = len(self.agents)
        m = len(self.deltas)
        if m < 1:
            raise ConfigError("deltas must contain at least one period")
        if n_total == 0 or n_total % m != 0:
            raise ConfigError(f"population size {n_total} not divisible into {m} sub-populations")
        per = n_total // m
        if per % 4 != 0:
            raise ConfigError(f"sub-population size {per} must be a multiple of 4")
        for d in self.deltas:
            if int(d) != d or d < 1:
                raise ConfigError(f"deltas must be positive integers, got {self.deltas}")
        if list(self.deltas) != sorted(set(self.deltas)):
            raise ConfigError(f"deltas must be strictly increasing, got {self.deltas}")
        for idx, a in enumerate(self.agents):
            if a.agent_id != idx:
                raise ConfigError("agents must be listed in agent_id order")
            expected = idx // per
            if a.subpop_id != expected:
                raise ConfigError(
                    f"agent {idx} has subpop_id {a.subpop_id}, expected {expected}"
                )

    @property
    def size(self) -> int:
        return len(self.agents)

    @property
    def num_subpops(self) -> int:
        return len(self.deltas)

    @property
    def subpop_size(self) -> int:
        return len(self.agents) // len(self.deltas)

    def subpop(self, i: int) -> list[AgentState]:
        per = self.subpop_size
        if not 0 <= i < self.num_subpops:
            raise ConfigError(f"no sub-population {i}")
        return self.agents[i * per : (i + 1) * per]

    def agent(self, agent_id: int) -> AgentState:
        return self.agents[agent_id]


@dataclass(frozen=True)
class Brackets:
    """Fitness quarters of one ranked sub-population (agent ids)."""

    winners: tuple[int, ...]
    survivors: tuple[int, ...]
    migration_open: tuple[int, ...]
    losers: tuple[int, ...]


def rank_descending(fitness_by_agent: Sequence[tuple[int, float]]) -> list[int]:
    """Rank agent ids by fitness, best first; ties break toward lower id."""
    if not fitness_by_agent:
        raise ValueError("empty population")
    for agent_id, f in fitness_by_agent:
        if f is None or not math.isfinite(f):
            raise ValueError(f"invalid fitness for agent {agent_id}: {f!r}")
    ordered = sorted(fitness_by_agent, key=lambda p: (-p[1], p[0]))
    return [agent_id for agent_id, _ in ordered]


def compute_brackets(ranked: Sequence[int]) -> Brackets:
    """Split a ranked id list into winner/survivor/migration/loser quarters."""
    n = len(ranked)
    if n == 0 or n % 4 != 0:
        raise ConfigError(f"bracket computation needs a multiple of 4 agents, got {n}")
    q = n // 4
    ids = list(ranked)
    return Brackets(
        winners=tuple(ids[:q]),
        survivors=tuple(ids[q : 2 * q]),
        migration_open=tuple(ids[2 * q : 3 * q]),
        losers=tuple(ids[3 * q :]),
    )
