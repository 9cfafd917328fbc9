"""Shared builders for scheduler tests.

The logic-level tests (ranking, exploitation, migration, backtracking)
need populations whose agents carry valid payload dicts but no live
trainables; `make_population` fabricates those. Payload weights encode
the original owner so transfers are easy to assert on, and the rng
section carries an owner tag so "target keeps its own streams" is
directly checkable.
"""

from __future__ import annotations

import numpy as np
import pytest

from popsched.core import AgentState, HyperparamVector, Population
from popsched.seeding import seed_hierarchy


def make_payload(agent_id: int, kind: str = "two_basin") -> dict:
    return {
        "format": 1,
        "kind": kind,
        "weights": {"x": float(agent_id)},
        "rng": {"seed": agent_id, "steps": 0, "train_state": {"owner": agent_id}},
    }


def make_agent(
    agent_id: int,
    subpop_id: int,
    fitness: float | None,
    h: tuple[float, ...] = (1.0,),
) -> AgentState:
    return AgentState(
        agent_id=agent_id,
        subpop_id=subpop_id,
        weights=make_payload(agent_id),
        hyperparams=HyperparamVector(h),
        snapshot_fitness=fitness,
        rng_stream=agent_id,
    )


def make_population(
    fitnesses: list[float],
    deltas: tuple[int, ...] = (1,),
    h_for=None,
) -> Population:
    """One agent per fitness, split evenly over len(deltas) sub-populations."""
    n = len(fitnesses)
    per = n // len(deltas)
    agents = [
        make_agent(
            i,
            i // per,
            fitnesses[i],
            h_for(i) if h_for else (float(i + 1),),
        )
        for i in range(n)
    ]
    return Population(agents=agents, deltas=deltas)


def evolve_rngs_for(population: Population, master_seed: int = 0):
    return {
        a.agent_id: seed_hierarchy(master_seed, a.agent_id, "evolve")
        for a in population.agents
    }


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
