"""Deterministic random-stream derivation.

Every stream used in a run is derived from (master_seed, agent_id, kind)
through numpy's SeedSequence, so streams are disjoint across agents and
kinds, reproducible across platforms, and independent of worker count or
scheduling order.
"""

from __future__ import annotations

import numpy as np

STREAM_KINDS = {"init": 0, "train": 1, "eval": 2, "evolve": 3}


def seed_hierarchy(master_seed: int, agent_id: int, stream_kind: str) -> np.random.Generator:
    """Return the dedicated random stream for one (agent, kind) pair."""
    try:
        code = STREAM_KINDS[stream_kind]
    except KeyError:
        raise ValueError(f"unknown stream kind {stream_kind!r}") from None
    if master_seed < 0 or agent_id < 0:
        raise ValueError("master_seed and agent_id must be non-negative")
    ss = np.random.SeedSequence((int(master_seed), int(agent_id), code))
    return np.random.default_rng(ss)


def agent_trainable_seed(master_seed: int, agent_id: int) -> int:
    """Stable integer seed handed to a trainable's init().

    The trainable derives its own internal train/eval streams from this
    value, keeping them disjoint from the runner-owned streams above.
    """
    ss = np.random.SeedSequence((int(master_seed), int(agent_id)))
    return int(ss.generate_state(1, np.uint64)[0])
