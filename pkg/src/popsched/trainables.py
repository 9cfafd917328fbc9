"""Trainable contract and built-in synthetic trainables.

A trainable owns a small state vector plus private random streams, and
exposes train / evaluate / payload export-import. Payloads follow a fixed
schema so that schedulers and workers can move them around without
knowing anything about the underlying model:

    {
      "format": 1,
      "kind": "<registry name>",
      "weights": {... trainable-specific reals ...},
      "rng": {"seed": int, "steps": int, "train_state": <bit generator state>},
    }

`weights` is the cloneable part. `rng` pins the private streams so that
import_payload() restores behavior bit-for-bit; cloning between agents
goes through transfer_weights(), which moves only the weights section and
leaves the receiving agent's streams untouched.

Evaluation draws come from a generator derived from (seed, step counter),
never from the training stream, so repeated evaluation between train
calls cannot change a trajectory.

Determinism note: each built-in consumes a fixed number of random draws
per train step (independent of hyperparameters and of state), which is
what allows lineage replay to fast-forward a stream with advance_rng().
"""

from __future__ import annotations

import copy
import math
from typing import Mapping, Protocol, runtime_checkable

import numpy as np

PAYLOAD_FORMAT = 1

_TRAIN_SUBSTREAM = 1
_EVAL_SUBSTREAM = 2
_INIT_SUBSTREAM = 3


@runtime_checkable
class Trainable(Protocol):
    """Behavioral contract every trainable implements."""

    def init(self, seed: int, hyperparams: Mapping[str, float]) -> None: ...

    def train(self, num_steps: int) -> None: ...

    def evaluate(self, num_repeats: int = 1) -> float: ...

    def export_payload(self) -> dict: ...

    def import_payload(self, payload: dict) -> None: ...

    def set_hyperparams(self, hyperparams: Mapping[str, float]) -> None: ...

    def get_hyperparams(self) -> dict[str, float]: ...


def two_basin_objective(x: float) -> float:
    """Two Gaussian bumps: local maximum 1 at x=0, global maximum 2 at x=10."""
    return math.exp(-0.5 * x * x) + 2.0 * math.exp(-0.5 * (x - 10.0) * (x - 10.0))


class _RngBase:
    """Common stream bookkeeping for the built-ins."""

    kind = "base"

    def __init__(self) -> None:
        self._seed = 0
        self._steps = 0
        self._rng_train: np.random.Generator | None = None
        self._hyperparams: dict[str, float] = {}

    def _init_streams(self, seed: int) -> None:
        self._seed = int(seed)
        self._steps = 0
        self._rng_train = np.random.default_rng(
            np.random.SeedSequence((self._seed, _TRAIN_SUBSTREAM))
        )

    def _init_rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence((self._seed, _INIT_SUBSTREAM)))

    def _eval_rng(self) -> np.random.Generator:
        # Derived from the current step counter: evaluation is pure.
        return np.random.default_rng(
            np.random.SeedSequence((self._seed, _EVAL_SUBSTREAM, self._steps))
        )

    def set_hyperparams(self, hyperparams: Mapping[str, float]) -> None:
        self._hyperparams = {k: float(v) for k, v in hyperparams.items()}

    def get_hyperparams(self) -> dict[str, float]:
        return dict(self._hyperparams)

    def _export_weights(self) -> dict:
        raise NotImplementedError

    def _import_weights(self, weights: dict) -> None:
        raise NotImplementedError

    def export_payload(self) -> dict:
        assert self._rng_train is not None, "init() or import_payload() first"
        return {
            "format": PAYLOAD_FORMAT,
            "kind": self.kind,
            "weights": self._export_weights(),
            "rng": {
                "seed": self._seed,
                "steps": self._steps,
                "train_state": copy.deepcopy(self._rng_train.bit_generator.state),
            },
        }

    def import_payload(self, payload: dict) -> None:
        if payload.get("format") != PAYLOAD_FORMAT:
            raise ValueError(f"unsupported payload format {payload.get('format')!r}")
        if payload.get("kind") != self.kind:
            raise ValueError(f"payload kind {payload.get('kind')!r} != {self.kind!r}")
        rng = payload["rng"]
        self._seed = int(rng["seed"])
        self._steps = int(rng["steps"])
        self._rng_train = np.random.default_rng()
        self._rng_train.bit_generator.state = copy.deepcopy(rng["train_state"])
        self._import_weights(copy.deepcopy(payload["weights"]))


class TwoBasinTrainable(_RngBase):
    """Stochastic hill climb on the two-basin objective.

    Each step proposes x' = x + sigma * g with g standard normal and keeps
    the proposal only if the objective improves, so the fitness trace of a
    single walker never decreases. Small sigma converges inside the
    current basin; reaching the global basin from x near 0 takes a
    proposal of magnitude about 10.

    Optional corruption (`forget_prob` > 0) replaces an occasional step by
    an unconditional jump of scale `forget_scale`, which can destroy an
    already-found optimum; this is the stand-in for catastrophic
    forgetting used to exercise backtracking. With corruption enabled a
    train step consumes one normal plus one uniform draw; otherwise one
    normal only.
    """

    kind = "two_basin"

    def __init__(self, start_x: float = 0.0, forget_prob: float = 0.0,
                 forget_scale: float = 8.0, eval_noise: float = 0.0) -> None:
        super().__init__()
        if not 0.0 <= forget_prob < 1.0:
            raise ValueError("forget_prob must be in [0, 1)")
        self.start_x = float(start_x)
        self.forget_prob = float(forget_prob)
        self.forget_scale = float(forget_scale)
        self.eval_noise = float(eval_noise)
        self._x = self.start_x

    def init(self, seed: int, hyperparams: Mapping[str, float]) -> None:
        self._init_streams(seed)
        self.set_hyperparams(hyperparams)
        self._x = self.start_x

    def train(self, num_steps: int) -> None:
        sigma = self._hyperparams.get("sigma")
        if sigma is None or sigma <= 0.0:
            raise ValueError(f"two_basin needs a positive 'sigma' hyperparameter, got {sigma}")
        exp = math.exp
        x = self._x
        fx = exp(-0.5 * x * x) + 2.0 * exp(-0.5 * (x - 10.0) * (x - 10.0))
        gs = self._rng_train.standard_normal(num_steps).tolist()
        if self.forget_prob > 0.0:
            us = self._rng_train.random(num_steps).tolist()
            p, scale = self.forget_prob, self.forget_scale
            for g, u in zip(gs, us):
                if u < p:
                    x = x + scale * g
                    fx = exp(-0.5 * x * x) + 2.0 * exp(-0.5 * (x - 10.0) * (x - 10.0))
                    continue
                xp = x + sigma * g
                fxp = exp(-0.5 * xp * xp) + 2.0 * exp(-0.5 * (xp - 10.0) * (xp - 10.0))
                if fxp > fx:
                    x, fx = xp, fxp
        else:
            for g in gs:
                xp = x + sigma * g
                fxp = exp(-0.5 * xp * xp) + 2.0 * exp(-0.5 * (xp - 10.0) * (xp - 10.0))
                if fxp > fx:
                    x, fx = xp, fxp
        self._x = x
        self._steps += num_steps

    def advance_rng(self, num_steps: int) -> None:
        """Consume exactly what train(num_steps) would, without training."""
        self._rng_train.standard_normal(num_steps)
        if self.forget_prob > 0.0:
            self._rng_train.random(num_steps)
        self._steps += num_steps

    def evaluate(self, num_repeats: int = 1) -> float:
        base = two_basin_objective(self._x)
        if self.eval_noise == 0.0:
            return base
        draws = self._eval_rng().standard_normal(num_repeats)
        return float(np.mean(base + self.eval_noise * draws))

    def _export_weights(self) -> dict:
        return {"x": self._x}

    def _import_weights(self, weights: dict) -> None:
        self._x = float(weights["x"])


class QuadraticLRTrainable(_RngBase):
    """Gradient descent on a diagonal quadratic bowl.

    theta[j] <- theta[j] * (1 - lr * a[j]) each step; fitness is the
    negative loss. The iteration contracts iff lr < 2 / max(a), so a
    learning rate pushed too high by perturbation visibly diverges. Loss
    and iterates are clamped at a large finite bound so divergence shows
    up as a terrible fitness rather than a non-finite evaluation.

    Consumes no random draws during training.
    """

    kind = "quadratic_lr"

    _CLAMP = 1e30

    def __init__(self, curvature: tuple[float, ...] = (1.0, 10.0),
                 theta0: tuple[float, ...] | None = None) -> None:
        super().__init__()
        self.curvature = tuple(float(a) for a in curvature)
        if not self.curvature or any(a <= 0 for a in self.curvature):
            raise ValueError("curvature must be positive")
        if theta0 is None:
            theta0 = tuple(1.0 for _ in self.curvature)
        self.theta0 = tuple(float(t) for t in theta0)
        if len(self.theta0) != len(self.curvature):
            raise ValueError("theta0 and curvature dimensions differ")
        self._theta = list(self.theta0)

    def init(self, seed: int, hyperparams: Mapping[str, float]) -> None:
        self._init_streams(seed)
        self.set_hyperparams(hyperparams)
        self._theta = list(self.theta0)

    def train(self, num_steps: int) -> None:
        lr = self._hyperparams.get("lr")
        if lr is None or lr <= 0.0:
            raise ValueError(f"quadratic_lr needs a positive 'lr' hyperparameter, got {lr}")
        clamp = self._CLAMP
        for _ in range(num_steps):
            self._theta = [
                max(-clamp, min(clamp, t * (1.0 - lr * a)))
                for t, a in zip(self._theta, self.curvature)
            ]
        self._steps += num_steps

    def advance_rng(self, num_steps: int) -> None:
        self._steps += num_steps

    def evaluate(self, num_repeats: int = 1) -> float:
        loss = 0.5 * sum(a * t * t for a, t in zip(self.curvature, self._theta))
        return -min(loss, self._CLAMP)

    def _export_weights(self) -> dict:
        return {"theta": list(self._theta)}

    def _import_weights(self, weights: dict) -> None:
        self._theta = [float(t) for t in weights["theta"]]


class SeedLotteryTrainable(_RngBase):
    """Pure seed lottery: progress rate is decided once at init.

    A per-agent drift is drawn log-normally (median `drift_median`,
    log-scale `drift_sigma_log`) from the init stream; every train step
    adds drift plus zero-mean noise to a scalar level, and evaluation
    returns the level. Hyperparameters are accepted and ignored, so any
    fitness differences come from initialization luck and noise alone.

    The drift belongs to the weights section: cloning an agent clones its
    luck along with its level. Consumes one normal draw per train step.
    """

    kind = "seed_lottery"

    def __init__(self, drift_median: float = 0.1, drift_sigma_log: float = 1.0,
                 noise_scale: float = 0.5) -> None:
        super().__init__()
        if drift_median < 0 or drift_sigma_log < 0 or noise_scale < 0:
            raise ValueError("seed_lottery parameters must be non-negative")
        self.drift_median = float(drift_median)
        self.drift_sigma_log = float(drift_sigma_log)
        self.noise_scale = float(noise_scale)
        self._level = 0.0
        self._drift = 0.0

    def init(self, seed: int, hyperparams: Mapping[str, float]) -> None:
        self._init_streams(seed)
        self.set_hyperparams(hyperparams)
        z = float(self._init_rng().standard_normal())
        self._drift = self.drift_median * math.exp(self.drift_sigma_log * z)
        self._level = 0.0

    def train(self, num_steps: int) -> None:
        gs = self._rng_train.standard_normal(num_steps).tolist()
        level, drift, scale = self._level, self._drift, self.noise_scale
        for g in gs:
            level += drift + scale * g
        self._level = level
        self._steps += num_steps

    def advance_rng(self, num_steps: int) -> None:
        self._rng_train.standard_normal(num_steps)
        self._steps += num_steps

    def evaluate(self, num_repeats: int = 1) -> float:
        return self._level

    def _export_weights(self) -> dict:
        return {"level": self._level, "drift": self._drift}

    def _import_weights(self, weights: dict) -> None:
        self._level = float(weights["level"])
        self._drift = float(weights["drift"])


TRAINABLES: dict[str, type] = {
    TwoBasinTrainable.kind: TwoBasinTrainable,
    QuadraticLRTrainable.kind: QuadraticLRTrainable,
    SeedLotteryTrainable.kind: SeedLotteryTrainable,
}


def build_trainable(spec: Mapping) -> Trainable:
    """Instantiate a trainable from {"kind": ..., "params": {...}}."""
    kind = spec.get("kind")
    if kind not in TRAINABLES:
        raise ValueError(f"unknown trainable kind {kind!r}; known: {sorted(TRAINABLES)}")
    params = dict(spec.get("params") or {})
    try:
        return TRAINABLES[kind](**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for trainable {kind!r}: {exc}") from None


def transfer_weights(source_payload: dict, target_payload: dict) -> dict:
    """Clone the weights section only; the target keeps its own streams."""
    if source_payload["kind"] != target_payload["kind"]:
        raise ValueError(
            f"cannot transfer weights across kinds "
            f"{source_payload['kind']!r} -> {target_payload['kind']!r}"
        )
    return {
        "format": PAYLOAD_FORMAT,
        "kind": source_payload["kind"],
        "weights": copy.deepcopy(source_payload["weights"]),
        "rng": copy.deepcopy(target_payload["rng"]),
    }
