"""Named trainable parameters and the RMSProp optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Param:
    """One trainable tensor with its gradient and optimizer buffers."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    sq_acc: np.ndarray = field(init=False)
    mom: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.grad = np.zeros_like(self.value)
        self.sq_acc = np.zeros_like(self.value)
        self.mom = np.zeros_like(self.value)


ParamStore = dict[str, Param]


def zero_grads(store: ParamStore) -> None:
    for p in store.values():
        p.grad[...] = 0


def rmsprop_step(
    store: ParamStore,
    lr: float,
    decay: float = 0.9,
    momentum: float = 0.9,
    eps: float = 1e-10,
) -> None:
    """acc <- d*acc + (1-d)*g^2; mom <- m*mom + lr*g/sqrt(acc+eps); p -= mom."""
    for name, p in store.items():
        g = p.grad
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        p.sq_acc *= decay
        p.sq_acc += (1.0 - decay) * np.square(g)
        p.mom *= momentum
        p.mom += lr * g / np.sqrt(p.sq_acc + eps)
        p.value -= p.mom


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
