"""
Minimal float64 neural primitives with hand-written backward passes.

Every module caches what its backward pass needs during forward, so one
forward must be followed by at most one backward before the next forward.
"""

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np


class Parameter:
    """A value tensor with a gradient buffer of the same shape."""

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


class Linear:
    """y = x W + b, weights drawn uniform in +-1/sqrt(fan_in)."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(fan_in)
        self.W = Parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        self.b = Parameter(rng.uniform(-bound, bound, size=(fan_out,)))
        self._x: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.W.grad += self._x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        yield "W", self.W
        yield "b", self.b


class MLP:
    """
    Linear -> ReLU -> dropout -> Linear. Dropout is inverted (scaled at
    train time) and only active when a generator is passed to forward.
    """

    def __init__(self, fan_in: int, hidden: int, fan_out: int, dropout: float, rng: np.random.Generator):
        self.first = Linear(fan_in, hidden, rng)
        self.second = Linear(hidden, fan_out, rng)
        self.dropout = dropout
        self._active: Optional[np.ndarray] = None
        self._keep: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        pre = self.first.forward(x)
        self._active = pre > 0
        hidden = np.where(self._active, pre, 0.0)
        self._keep = None
        if rng is not None and self.dropout > 0.0:
            self._keep = (rng.random(hidden.shape) >= self.dropout) / (1.0 - self.dropout)
            hidden = hidden * self._keep
        return self.second.forward(hidden)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dh = self.second.backward(dy)
        if self._keep is not None:
            dh = dh * self._keep
        dh = np.where(self._active, dh, 0.0)
        return self.first.backward(dh)

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        for prefix, layer in (("0", self.first), ("1", self.second)):
            for name, param in layer.named_parameters():
                yield f"{prefix}.{name}", param


def segment_log_softmax(logits: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """
    Log-softmax inside consecutive segments of a flat vector.
    starts holds the first index of each (nonempty) segment.
    """
    seg_max = np.maximum.reduceat(logits, starts)
    lengths = np.diff(np.append(starts, logits.size))
    shifted = logits - np.repeat(seg_max, lengths)
    log_norm = np.log(np.add.reduceat(np.exp(shifted), starts))
    return shifted - np.repeat(log_norm, lengths)


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(log_sigmoid(z))


def named_parameters(modules: Dict[str, object]) -> List[Tuple[str, Parameter]]:
    out = []
    for prefix, module in modules.items():
        for name, param in module.named_parameters():
            out.append((f"{prefix}.{name}", param))
    return out
