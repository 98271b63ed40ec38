"""Parameter containers and the small layers shared by the parser."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Ordered registry of parameters and sub-modules.

    Registration order is the declaration order used by checkpoints.
    """

    def __init__(self) -> None:
        self._entries: list[tuple[str, object]] = []

    def add_param(self, name: str, value: Tensor) -> Tensor:
        value.requires_grad = True
        self._entries.append((name, value))
        setattr(self, name, value)
        return value

    def add_module(self, name: str, module: "Module") -> "Module":
        self._entries.append((name, module))
        setattr(self, name, module)
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, entry in self._entries:
            full = f"{prefix}{name}"
            if isinstance(entry, Module):
                yield from entry.named_parameters(full + ".")
            else:
                yield full, entry

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True) -> None:
        super().__init__()
        self.add_param("weight", T.uniform_init(rng, (d_in, d_out), d_in))
        self.has_bias = bias
        if bias:
            self.add_param("bias", T.uniform_init(rng, (d_out,), d_in))

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return T.add(y, self.bias) if self.has_bias else y


class LayerNorm(Module):
    def __init__(self, shape, eps: float = T.LN_EPS) -> None:
        super().__init__()
        self.eps = eps
        self.add_param("gain", T.parameter(np.ones(shape)))
        self.add_param("bias", T.parameter(np.zeros(shape)))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    """Position-wise feed-forward block with residual and layer norm."""

    def __init__(self, rng: np.random.Generator, d: int, d_ff: int) -> None:
        super().__init__()
        self.add_module("inner", Linear(rng, d, d_ff))
        self.add_module("outer", Linear(rng, d_ff, d))
        self.add_module("norm", LayerNorm((d,)))

    def __call__(self, x: Tensor) -> Tensor:
        return self.norm(T.add(x, self.outer(T.relu(self.inner(x)))))
