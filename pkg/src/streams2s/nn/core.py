"""Parameters, module tree and the seeded generator every random draw flows from."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


class ShapeError(ValueError):
    pass


class MissingCacheError(RuntimeError):
    pass


def _name_key(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def generator(root_seed: int, *names) -> np.random.Generator:
    """64-bit PCG generator derived from the root seed and a path of names.

    The same (root_seed, names) always yields the same stream, regardless of
    what other generators were created before it.
    """
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_name_key(n) for n in names]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(eq=False)
class Parameter:
    value: np.ndarray
    trainable: bool = True
    name: str = ""
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


class Module:
    """Tree of parameters discovered from instance attributes, in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            if isinstance(val, Parameter):
                val.name = prefix + key
                yield val.name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self, prefix: str = "") -> dict[str, Parameter]:
        return dict(self.named_parameters(prefix))

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.value.size for _, p in self.named_parameters())


def check_shape(what: str, actual: tuple, expected: tuple) -> None:
    """``None`` in ``expected`` matches any extent."""
    ok = len(actual) == len(expected) and all(e is None or a == e for a, e in zip(actual, expected))
    if not ok:
        shown = tuple("*" if e is None else e for e in expected)
        raise ShapeError(f"{what}: expected shape {shown}, got {tuple(actual)}")
