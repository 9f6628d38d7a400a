"""Compositions: nonnegative integer k-vectors with a positive entry.

A composition is stored as a plain tuple of ints so it can key dicts.
Enumeration order is graded lexicographic: by total ``n_x`` first, then
lexicographically by the tuple itself.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import ValidationError

Composition = tuple[int, ...]


def as_composition(x, k: int | None = None) -> Composition:
    try:
        c = tuple(int(v) for v in np.atleast_1d(x))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"not an integer vector: {x!r}") from exc
    if any(v != float(f) for v, f in zip(c, np.atleast_1d(x))):
        raise ValidationError(f"composition entries must be integers: {x!r}")
    if any(v < 0 for v in c) or sum(c) == 0:
        raise ValidationError(f"composition must be nonnegative with a positive entry: {x!r}")
    if k is not None and len(c) != k:
        raise ValidationError(f"composition {c} has length {len(c)}, expected {k}")
    return c


def parse_composition(text: str) -> Composition:
    """Parse the colon-separated key syntax ``"x1:x2:...:xk"``."""
    try:
        return as_composition([int(p) for p in text.strip().split(":")])
    except ValueError as exc:
        raise ValidationError(f"bad composition key {text!r}") from exc


def format_composition(x: Sequence[int]) -> str:
    return ":".join(str(int(v)) for v in x)


def unit(k: int, i: int) -> Composition:
    return tuple(1 if j == i else 0 for j in range(k))


def support(x: Sequence[int]) -> list[int]:
    return [i for i, v in enumerate(x) if v > 0]


def log_factorial(x: Sequence[int]) -> float:
    """``log(x!) = sum_i log(x_i!)``."""
    return float(sum(math.lgamma(v + 1) for v in x))


def factorial(x: Sequence[int]) -> int:
    return math.prod(math.factorial(v) for v in x)


def multinomial(x: Sequence[int], y: Sequence[int]) -> int:
    """``prod_i C(x_i, y_i)``, the number of ways to split ``x`` into ``y`` and ``x - y``."""
    return math.prod(math.comb(a, b) for a, b in zip(x, y))


def shell(k: int, n: int) -> Iterator[Composition]:
    """All compositions of ``k`` parts summing to ``n``, in lexicographic order."""
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in shell(k - 1, n - first):
            yield (first,) + rest


@lru_cache(maxsize=64)
def shell_array(k: int, n: int) -> np.ndarray:
    arr = np.array(list(shell(k, n)), dtype=np.int64).reshape(-1, k)
    arr.setflags(write=False)
    return arr


def graded(k: int, n_max: int, n_min: int = 1) -> list[Composition]:
    """Compositions with ``n_min <= n_x <= n_max`` in graded lexicographic order."""
    out: list[Composition] = []
    for n in range(n_min, n_max + 1):
        out.extend(shell(k, n))
    return out


def splits(x: Sequence[int]) -> Iterator[tuple[Composition, Composition]]:
    """Ordered pairs ``(y, z)`` of compositions with ``y + z = x`` (both nonzero)."""
    for y in itertools.product(*(range(v + 1) for v in x)):
        z = tuple(a - b for a, b in zip(x, y))
        if any(y) and any(z):
            yield tuple(y), z
