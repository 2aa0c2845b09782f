"""Named parameter store with gradient slots."""

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterator, Tuple

import numpy as np


class Params:
    """Ordered mapping ``name -> array`` plus a same-shaped gradient per entry.

    Insertion order is the canonical order used for checkpoints and for the
    parameter count.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.values: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self.grads: Dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self.values:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=self.dtype)
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __setitem__(self, name: str, value) -> None:
        cur = self.values[name]
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != cur.shape:
            raise ValueError(f"{name}: shape {value.shape} != {cur.shape}")
        cur[...] = value

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.values.items())

    def count(self) -> int:
        """Total number of scalar parameters."""
        return int(sum(v.size for v in self.values.values()))

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g[...] = 0

    def shapes(self) -> "OrderedDict[str, Tuple[int, ...]]":
        return OrderedDict((k, v.shape) for k, v in self.values.items())

    def state(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of all values, safe to keep across updates."""
        return OrderedDict((k, v.copy()) for k, v in self.values.items())

    def load_state(self, state) -> None:
        missing = set(self.values) - set(state)
        extra = set(state) - set(self.values)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, v in state.items():
            self[k] = v
