"""Named parameter store with trainable/frozen flags."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .tensor import Tensor


class ParameterRegistry:
    """Ordered mapping ``name -> Tensor``.

    A parameter is trainable iff its tensor has ``requires_grad``; frozen
    tensors are never recorded in the graph and never see a gradient.
    Names are dotted; the first component is the parameter group
    (``sentence_encoder``, ``document_encoder``, ``embedding``, ...).
    """

    def __init__(self):
        self._params: OrderedDict[str, Tensor] = OrderedDict()

    def add(self, name: str, values: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.ascontiguousarray(values, dtype=np.float64), requires_grad=trainable, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def is_trainable(self, name: str) -> bool:
        return self._params[name].requires_grad

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self._params.items() if t.requires_grad]

    def frozen(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self._params.items() if not t.requires_grad]

    def set_trainable(self, name: str, flag: bool) -> None:
        t = self._params[name]
        t.requires_grad = flag
        if not flag:
            t.grad = None

    def group(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self._params.items() if n == prefix or n.startswith(prefix + ".")]

    def groups(self) -> list[str]:
        seen: list[str] = []
        for n in self._params:
            g = n.split(".", 1)[0]
            if g not in seen:
                seen.append(g)
        return seen

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def num_values(self, trainable_only: bool = False) -> int:
        return sum(t.size for t in self._params.values() if t.requires_grad or not trainable_only)

    def group_bytes(self, prefix: str) -> bytes:
        """Little-endian float64 serialization of a group, in registration order."""
        return b"".join(t.data.astype("<f8").tobytes() for _, t in self.group(prefix))

    def flat(self, prefix: str | None = None) -> np.ndarray:
        items = self._params.items() if prefix is None else self.group(prefix)
        parts = [t.data.reshape(-1) for _, t in items]
        return np.concatenate(parts) if parts else np.zeros(0)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for n, arr in values.items():
            t = self._params[n]
            if t.shape != arr.shape:
                raise ValueError(f"shape mismatch for {n}: {t.shape} vs {arr.shape}")
            t.data[...] = arr
