"""Named parameter collections with per-tensor freeze flags."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParameterSet:
    """Ordered mapping name -> Tensor, each entry independently freezable.

    Frozen entries are invisible to gradient collection and never touched
    by an optimizer step, so their bytes are stable across training.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self._frozen: dict[str, bool] = {}

    def add(self, name, value, frozen=False):
        if name in self._entries:
            raise KeyError(f"duplicate parameter {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.name = name
        self._entries[name] = t
        self._frozen[name] = bool(frozen)
        return t

    def __getitem__(self, name) -> Tensor:
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def is_frozen(self, name):
        return self._frozen[name]

    def set_frozen(self, name, flag):
        if name not in self._entries:
            raise KeyError(name)
        self._frozen[name] = bool(flag)

    def freeze_all(self):
        for name in self._frozen:
            self._frozen[name] = True

    def trainable_names(self):
        return [n for n in self._entries if not self._frozen[n]]

    def clone(self) -> "ParameterSet":
        out = ParameterSet()
        for name, t in self._entries.items():
            out.add(name, t.data.copy(), frozen=self._frozen[name])
        return out

    def copy_values_from(self, other: "ParameterSet"):
        for name in self._entries:
            self._entries[name].data = other[name].data.copy()

    def merge(self, other: "ParameterSet", prefix=""):
        for name in other.names():
            self.add(prefix + name, other[name].data, frozen=other.is_frozen(name))

    def subset(self, prefix) -> "ParameterSet":
        out = ParameterSet()
        for name in self._entries:
            if name.startswith(prefix):
                out.add(
                    name[len(prefix):], self._entries[name].data,
                    frozen=self._frozen[name],
                )
        return out

    def equal_bits(self, other: "ParameterSet", names=None):
        """True when the named entries (default: all) are bit-identical."""
        names = self.names() if names is None else list(names)
        for name in names:
            a, b = self._entries[name].data, other[name].data
            if a.shape != b.shape or not np.array_equal(
                a.view(np.uint64), b.view(np.uint64)
            ):
                return False
        return True
