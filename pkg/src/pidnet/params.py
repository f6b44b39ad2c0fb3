"""Named learnable arrays with paired gradient and optimizer-moment buffers."""

from __future__ import annotations

import numpy as np

from .autodiff import Var


class Param:
    """One entry: value, accumulated gradient, and two Adam moments."""

    __slots__ = ("value", "grad", "m", "v", "trainable")

    def __init__(self, value: np.ndarray, trainable: bool = True):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.trainable = trainable


class ParamStore:
    """Ordered map from name to Param. Insertion order is the serialization order."""

    def __init__(self):
        self._entries: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> str:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name}")
        self._entries[name] = Param(value, trainable)
        return name

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self):
        return list(self._entries.keys())

    def items(self):
        return self._entries.items()

    def trainable_items(self):
        return [(n, p) for n, p in self._entries.items() if p.trainable]

    def zero_grads(self):
        for p in self._entries.values():
            p.grad[...] = 0.0

    def clone_values(self) -> dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self._entries.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for n, v in values.items():
            self._entries[n].value[...] = v

    def global_grad_norm(self) -> float:
        total = 0.0
        for _, p in self.trainable_items():
            total += float(np.sum(p.grad * p.grad))
        return float(np.sqrt(total))

    def clip_grads(self, max_norm: float) -> float:
        """Scale all gradients so the global norm is at most max_norm."""
        norm = self.global_grad_norm()
        if norm > max_norm and norm > 0.0:
            scale = max_norm / norm
            for _, p in self.trainable_items():
                p.grad *= scale
        return norm


class ForwardCtx:
    """One forward pass: binds parameters to tape leaves and carries run state.

    mode is "train" or "eval"; rng feeds stochastic layers in train mode;
    gate_sink, when set, receives (block_id, sigma_vector) for every gated
    fusion the pass evaluates.
    """

    def __init__(self, store: ParamStore, mode: str = "eval", rng=None, gate_sink=None):
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode: {mode!r}")
        self.store = store
        self.mode = mode
        self.rng = rng
        self.gate_sink = gate_sink
        self._leaves: dict[str, Var] = {}

    def p(self, name: str) -> Var:
        leaf = self._leaves.get(name)
        if leaf is None:
            leaf = Var(self.store[name].value)
            self._leaves[name] = leaf
        return leaf

    def harvest(self):
        """Add this pass's leaf gradients into the store's grad buffers."""
        for name, leaf in self._leaves.items():
            if leaf.grad is not None:
                self.store[name].grad += leaf.grad
        self._leaves.clear()
