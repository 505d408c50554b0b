"""Minimal parameter-holding module system with deterministic naming.

Parameters and child modules register themselves on attribute assignment;
non-trainable state (permutation matrices, init flags) goes through
`register_buffer`. Iteration order is construction order, which keeps
checkpoint layouts stable.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .rng import Rng
from .tensor import Parameter, Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, array: np.ndarray) -> None:
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def set_buffer(self, name: str, array: np.ndarray) -> None:
        """Replace a buffer's contents (shape-checked, in place)."""
        buf = self._buffers[name]
        if buf.shape != array.shape:
            raise ValueError(f"buffer {name}: shape {array.shape} != {buf.shape}")
        buf[...] = array

    def named_parameters(self, prefix: str = ""):
        for k, p in self._params.items():
            yield prefix + k, p
        for k, m in self._children.items():
            yield from m.named_parameters(prefix + k + ".")

    def named_buffers(self, prefix: str = ""):
        for k, b in self._buffers.items():
            yield prefix + k, b
        for k, m in self._children.items():
            yield from m.named_buffers(prefix + k + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        object.__setattr__(self, "_items", [])
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self._children[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, idx):
        return self._items[idx]

    def __len__(self):
        return len(self._items)


class Linear(Module):
    """Affine map on the last axis: y = x @ W + b."""

    def __init__(self, d_in: int, d_out: int, rng: Rng | None = None, zero_init: bool = False, dtype=np.float32):
        super().__init__()
        if zero_init:
            w = np.zeros((d_in, d_out), dtype=dtype)
        else:
            if rng is None:
                raise ValueError("random init needs an rng")
            w = (rng.normal((d_in, d_out)) / np.sqrt(d_in)).astype(dtype)
        self.w = Parameter(w)
        self.b = Parameter(np.zeros(d_out, dtype=dtype))

    def __call__(self, x) -> Tensor:
        return ops.add(ops.bmm(x, self.w), self.b)


class Conv1x1(Module):
    """Pointwise image convolution: (B, Cin, H, W) -> (B, Cout, H, W)."""

    def __init__(self, c_in: int, c_out: int, rng: Rng | None = None, zero_init: bool = False, dtype=np.float32):
        super().__init__()
        if zero_init:
            w = np.zeros((c_out, c_in), dtype=dtype)
        else:
            if rng is None:
                raise ValueError("random init needs an rng")
            w = (rng.normal((c_out, c_in)) / np.sqrt(c_in)).astype(dtype)
        self.w = Parameter(w)
        self.b = Parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x) -> Tensor:
        return ops.conv1x1(x, self.w, self.b)


class Conv3x3(Module):
    """3x3 / pad-1 image convolution: (B, Cin, H, W) -> (B, Cout, H, W)."""

    def __init__(self, c_in: int, c_out: int, rng: Rng | None = None, zero_init: bool = False, dtype=np.float32):
        super().__init__()
        if zero_init:
            w = np.zeros((c_out, c_in, 3, 3), dtype=dtype)
        else:
            if rng is None:
                raise ValueError("random init needs an rng")
            w = (rng.normal((c_out, c_in, 3, 3)) / np.sqrt(9 * c_in)).astype(dtype)
        self.w = Parameter(w)
        self.b = Parameter(np.zeros(c_out, dtype=dtype))

    def __call__(self, x) -> Tensor:
        return ops.conv3x3(x, self.w, self.b)
