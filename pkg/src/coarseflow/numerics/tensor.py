"""Dense tensors with taped reverse-mode differentiation.

A Tensor wraps a numpy array. While a Tape is active, primitive ops append
their outputs to the tape (a Wengert list); since execution order is a
topological order, sweeping the list in reverse visits every node exactly once
and accumulates gradients into all reachable leaves.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFinite, NonScalarOutput

_ACTIVE_TAPE = None
_CHECK_FINITE = False
_CHECK_LAYERS = False


def set_check_finite(flag: bool) -> None:
    """Globally enable per-op finiteness validation (slow; for debugging)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


def set_layer_checks(flag: bool) -> None:
    """Enable per-layer finiteness checks inside the flows; their errors name
    the first offending layer."""
    global _CHECK_LAYERS
    _CHECK_LAYERS = bool(flag)


def layer_checks_enabled() -> bool:
    return _CHECK_LAYERS


def check_finite(value, where: str) -> None:
    data = value.data if isinstance(value, Tensor) else value
    if not np.all(np.isfinite(data)):
        raise NonFinite(f"non-finite values in {where}")


class Tensor:
    """Numpy-backed array node, immutable by convention once created."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # operator sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops

        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops

        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, other)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.bmm(self, other)


class Parameter(Tensor):
    """Trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value))


class Tape:
    """Ordered record of primitive applications within a `with` block."""

    def __init__(self):
        self._nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def gradients(self, output: Tensor, params) -> list[np.ndarray]:
        """Backpropagate from a scalar output; returns one gradient per param.

        Parameters not touched by the computation get zero gradients.
        """
        params = list(params)
        if output.data.size != 1:
            raise NonScalarOutput(f"output has shape {output.data.shape}, expected scalar")
        for node in self._nodes:
            node.grad = None
        for p in params:
            p.grad = None
        output.grad = np.ones_like(output.data)
        for node in reversed(self._nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
        return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


def grad(tape: Tape, output: Tensor, params) -> list[np.ndarray]:
    """Functional alias for Tape.gradients."""
    return tape.gradients(output, params)


def active_tape():
    return _ACTIVE_TAPE


def make_node(data: np.ndarray, parents: tuple) -> tuple[Tensor, bool]:
    """Wrap an op result; returns (tensor, recording) where recording tells the
    caller to attach a backward closure."""
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFinite("non-finite op result")
    out = Tensor(data)
    tape = _ACTIVE_TAPE
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        tape._nodes.append(out)
        return out, True
    return out, False


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add a gradient contribution; never mutates existing buffers in place."""
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g
