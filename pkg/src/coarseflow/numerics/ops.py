"""Primitive op catalog: forward rules plus reverse (gradient) rules.

Every op accepts Tensors (or anything `as_tensor` takes), returns Tensors, and
registers itself on the active tape when any input requires gradients.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ..kernels import conv3x3_forward, conv3x3_grad_input, conv3x3_grad_weight
from .tensor import Tensor, accumulate, as_tensor, make_node


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary_data(a, b, fn, name):
    try:
        return fn(a.data, b.data)
    except ValueError as exc:
        raise ShapeMismatch(f"{name}: {a.data.shape} vs {b.data.shape}") from exc


def _coerce(a, b) -> tuple[Tensor, Tensor]:
    """Wrap operands; bare python/0-d scalars adopt the other side's float dtype
    so float32 graphs are not silently promoted to float64."""
    a_t, b_t = isinstance(a, Tensor), isinstance(b, Tensor)
    a, b = as_tensor(a), as_tensor(b)
    if not a_t and a.data.ndim == 0 and b.data.dtype.kind == "f":
        a = Tensor(a.data.astype(b.data.dtype))
    if not b_t and b.data.ndim == 0 and a.data.dtype.kind == "f":
        b = Tensor(b.data.astype(a.data.dtype))
    return a, b


def add(a, b) -> Tensor:
    a, b = _coerce(a, b)
    out, rec = make_node(_binary_data(a, b, np.add, "add"), (a, b))
    if rec:
        def bwd(g):
            accumulate(a, _unbroadcast(g, a.data.shape))
            accumulate(b, _unbroadcast(g, b.data.shape))

        out._backward = bwd
    return out


def sub(a, b) -> Tensor:
    a, b = _coerce(a, b)
    out, rec = make_node(_binary_data(a, b, np.subtract, "sub"), (a, b))
    if rec:
        def bwd(g):
            accumulate(a, _unbroadcast(g, a.data.shape))
            accumulate(b, _unbroadcast(-g, b.data.shape))

        out._backward = bwd
    return out


def mul(a, b) -> Tensor:
    a, b = _coerce(a, b)
    out, rec = make_node(_binary_data(a, b, np.multiply, "mul"), (a, b))
    if rec:
        def bwd(g):
            accumulate(a, _unbroadcast(g * b.data, a.data.shape))
            accumulate(b, _unbroadcast(g * a.data, b.data.shape))

        out._backward = bwd
    return out


def div(a, b) -> Tensor:
    a, b = _coerce(a, b)
    out, rec = make_node(_binary_data(a, b, np.divide, "div"), (a, b))
    if rec:
        def bwd(g):
            accumulate(a, _unbroadcast(g / b.data, a.data.shape))
            accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        out._backward = bwd
    return out


def neg(a) -> Tensor:
    a = as_tensor(a)
    out, rec = make_node(-a.data, (a,))
    if rec:
        out._backward = lambda g: accumulate(a, -g)
    return out


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = as_tensor(a)
    out, rec = make_node(a.data * c, (a,))
    if rec:
        out._backward = lambda g: accumulate(a, g * c)
    return out


def matmul(a, b) -> Tensor:
    """Strict 2-D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    return bmm(a, b)


def bmm(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    out, rec = make_node(_binary_data(a, b, np.matmul, "bmm"), (a, b))
    if rec:
        def bwd(g):
            accumulate(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape))
            accumulate(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape))

        out._backward = bwd
    return out


def conv3x3(x, w, bias=None) -> Tensor:
    """2-D convolution, 3x3 kernel, stride 1, zero padding 1.

    x: (B, Cin, H, W); w: (Cout, Cin, 3, 3); bias: (Cout,) or None.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or w.shape[2:] != (3, 3) or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv3x3: x {x.shape}, w {w.shape}")
    data = conv3x3_forward(x.data, w.data)
    parents = (x, w)
    if bias is not None:
        bias = as_tensor(bias)
        data = data + bias.data.reshape(1, -1, 1, 1)
        parents = (x, w, bias)
    out, rec = make_node(data, parents)
    if rec:
        def bwd(g):
            g = np.ascontiguousarray(g)
            accumulate(x, conv3x3_grad_input(g, w.data))
            accumulate(w, conv3x3_grad_weight(x.data, g))
            if bias is not None:
                accumulate(bias, g.sum(axis=(0, 2, 3)))

        out._backward = bwd
    return out


def conv1x1(x, w, bias=None) -> Tensor:
    """Pointwise convolution over the channel axis.

    x: (B, Cin, H, W); w: (Cout, Cin); bias: (Cout,) or None.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv1x1: x {x.shape}, w {w.shape}")
    data = np.einsum("oc,bchw->bohw", w.data, x.data, optimize=True)
    parents = (x, w)
    if bias is not None:
        bias = as_tensor(bias)
        data = data + bias.data.reshape(1, -1, 1, 1)
        parents = (x, w, bias)
    out, rec = make_node(data, parents)
    if rec:
        def bwd(g):
            accumulate(x, np.einsum("oc,bohw->bchw", w.data, g, optimize=True))
            accumulate(w, np.einsum("bohw,bchw->oc", g, x.data, optimize=True))
            if bias is not None:
                accumulate(bias, g.sum(axis=(0, 2, 3)))

        out._backward = bwd
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # numerically symmetric form, no overflow on either tail
    s = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))), np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    s = s.astype(a.data.dtype, copy=False)
    out, rec = make_node(s, (a,))
    if rec:
        out._backward = lambda g: accumulate(a, g * s * (1.0 - s))
    return out


def swish(a) -> Tensor:
    """x * sigmoid(x)."""
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60.0, 60.0)))
    out, rec = make_node(a.data * s, (a,))
    if rec:
        out._backward = lambda g: accumulate(a, g * (s + a.data * s * (1.0 - s)))
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    out, rec = make_node(e, (a,))
    if rec:
        out._backward = lambda g: accumulate(a, g * e)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out, rec = make_node(np.log(a.data), (a,))
    if rec:
        out._backward = lambda g: accumulate(a, g / a.data)
    return out


def logabs(a) -> Tensor:
    """log|x|; gradient 1/x."""
    a = as_tensor(a)
    out, rec = make_node(np.log(np.abs(a.data)), (a,))
    if rec:
        out._backward = lambda g: accumulate(a, g / a.data)
    return out


def softmax(a, axis: int) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out, rec = make_node(s, (a,))
    if rec:
        def bwd(g):
            accumulate(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))

        out._backward = bwd
    return out


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat along axis {axis}: {[t.shape for t in tensors]}") from exc
    out, rec = make_node(data, tuple(tensors))
    if rec:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def bwd(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                accumulate(t, g[tuple(idx)])

        out._backward = bwd
    return out


def split(a, sections: int, axis: int) -> tuple[Tensor, ...]:
    """Split into `sections` equal parts along an axis."""
    a = as_tensor(a)
    if a.data.shape[axis] % sections != 0:
        raise ShapeMismatch(f"axis {axis} extent {a.data.shape[axis]} not divisible by {sections}")
    pieces = np.split(a.data, sections, axis=axis)
    outs = []
    width = a.data.shape[axis] // sections
    for k, piece in enumerate(pieces):
        out, rec = make_node(np.ascontiguousarray(piece), (a,))
        if rec:
            def bwd(g, k=k):
                gx = np.zeros_like(a.data)
                idx = [slice(None)] * a.ndim
                idx[axis] = slice(k * width, (k + 1) * width)
                gx[tuple(idx)] = g
                accumulate(a, gx)

            out._backward = bwd
        outs.append(out)
    return tuple(outs)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    out, rec = make_node(np.transpose(a.data, axes), (a,))
    if rec:
        inv = tuple(np.argsort(axes))
        out._backward = lambda g: accumulate(a, np.transpose(g, inv))
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out, rec = make_node(np.ascontiguousarray(a.data).reshape(shape), (a,))
    if rec:
        out._backward = lambda g: accumulate(a, g.reshape(a.data.shape))
    return out


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out, rec = make_node(a.data.sum(axis=axis, keepdims=keepdims), (a,))
    if rec:
        def bwd(g):
            if axis is None:
                accumulate(a, np.broadcast_to(g, a.data.shape).copy())
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                accumulate(a, np.broadcast_to(g, a.data.shape).copy())

        out._backward = bwd
    return out


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather slices along an axis (row permutation when indices is a permutation)."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    out, rec = make_node(np.take(a.data, indices, axis=axis), (a,))
    if rec:
        def bwd(g):
            gx = np.zeros_like(a.data)
            idx = [slice(None)] * a.ndim
            idx[axis] = indices
            np.add.at(gx, tuple(idx), g)
            accumulate(a, gx)

        out._backward = bwd
    return out


def scatter(vec, indices, size: int) -> Tensor:
    """Place a flat vector into a zero vector of length `size` at `indices`
    (gather's adjoint; indices must be unique)."""
    vec = as_tensor(vec)
    indices = np.asarray(indices, dtype=np.intp)
    if vec.ndim != 1 or indices.shape != vec.shape:
        raise ShapeMismatch(f"scatter: vec {vec.shape} vs indices {indices.shape}")
    data = np.zeros(size, dtype=vec.dtype)
    data[indices] = vec.data
    out, rec = make_node(data, (vec,))
    if rec:
        out._backward = lambda g: accumulate(vec, g[indices])
    return out


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "scale": scale,
    "matmul": matmul,
    "bmm": bmm,
    "conv3x3": conv3x3,
    "conv1x1": conv1x1,
    "sigmoid": sigmoid,
    "swish": swish,
    "exp": exp,
    "log": log,
    "logabs": logabs,
    "softmax": softmax,
    "concat": concat,
    "split": split,
    "transpose": transpose,
    "reshape": reshape,
    "sum": sum_,
    "mean": mean,
    "take": take,
    "scatter": scatter,
}


def primitive_set() -> dict:
    """The op catalog, name -> callable."""
    return dict(PRIMITIVES)
