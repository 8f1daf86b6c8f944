"""Minimal reverse-mode autodiff over float64 numpy arrays.

Every op builds a node holding its inputs and a closure that routes the
upstream gradient to them; backward() topologically sorts the graph and
runs the closures once each. Ops are batched array ops, not scalars, so a
whole minibatch (or a stack of interpolated inputs) is one graph. Nodes
whose inputs all have requires_grad=False carry no closure, which makes
pure inference allocation-cheap for free.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

Axis = int | tuple[int, ...] | None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum *grad* down to *shape*, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squash = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if squash:
        grad = grad.sum(axis=squash, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backprop=None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backprop = _backprop

    # -- plumbing ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def _accum(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Backpropagate from this node; seeds with ones when grad is None."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data) if grad is None else np.asarray(grad, float))
        for node in reversed(topo):
            if node._backprop is not None:
                node._backprop()

    # -- op constructors ---------------------------------------------------

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    @staticmethod
    def _node(data: np.ndarray, parents: tuple["Tensor", ...]) -> "Tensor":
        needs = any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=needs, _parents=parents if needs else ())

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = self._node(self.data + other.data, (self, other))
        if out.requires_grad:
            def backprop():
                if self.requires_grad:
                    self._accum(_unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(out.grad, other.data.shape))
            out._backprop = backprop
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = self._node(-self.data, (self,))
        if out.requires_grad:
            def backprop():
                self._accum(-out.grad)
            out._backprop = backprop
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = self._node(self.data * other.data, (self, other))
        if out.requires_grad:
            def backprop():
                if self.requires_grad:
                    self._accum(_unbroadcast(out.grad * other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(out.grad * self.data, other.data.shape))
            out._backprop = backprop
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = self._node(self.data / other.data, (self, other))
        if out.requires_grad:
            def backprop():
                if self.requires_grad:
                    self._accum(_unbroadcast(out.grad / other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(
                        _unbroadcast(-out.grad * self.data / other.data**2, other.data.shape)
                    )
            out._backprop = backprop
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return self._coerce(other) / self

    def __matmul__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = self._node(self.data @ other.data, (self, other))
        if out.requires_grad:
            def backprop():
                if self.requires_grad:
                    g = out.grad @ np.swapaxes(other.data, -1, -2)
                    self._accum(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    g = np.swapaxes(self.data, -1, -2) @ out.grad
                    other._accum(_unbroadcast(g, other.data.shape))
            out._backprop = backprop
        return out

    def relu(self) -> "Tensor":
        # subgradient at 0 is taken as 0
        mask = self.data > 0
        out = self._node(np.where(mask, self.data, 0.0), (self,))
        if out.requires_grad:
            def backprop():
                self._accum(out.grad * mask)
            out._backprop = backprop
        return out

    def elu(self, alpha: float = 1.0) -> "Tensor":
        neg = np.minimum(self.data, 0.0)
        val = np.where(self.data > 0, self.data, alpha * np.expm1(neg))
        out = self._node(val, (self,))
        if out.requires_grad:
            # d/dx = 1 for x > 0, alpha * e^x otherwise (value + alpha)
            deriv = np.where(self.data > 0, 1.0, val + alpha)
            def backprop():
                self._accum(out.grad * deriv)
            out._backprop = backprop
        return out

    def softplus(self) -> "Tensor":
        # overflow-safe: softplus(x) = max(x, 0) + log1p(exp(-|x|))
        val = np.maximum(self.data, 0.0) + np.log1p(np.exp(-np.abs(self.data)))
        out = self._node(val, (self,))
        if out.requires_grad:
            sig = _sigmoid(self.data)
            def backprop():
                self._accum(out.grad * sig)
            out._backprop = backprop
        return out

    def sum(self, axis: Axis = None, keepdims: bool = False) -> "Tensor":
        out = self._node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def backprop():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape).copy())
            out._backprop = backprop
        return out

    def mean(self, axis: Axis = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        elif isinstance(axis, int):
            count = self.data.shape[axis]
        else:
            count = int(np.prod([self.data.shape[a] for a in axis]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape: int) -> "Tensor":
        out = self._node(self.data.reshape(*shape), (self,))
        if out.requires_grad:
            def backprop():
                self._accum(out.grad.reshape(self.data.shape))
            out._backprop = backprop
        return out

    def transpose_last(self) -> "Tensor":
        out = self._node(np.swapaxes(self.data, -1, -2), (self,))
        if out.requires_grad:
            def backprop():
                self._accum(np.swapaxes(out.grad, -1, -2))
            out._backprop = backprop
        return out

    def rows(self, indices: np.ndarray) -> "Tensor":
        """Gather rows of a 2-D table: self (V, d), indices int array of any
        shape S, result S + (d,). The scatter on backward uses np.add.at so
        repeated indices accumulate."""
        idx = np.asarray(indices)
        out = self._node(self.data[idx], (self,))
        if out.requires_grad:
            def backprop():
                if self.grad is None:
                    self.grad = np.zeros_like(self.data)
                np.add.at(self.grad, idx, out.grad)
            out._backprop = backprop
        return out

    def select_tokens(self, indices: Sequence[int]) -> "Tensor":
        """Pick entries along axis 1 of a 3-D tensor: (B, m, d) -> (B, k, d)."""
        idx = list(int(i) for i in indices)
        out = self._node(self.data[:, idx, :], (self,))
        if out.requires_grad:
            def backprop():
                if self.grad is None:
                    self.grad = np.zeros_like(self.data)
                for j, i in enumerate(idx):
                    self.grad[:, i, :] += out.grad[:, j, :]
            out._backprop = backprop
        return out

    def softmax_last(self) -> "Tensor":
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        val = e / e.sum(axis=-1, keepdims=True)
        out = self._node(val, (self,))
        if out.requires_grad:
            def backprop():
                g = out.grad
                dot = (g * val).sum(axis=-1, keepdims=True)
                self._accum(val * (g - dot))
            out._backprop = backprop
        return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    """Numerically safe logistic function on raw arrays (no graph)."""
    return _sigmoid(np.asarray(z, dtype=np.float64))


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along an axis; gradient splits back by segment."""
    ts = list(tensors)
    data = np.concatenate([t.data for t in ts], axis=axis)
    needs = any(t.requires_grad for t in ts)
    out = Tensor(data, requires_grad=needs, _parents=tuple(ts) if needs else ())
    if needs:
        sizes = [t.data.shape[axis] for t in ts]
        offsets = np.cumsum([0] + sizes)
        def backprop():
            for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * data.ndim
                    sl[axis] = slice(int(lo), int(hi))
                    t._accum(out.grad[tuple(sl)])
        out._backprop = backprop
    return out


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy from raw logits.

    Uses the identity bce(l, y) = softplus(l) - y*l, whose gradient is
    sigmoid(l) - y; everything stays finite for any logit magnitude.
    """
    y = Tensor(np.asarray(targets, dtype=np.float64))
    per_sample = logits.softplus() - y * logits
    return per_sample.mean()
