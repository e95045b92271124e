"""Dense float64 tensors with reverse-mode automatic differentiation.

The computation graph is built on the fly: every operation links its output
to its inputs and stores a closure that propagates the upstream gradient.
``backward()`` on a scalar replays those closures in reverse topological
order, so each node is visited exactly once per call.

Broadcasting is deliberately narrow: same-shape elementwise ops, a scalar
against anything, and a row vector (shape ``(n,)`` or ``(1, n)``) against the
rows of an ``(m, n)`` matrix. Everything needed here is expressible within
those rules, and keeping them small keeps the gradient rules small.

Gradients accumulate into ``.grad`` across separate graphs sharing leaves;
call ``zero_grad()`` between optimizer steps. Calling ``backward()`` twice on
the same root is an error (the replay would double-count through retained
intermediate gradients).
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, DimensionError, NumericError

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (values still computed)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "_prev", "_backward", "_backward_ran")

    def __init__(self, data, _children: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self._prev = _children if _grad_enabled else ()
        self._backward = lambda: None
        self._backward_ran = False

    # ------------------------------------------------------------------
    # housekeeping

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    # ------------------------------------------------------------------
    # broadcasting helpers

    def _check_broadcast(self, other: "Tensor"):
        """Allow same-shape, scalar-vs-anything, and row-vector-vs-matrix."""
        a, b = self, other
        if a.shape == b.shape or a.data.size == 1 or b.data.size == 1:
            return
        for mat, row in ((a, b), (b, a)):
            if mat.data.ndim == 2 and row.shape in ((mat.shape[1],), (1, mat.shape[1])):
                return
        raise DimensionError(
            f"incompatible shapes {self.shape} and {other.shape}"
        )

    @staticmethod
    def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        """Sum ``grad`` down to ``shape`` (undo scalar / row broadcasting)."""
        if grad.shape == shape:
            return grad
        if int(np.prod(shape)) == 1:
            return grad.sum().reshape(shape)
        return grad.sum(axis=0).reshape(shape)

    # ------------------------------------------------------------------
    # arithmetic primitives

    def __add__(self, other):
        other = _as_tensor(other)
        self._check_broadcast(other)
        out = Tensor(self.data + other.data, (self, other))

        def _back():
            self.grad += Tensor._reduce_to(out.grad, self.shape)
            other.grad += Tensor._reduce_to(out.grad, other.shape)

        out._backward = _back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))

        def _back():
            self.grad += -out.grad

        out._backward = _back
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        self._check_broadcast(other)
        out = Tensor(self.data * other.data, (self, other))

        def _back():
            self.grad += Tensor._reduce_to(out.grad * other.data, self.shape)
            other.grad += Tensor._reduce_to(out.grad * self.data, other.shape)

        out._backward = _back
        return out

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = _as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise DimensionError(
                f"matmul needs 2-D operands, got {self.shape} and {other.shape}"
            )
        if self.shape[1] != other.shape[0]:
            raise DimensionError(
                f"matmul inner extents differ: {self.shape} vs {other.shape}"
            )
        out = Tensor(self.data @ other.data, (self, other))

        def _back():
            self.grad += out.grad @ other.data.T
            other.grad += self.data.T @ out.grad

        out._backward = _back
        return out

    # ------------------------------------------------------------------
    # elementwise functions

    def exp(self):
        out = Tensor(np.exp(self.data), (self,))

        def _back():
            self.grad += out.grad * out.data

        out._backward = _back
        return out

    def log(self):
        out = Tensor(np.log(self.data), (self,))

        def _back():
            self.grad += out.grad / self.data

        out._backward = _back
        return out

    def square(self):
        out = Tensor(self.data * self.data, (self,))

        def _back():
            self.grad += out.grad * 2.0 * self.data

        out._backward = _back
        return out

    def clamp_min(self, lo: float):
        """Elementwise max(x, lo); gradient is zero on clamped entries."""
        out = Tensor(np.maximum(self.data, lo), (self,))

        def _back():
            self.grad += out.grad * (self.data >= lo)

        out._backward = _back
        return out

    # ------------------------------------------------------------------
    # reductions

    def sum(self):
        out = Tensor(self.data.sum(), (self,))

        def _back():
            self.grad += out.grad  # scalar broadcast

        out._backward = _back
        return out

    def mean(self):
        out = Tensor(self.data.mean(), (self,))

        def _back():
            self.grad += out.grad / self.data.size

        out._backward = _back
        return out

    def sumsq(self):
        """Squared L2 norm of all entries, as a scalar."""
        out = Tensor((self.data * self.data).sum(), (self,))

        def _back():
            self.grad += out.grad * 2.0 * self.data

        out._backward = _back
        return out

    # ------------------------------------------------------------------
    # backward

    def backward(self):
        if self.data.size != 1:
            raise ContractViolation(
                f"backward() root must be a scalar, got shape {self.shape}"
            )
        if self._backward_ran:
            raise ContractViolation(
                "backward() already ran on this root; rebuild the graph instead"
            )
        self._backward_ran = True
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))
        self.grad += 1.0
        for node in reversed(order):
            node._backward()


# ----------------------------------------------------------------------
# named operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a @ b


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    """Elementwise max(x, slope * x) for slope in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ContractViolation(f"leaky_relu slope must be in (0, 1), got {slope}")
    out = Tensor(np.maximum(x.data, slope * x.data), (x,))

    def _back():
        x.grad += out.grad * np.where(x.data > 0.0, 1.0, slope)

    out._backward = _back
    return out


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax of an (n, c) matrix, max-subtracted for stability."""
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax needs an (n, c) matrix, got {logits.shape}")
    if not np.isfinite(logits.data).all():
        raise NumericError("softmax received non-finite logits")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s, (logits,))

    def _back():
        g = out.grad
        dot = (g * s).sum(axis=1, keepdims=True)
        logits.grad += s * (g - dot)

    out._backward = _back
    return out


def gather_rows(x: Tensor, indices) -> Tensor:
    """Select rows of ``x`` by integer index; repeated indices accumulate."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError(f"gather_rows needs a 1-D index list, got {idx.shape}")
    if x.data.ndim == 0:
        raise DimensionError("gather_rows needs at least a 1-D tensor")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexError(
            f"gather_rows index out of range for {x.shape[0]} rows"
        )
    out = Tensor(x.data[idx], (x,))

    def _back():
        np.add.at(x.grad, idx, out.grad)

    out._backward = _back
    return out


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; all other extents must match."""
    if not tensors:
        raise ContractViolation("concat needs at least one tensor")
    shapes = [t.shape for t in tensors]
    base = list(shapes[0])
    for s in shapes[1:]:
        trimmed_a = [e for i, e in enumerate(base) if i != axis]
        trimmed_b = [e for i, e in enumerate(s) if i != axis]
        if len(s) != len(base) or trimmed_a != trimmed_b:
            raise DimensionError(f"concat shapes incompatible: {shapes}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    offsets = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _back():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * out.data.ndim
            sl[axis] = slice(lo, hi)
            t.grad += out.grad[tuple(sl)]

    out._backward = _back
    return out
