"""Reverse-mode differentiation tape over dense (H, W, C) float64 grids.

The tape records a fixed op set (convolution, pooling, upsampling, channel
concat, elementwise arithmetic, reductions, the windowed soft-argmax) and
replays it backwards to accumulate gradients into parameter nodes. Node ids
are list indices, so inputs always precede consumers and the reverse sweep
is a plain descending loop. Everything is float64 and single-threaded per
tape; evaluation of the same graph on the same inputs is bit-reproducible.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K


def as_grid(value):
    """Coerce to a float64 grid array.

    Scalars become (1,1,1), 1-D becomes a per-channel (1,1,C) row, 2-D
    becomes single-channel (H,W,1); 3-D grids and 4-D conv kernels pass
    through unchanged.
    """
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, 1, -1)
    elif arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim not in (3, 4):
        raise ValueError(f"grid must be at most 4-D, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


@dataclass
class Node:
    op: str
    inputs: tuple
    value: np.ndarray
    requires_grad: bool
    grad: np.ndarray | None = None
    name: str | None = None
    meta: dict = field(default_factory=dict)


class Tape:
    """Append-only op recorder with reverse-mode backward."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _push(self, op, inputs, value, requires_grad, name=None, meta=None):
        self.nodes.append(
            Node(op, tuple(inputs), value, requires_grad, name=name, meta=meta or {})
        )
        return len(self.nodes) - 1

    def value(self, nid):
        return self.nodes[nid].value

    def grad(self, nid):
        return self.nodes[nid].grad

    # -- leaves ----------------------------------------------------------

    def const(self, value):
        return self._push("const", (), as_grid(value), requires_grad=False)

    def param(self, name, value):
        return self._push("param", (), as_grid(value), requires_grad=True, name=name)

    # -- structural ops ---------------------------------------------------

    def conv2d(self, x, kernel, bias, stride=1, padding=0):
        """Cross-correlation with zero padding; kernel is (kh, kw, Cin, Cout)."""
        xv, kv, bv = self.value(x), self.nodes[kernel].value, self.nodes[bias].value
        if kv.ndim != 4:
            raise ValueError(f"conv kernel must be 4-D (kh,kw,Cin,Cout), got {kv.shape}")
        kh, kw, cin, cout = kv.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel dims must be odd, got {kh}x{kw}")
        if xv.shape[2] != cin:
            raise ValueError(
                f"conv2d channel mismatch: input {xv.shape} vs kernel {kv.shape}"
            )
        if bv.size != cout:
            raise ValueError(f"bias size {bv.size} != output channels {cout}")
        if stride < 1 or padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        h, w, _ = xv.shape
        ho = (h + 2 * padding - kh) // stride + 1
        wo = (w + 2 * padding - kw) // stride + 1
        if ho < 1 or wo < 1:
            raise ValueError(
                f"conv2d output would be empty: input {xv.shape}, kernel {kv.shape}, "
                f"stride {stride}, padding {padding}"
            )
        xp = np.pad(xv, ((padding, padding), (padding, padding), (0, 0)))
        out = K.conv2d_forward(xp, kv, bv.ravel(), stride)
        req = any(self.nodes[n].requires_grad for n in (x, kernel, bias))
        return self._push(
            "conv2d",
            (x, kernel, bias),
            out,
            req,
            meta={"stride": stride, "padding": padding, "xp": xp},
        )

    def relu(self, x):
        xv = self.value(x)
        return self._push("relu", (x,), np.maximum(xv, 0.0), self.nodes[x].requires_grad)

    def sigmoid(self, x):
        xv = self.value(x)
        # split by sign to avoid overflow in exp
        out = np.where(xv >= 0, 1.0 / (1.0 + np.exp(-np.abs(xv))),
                       np.exp(-np.abs(xv)) / (1.0 + np.exp(-np.abs(xv))))
        return self._push("sigmoid", (x,), out, self.nodes[x].requires_grad)

    def maxpool2(self, x):
        xv = self.value(x)
        h, w, _ = xv.shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool2 needs even H and W, got {xv.shape}")
        out, arg = K.maxpool2_forward(xv)
        return self._push(
            "maxpool2", (x,), out, self.nodes[x].requires_grad, meta={"arg": arg}
        )

    def upsample2(self, x):
        return self._push(
            "upsample2", (x,), K.upsample2_forward(self.value(x)),
            self.nodes[x].requires_grad,
        )

    def concat_channels(self, a, b):
        av, bv = self.value(a), self.value(b)
        if av.shape[:2] != bv.shape[:2]:
            raise ValueError(
                f"concat_channels spatial mismatch: {av.shape} vs {bv.shape}"
            )
        req = self.nodes[a].requires_grad or self.nodes[b].requires_grad
        return self._push(
            "concat", (a, b), np.concatenate([av, bv], axis=2), req,
            meta={"split": av.shape[2]},
        )

    def softargmax3(self, x, temperature):
        """3x3 softmax-weighted window sum; border windows exclude outside pixels."""
        xv = self.value(x)
        if xv.shape[2] != 1:
            raise ValueError(f"softargmax3 needs a single channel, got {xv.shape}")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        out = K.softargmax3_forward(np.ascontiguousarray(xv[:, :, 0]), temperature)
        return self._push(
            "softargmax3", (x,), out[:, :, None], self.nodes[x].requires_grad,
            meta={"temperature": temperature},
        )

    # -- elementwise / reductions ------------------------------------------

    def _binary(self, op, a, b):
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape:
            raise ValueError(f"{op} shape mismatch: {av.shape} vs {bv.shape}")
        req = self.nodes[a].requires_grad or self.nodes[b].requires_grad
        if op == "add":
            out = av + bv
        elif op == "sub":
            out = av - bv
        else:
            out = av * bv
        return self._push(op, (a, b), out, req)

    def add(self, a, b):
        return self._binary("add", a, b)

    def sub(self, a, b):
        return self._binary("sub", a, b)

    def mul(self, a, b):
        return self._binary("mul", a, b)

    def affine(self, x, scale, shift=0.0):
        """Elementwise scale * x + shift with python-float coefficients."""
        out = self.value(x) * scale + shift
        return self._push(
            "affine", (x,), out, self.nodes[x].requires_grad, meta={"scale": scale}
        )

    def sum_all(self, x):
        out = np.array(self.value(x).sum()).reshape(1, 1, 1)
        return self._push("sum", (x,), out, self.nodes[x].requires_grad)

    def div(self, a, b):
        """Scalar (1,1,1) division a / b."""
        av, bv = self.value(a), self.value(b)
        if av.shape != (1, 1, 1) or bv.shape != (1, 1, 1):
            raise ValueError(f"div expects scalar nodes, got {av.shape} / {bv.shape}")
        req = self.nodes[a].requires_grad or self.nodes[b].requires_grad
        return self._push("div", (a, b), av / bv, req)

    # -- backward -----------------------------------------------------------

    def _accum(self, nid, g):
        node = self.nodes[nid]
        if not node.requires_grad:
            return
        if node.grad is None:
            node.grad = np.zeros_like(node.value)
        node.grad += g

    def backward(self, loss):
        """Reverse sweep from a scalar loss node.

        Returns {param name: gradient}. Gradients accumulate in descending
        node-id order, which is fixed by construction.
        """
        ln = self.nodes[loss]
        if ln.value.shape != (1, 1, 1):
            raise ValueError(f"loss must be scalar (1,1,1), got {ln.value.shape}")
        for n in self.nodes:
            n.grad = None
        ln.grad = np.ones((1, 1, 1))
        for nid in range(loss, -1, -1):
            node = self.nodes[nid]
            if node.grad is None or not node.requires_grad:
                continue
            self._backward_node(nid, node)
        return {
            n.name: n.grad if n.grad is not None else np.zeros_like(n.value)
            for n in self.nodes
            if n.op == "param"
        }

    def _backward_node(self, nid, node):
        g = node.grad
        op = node.op
        if op in ("const", "param"):
            return
        if op == "conv2d":
            x, kernel, bias = node.inputs
            stride = node.meta["stride"]
            pad = node.meta["padding"]
            xp = node.meta["xp"]
            kv = self.nodes[kernel].value
            gxp, gk = K.conv2d_backward(xp, kv, g, stride)
            if self.nodes[x].requires_grad:
                h, w, _ = self.nodes[x].value.shape
                self._accum(x, gxp[pad : pad + h, pad : pad + w])
            if self.nodes[kernel].requires_grad:
                self.nodes[kernel].grad = (
                    gk if self.nodes[kernel].grad is None
                    else self.nodes[kernel].grad + gk
                )
            if self.nodes[bias].requires_grad:
                gb = g.sum(axis=(0, 1)).reshape(self.nodes[bias].value.shape)
                self._accum(bias, gb)
        elif op == "relu":
            (x,) = node.inputs
            self._accum(x, g * (self.nodes[x].value > 0.0))
        elif op == "sigmoid":
            (x,) = node.inputs
            y = node.value
            self._accum(x, g * y * (1.0 - y))
        elif op == "maxpool2":
            (x,) = node.inputs
            self._accum(x, K.maxpool2_backward(node.meta["arg"], g))
        elif op == "upsample2":
            (x,) = node.inputs
            self._accum(x, K.upsample2_backward(g))
        elif op == "concat":
            a, b = node.inputs
            split = node.meta["split"]
            self._accum(a, g[:, :, :split])
            self._accum(b, g[:, :, split:])
        elif op == "softargmax3":
            (x,) = node.inputs
            xv = np.ascontiguousarray(self.nodes[x].value[:, :, 0])
            gx = K.softargmax3_backward(
                xv, node.value[:, :, 0], g[:, :, 0], node.meta["temperature"]
            )
            self._accum(x, gx[:, :, None])
        elif op == "add":
            a, b = node.inputs
            self._accum(a, g)
            self._accum(b, g)
        elif op == "sub":
            a, b = node.inputs
            self._accum(a, g)
            self._accum(b, -g)
        elif op == "mul":
            a, b = node.inputs
            self._accum(a, g * self.nodes[b].value)
            self._accum(b, g * self.nodes[a].value)
        elif op == "affine":
            (x,) = node.inputs
            self._accum(x, g * node.meta["scale"])
        elif op == "sum":
            (x,) = node.inputs
            self._accum(x, np.full_like(self.nodes[x].value, g[0, 0, 0]))
        elif op == "div":
            a, b = node.inputs
            av, bv = self.nodes[a].value, self.nodes[b].value
            self._accum(a, g / bv)
            self._accum(b, -g * av / (bv * bv))
        else:  # pragma: no cover
            raise RuntimeError(f"no backward rule for op {op!r}")


def mean_all(tape, x):
    """Scalar mean of all elements, as a tape node."""
    n = tape.value(x).size
    return tape.affine(tape.sum_all(x), 1.0 / n)
