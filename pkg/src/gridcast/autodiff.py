"""Dense float64 tensors with reverse-mode automatic differentiation.

Every Tensor doubles as its computation-graph node: it records the op that
produced it, references to its inputs, and a gradient buffer of the same
shape as its value. Graphs are acyclic by construction (each op returns a
fresh node). The op set is deliberately small: exactly the closure needed
by the forecasting model (matmul, elementwise arithmetic, sigmoid, tanh,
concat, slicing, reshape/transpose, sum/mean, abs, maximum, and a
two-operand einsum for the kernel contractions).

Gradients accumulate additively into ``.grad`` buffers; the caller owns the
zeroing (``zero_grad``). Values are stored read-only, so tensors are safe
for concurrent readers; parameter updates rebind ``.data`` via ``assign``.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    if arr.flags.writeable:
        arr.flags.writeable = False
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array plus the graph record that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, values, requires_grad: bool = False):
        arr = _as_array(values)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        if arr is values or not arr.flags.owndata:
            arr = arr.copy()  # never freeze or alias a caller-owned buffer
        self.data = _freeze(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._op = "leaf"

    # -- graph construction -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents, op: str, backward):
        out = cls.__new__(cls)
        out.data = _freeze(np.asarray(data, dtype=np.float64))
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        out._op = op
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(op={self._op}, shape={self.shape})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    # -- parameter lifecycle -------------------------------------------------

    def assign(self, values) -> None:
        """Rebind the value array (parameter update between training steps)."""
        arr = _as_array(values)
        if arr.shape != self.data.shape:
            raise ShapeError(f"assign shape {arr.shape} != {self.data.shape}")
        self.data = _freeze(arr.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            # copy: g may be a view of (or may alias) another node's buffer
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    # -- backward ------------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar root.

        Accumulates d(root)/d(node) into every reachable node's ``.grad``,
        summing over all paths. Iterative topological order, so deep
        recurrent graphs do not hit the recursion limit.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward() requires a scalar root, got shape {self.shape}")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def lift(x) -> Tensor:
    """Wrap scalars/arrays as constant tensors; pass tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


# -- elementwise ops -------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._from_op(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return Tensor._from_op(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = lift(a), lift(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._from_op(a.data * b.data, (a, b), "mul", backward)


def sigmoid(x) -> Tensor:
    x = lift(x)
    # numerically stable split by sign: exp(-|x|) never overflows, and
    # 1/(1+z) vs z/(1+z) are the two sign branches of the same quantity
    d = x.data
    z = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out * (1.0 - out))

    return Tensor._from_op(out, (x,), "sigmoid", backward)


def tanh(x) -> Tensor:
    x = lift(x)
    out = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - out * out))

    return Tensor._from_op(out, (x,), "tanh", backward)


def absolute(x) -> Tensor:
    """|x| with subgradient 0 at the kink."""
    x = lift(x)
    sign = np.sign(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * sign)

    return Tensor._from_op(np.abs(x.data), (x,), "abs", backward)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to the first operand."""
    a, b = lift(a), lift(b)
    _check_broadcast(a, b, "maximum")
    mask = a.data >= b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * mask, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * ~mask, b.shape))

    return Tensor._from_op(np.maximum(a.data, b.data), (a, b), "maximum", backward)


# -- structural ops ---------------------------------------------------------


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [lift(t) for t in tensors]
    shapes = [t.shape for t in ts]
    ref = list(shapes[0])
    ax = axis % len(ref)
    for s in shapes[1:]:
        if len(s) != len(ref) or any(s[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}")
    sizes = [s[ax] for s in shapes]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * len(ref)
                idx[ax] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return Tensor._from_op(np.concatenate([t.data for t in ts], axis=ax),
                           ts, "concat", backward)


def take(x, key) -> Tensor:
    """Basic slicing/indexing; gradient scatters back into the sliced region."""
    x = lift(x)
    out = x.data[key]

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[key] += g
            x._accumulate(full)

    return Tensor._from_op(out, (x,), "slice", backward)


def reshape(x, shape) -> Tensor:
    x = lift(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return Tensor._from_op(out, (x,), "reshape", backward)


def transpose(x, axes) -> Tensor:
    x = lift(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.transpose(inverse))

    return Tensor._from_op(x.data.transpose(axes), (x,), "transpose", backward)


# -- reductions -------------------------------------------------------------


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = lift(x)
    if axis is not None and not isinstance(axis, int):
        raise ShapeError("sum supports a single integer axis or None")

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            x._accumulate(np.full(x.shape, np.asarray(g).reshape(())))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg, x.shape))

    return Tensor._from_op(x.data.sum(axis=axis, keepdims=keepdims),
                           (x,), "sum", backward)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = lift(x)
    if axis is not None and not isinstance(axis, int):
        raise ShapeError("mean supports a single integer axis or None")
    count = x.data.size if axis is None else x.data.shape[axis]

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            x._accumulate(np.full(x.shape, np.asarray(g).reshape(()) / count))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg / count, x.shape))

    return Tensor._from_op(x.data.mean(axis=axis, keepdims=keepdims),
                           (x,), "mean", backward)


# -- contractions -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product over the trailing two axes; leading axes broadcast."""
    a, b = lift(a), lift(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ, {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return Tensor._from_op(out, (a, b), "matmul", backward)


_GEMM_PLANS: dict = {}
"""Per-subscripts rewrite plans for `_pair_einsum` (None = not rewritable)."""


def _gemm_plan(subscripts: str):
    """Plan a two-operand einsum as transpose -> batched matmul -> transpose.

    numpy's default einsum evaluates with naive C loops and never reaches
    BLAS, which makes the recurrent kernel contractions the training
    bottleneck. Any einsum obeying einsum2's restrictions factors exactly:
    group each label as batch (both inputs and output), contracted (both
    inputs only), or free to one side, then the result is a single batched
    GEMM. Returns None when the subscripts do not factor (caller falls back
    to np.einsum).
    """
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    if len(set(out)) != len(out):
        return None
    if any(c not in sa and c not in sb for c in out):
        return None
    batch = [c for c in out if c in sa and c in sb]
    afree = [c for c in sa if c not in sb]
    bfree = [c for c in sb if c not in sa]
    contracted = [c for c in sa if c in sb and c not in out]
    a_perm = tuple(sa.index(c) for c in batch + afree + contracted)
    b_perm = tuple(sb.index(c) for c in batch + contracted + bfree)
    result_order = batch + afree + bfree
    out_perm = tuple(result_order.index(c) for c in out)
    shared_a = tuple(sa.index(c) for c in batch + contracted)
    shared_b = tuple(sb.index(c) for c in batch + contracted)
    return (a_perm, b_perm, len(batch), len(afree), out_perm, shared_a, shared_b)


def _pair_einsum(subscripts: str, a_data: np.ndarray, b_data: np.ndarray) -> np.ndarray:
    """Evaluate a two-operand einsum through BLAS where possible."""
    if subscripts in _GEMM_PLANS:
        plan = _GEMM_PLANS[subscripts]
    else:
        plan = _GEMM_PLANS[subscripts] = _gemm_plan(subscripts)
    if plan is None:
        return np.einsum(subscripts, a_data, b_data)
    a_perm, b_perm, n_batch, n_afree, out_perm, shared_a, shared_b = plan
    if any(a_data.shape[i] != b_data.shape[j] for i, j in zip(shared_a, shared_b)):
        # Mismatched shared extents: let np.einsum apply its own rules.
        return np.einsum(subscripts, a_data, b_data)
    at = a_data.transpose(a_perm)
    bt = b_data.transpose(b_perm)
    batch_shape = at.shape[:n_batch]
    free_a = at.shape[n_batch:n_batch + n_afree]
    contract = at.shape[n_batch + n_afree:]
    free_b = bt.shape[at.ndim - n_afree:]
    flat = np.matmul(
        at.reshape(math.prod(batch_shape), math.prod(free_a), math.prod(contract)),
        bt.reshape(math.prod(batch_shape), math.prod(contract), math.prod(free_b)),
    )
    result = flat.reshape(batch_shape + free_a + free_b)
    return result.transpose(out_perm)


def einsum2(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum with autodiff.

    Restrictions (validated): explicit "in1,in2->out" form, no ellipsis, no
    repeated index within one operand, and every input index must appear in
    the output or in the other operand. Under those rules each input's
    gradient is itself an einsum with the output subscript swapped in.
    """
    a, b = lift(a), lift(b)
    if "->" not in subscripts or "..." in subscripts:
        raise ShapeError(f"einsum2: unsupported subscripts {subscripts!r}")
    lhs, out_sub = subscripts.split("->")
    parts = lhs.split(",")
    if len(parts) != 2:
        raise ShapeError("einsum2 takes exactly two operands")
    sub_a, sub_b = parts
    for sub, t in ((sub_a, a), (sub_b, b)):
        if len(set(sub)) != len(sub):
            raise ShapeError(f"einsum2: repeated index within operand {sub!r}")
        if len(sub) != t.data.ndim:
            raise ShapeError(f"einsum2: {sub!r} does not match shape {t.shape}")
    for ch in sub_a:
        if ch not in out_sub and ch not in sub_b:
            raise ShapeError(f"einsum2: index {ch!r} summed within a single operand")
    for ch in sub_b:
        if ch not in out_sub and ch not in sub_a:
            raise ShapeError(f"einsum2: index {ch!r} summed within a single operand")
    try:
        out = _pair_einsum(subscripts, a.data, b.data)
    except ValueError:
        raise ShapeError(
            f"einsum2 {subscripts!r}: shapes {a.shape} and {b.shape} incompatible")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_pair_einsum(f"{out_sub},{sub_b}->{sub_a}", g, b.data))
        if b.requires_grad:
            b._accumulate(_pair_einsum(f"{sub_a},{out_sub}->{sub_b}", a.data, g))

    return Tensor._from_op(out, (a, b), "einsum", backward)


# -- verification harness ---------------------------------------------------

FD_ABS_FLOOR = 1e-3
"""Denominator floor for finite-difference relative errors: coordinates whose
analytic gradient magnitude is below this floor are effectively compared on
an absolute scale of the floor."""


def finite_diff_check(f, params, h: float = 1e-5, eps_abs: float = FD_ABS_FLOOR) -> float:
    """Max relative disagreement between backward() and central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor built from
    the current values of ``params``. Returns
    max over coordinates of |analytic - central| / (|analytic| + eps_abs).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = list(params)
    for p in params:
        p.zero_grad()
    out = f()
    out.backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy()
                for p in params]

    worst = 0.0
    for p, ana in zip(params, analytic):
        base = p.data.copy()
        flat = base.reshape(-1)
        ana_flat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            p.assign(base)
            hi = f().item()
            flat[i] = orig - h
            p.assign(base)
            lo = f().item()
            flat[i] = orig
            p.assign(base)
            fd = (hi - lo) / (2.0 * h)
            err = abs(ana_flat[i] - fd) / (abs(ana_flat[i]) + eps_abs)
            if err > worst:
                worst = err
    return worst
