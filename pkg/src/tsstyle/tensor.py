"""Reverse-mode tensor engine: Tensor, GradTape, ParamStore, precision switch.

Everything upstream (encoders, denoiser, baselines) is built on this module.
The engine is deliberately minimal: it records vector-Jacobian closures on an
explicit tape during the forward pass and replays them in reverse creation
order, which is always a valid topological order.

Precision policy: fp32 is the working precision for training and sampling;
fp64 is switched on globally (or per-ParamStore via ``astype``) when gradients
are verified against finite differences.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_DTYPES = {"fp32": np.float32, "fp64": np.float64}
_default_dtype = np.float32


def set_default_dtype(dtype):
    """Set the global working precision ("fp32", "fp64", or a numpy dtype)."""
    global _default_dtype
    if isinstance(dtype, str):
        if dtype not in _DTYPES:
            raise ValueError(f"unknown precision {dtype!r}; expected 'fp32' or 'fp64'")
        dtype = _DTYPES[dtype]
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}; expected float32 or float64")
    _default_dtype = dtype


def default_dtype():
    return _default_dtype


@contextmanager
def using_dtype(dtype):
    """Temporarily switch the global working precision."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


class Tensor:
    """A numpy array plus gradient storage and a requires-grad flag.

    Tensors are immutable as far as the graph is concerned: no operation
    writes to an input array, so recorded closures can safely keep references
    to forward values.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # Arithmetic sugar; the functional forms live in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __neg__(self):
        from . import ops

        return ops.mul(self, -1.0)


def as_tensor(x, dtype=None):
    """Lift an array-like to a constant (non-differentiable) Tensor."""
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else _default_dtype)
    return Tensor(arr)


_TAPE_STACK: list["GradTape"] = []


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class GradTape:
    """Records operations during a forward pass so a scalar loss can be
    backpropagated to every parameter it touched.

    One tape per training step; tapes are single-threaded by design.
    """

    def __init__(self):
        self._records = []  # (out, parents, vjp) in creation order

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, out, parents, vjp):
        self._records.append((out, parents, vjp))

    def backward(self, loss):
        """Accumulate d(loss)/d(w) into ``.grad`` of every tensor on the tape.

        ``loss`` must be a scalar Tensor produced while this tape was active.
        """
        if not isinstance(loss, Tensor):
            raise TypeError("backward expects a Tensor loss")
        if loss.data.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for out, parents, vjp in reversed(self._records):
            g = out.grad
            if g is None:
                continue
            grads = vjp(g)
            for parent, pg in zip(parents, grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pg
                else:
                    parent.grad = parent.grad + pg

    def clear(self):
        self._records.clear()


def record_op(out_data, parents, vjp):
    """Wrap an op result, registering it on the active tape when any parent
    participates in differentiation."""
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, vjp)
    return out


class ParamStore:
    """Named, shaped parameter arrays with deterministic iteration order.

    Insertion order is the serialization order used by checkpoints, so two
    models built by the same init code always agree on layout.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def num_scalars(self) -> int:
        return sum(int(p.data.size) for p in self._params.values())

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def astype(self, dtype) -> "ParamStore":
        """Copy of the store with every parameter cast to ``dtype``."""
        out = ParamStore()
        for name, p in self._params.items():
            out.add(name, p.data.astype(dtype))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        """Load arrays by name; names and shapes must match exactly."""
        missing = [n for n in self._params if n not in state]
        extra = [n for n in state if n not in self._params]
        if missing or extra:
            raise ValueError(
                f"parameter name mismatch: missing={missing[:4]} extra={extra[:4]}"
            )
        for name, p in self._params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: checkpoint {arr.shape} "
                    f"vs model {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype)
