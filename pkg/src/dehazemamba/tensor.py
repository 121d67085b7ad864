"""Dense tensors with a reverse-mode differentiation tape.

A Tensor wraps a row-major float32 ndarray. Gradient flow is define-by-run:
while a Tape is active, each primitive in :mod:`dehazemamba.ops` records one
node (op kind, input node ids, backward closure). ``Tape.backward`` replays
the record in reverse creation order, which is a valid topological order
because nodes are appended strictly after their inputs.

``check_mode()`` switches newly created tensors to float64 so that
finite-difference gradient oracles run at meaningful tolerances; the product
path stays float32 throughout.

A tape and the tensors recorded on it are confined to a single worker;
independent tapes may live in separate processes.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .errors import TapeError

_default_dtype = np.float32
_active_tape: "Tape | None" = None


def default_dtype() -> np.dtype:
    """dtype for newly created tensors: float32, or float64 in check mode."""
    return _default_dtype


@contextlib.contextmanager
def check_mode():
    """Create tensors in float64 while the context is active.

    Used by gradient-check oracles; everything built inside the context
    (parameters, inputs, intermediate values) carries float64 data.
    """
    global _default_dtype
    saved = _default_dtype
    _default_dtype = np.float64
    try:
        yield
    finally:
        _default_dtype = saved


def active_tape() -> "Tape | None":
    return _active_tape


class Tensor:
    """A dense n-dimensional float array, optionally tracked on a tape."""

    __slots__ = ("data", "requires_grad", "tape", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_default_dtype)
        self.requires_grad = requires_grad
        self.tape: Tape | None = None
        self.node: int | None = None

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        """Wrap an ndarray without copying or changing its dtype."""
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.tape = None
        out.node = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """A view of the same data with no tape association."""
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        tag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # Arithmetic operators are bound by dehazemamba.ops at import time so the
    # op implementations can live next to their backward passes.


def parameter(data, rng: np.random.Generator | None = None) -> Tensor:
    """Create a trainable leaf tensor."""
    t = Tensor(data, requires_grad=True)
    return t


class _Node:
    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op: str, inputs: tuple, backward: Callable | None):
        self.op = op
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of primitive applications plus a gradient store.

    Gradients are keyed by node id. Repeated ``backward`` calls without an
    intervening ``zero()`` accumulate into the store.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self.grads: dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        global _active_tape
        if _active_tape is not None:
            raise TapeError("a tape is already active; tapes do not nest")
        _active_tape = self
        return self

    def __exit__(self, *exc) -> bool:
        global _active_tape
        _active_tape = None
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def watch(self, t: Tensor) -> int:
        """Register a leaf tensor so it can receive a gradient."""
        if t.tape is not self or t.node is None:
            t.tape = self
            self._nodes.append(_Node("leaf", (), None))
            t.node = len(self._nodes) - 1
        return t.node

    def _dep(self, t: Tensor) -> int | None:
        if t.tape is self and t.node is not None:
            return t.node
        if t.requires_grad:
            # A trainable leaf (or a value carried over from a dead tape)
            # joins this tape as a fresh leaf.
            return self.watch(t)
        return None

    def record(self, op: str, out_data: np.ndarray, inputs: Sequence[Tensor],
               backward: Callable) -> Tensor:
        """Attach ``out_data`` to the tape as the result of ``op``."""
        ids = tuple(self._dep(t) for t in inputs)
        out = Tensor._wrap(out_data)
        if any(i is not None for i in ids):
            self._nodes.append(_Node(op, ids, backward))
            out.tape = self
            out.node = len(self._nodes) - 1
            out.requires_grad = True
        return out

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Accumulate d(loss)/d(node) for every node reachable from loss.

        ``loss`` must be a single-element tensor recorded on this tape.
        Returns the gradient store.
        """
        if loss.tape is not self or loss.node is None:
            raise TapeError("backward target is not attached to this tape")
        if loss.size != 1:
            raise TapeError(
                f"backward needs a single-element loss, got shape {loss.shape}")
        local: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
        for i in range(loss.node, -1, -1):
            g = local.get(i)
            if g is None:
                continue
            node = self._nodes[i]
            if node.backward is None:
                continue  # leaf: keep its entry for the merge below
            local.pop(i)
            igrads = node.backward(g)
            if isinstance(igrads, np.ndarray):
                igrads = (igrads,)
            if len(igrads) != len(node.inputs):
                raise TapeError(
                    f"op {self._nodes[i].op!r} returned {len(igrads)} "
                    f"gradients for {len(node.inputs)} inputs")
            for j, ig in zip(node.inputs, igrads):
                if j is None or ig is None:
                    continue
                held = local.get(j)
                local[j] = ig if held is None else held + ig
        for i, g in local.items():
            held = self.grads.get(i)
            self.grads[i] = g if held is None else held + g
        return self.grads

    def grad(self, t: Tensor) -> np.ndarray | None:
        """Gradient accumulated for ``t``, or None if detached/unreached."""
        if t.tape is not self or t.node is None:
            return None
        return self.grads.get(t.node)

    def zero(self) -> None:
        self.grads.clear()


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Run reverse-mode accumulation from ``loss`` on its own tape."""
    if loss.tape is None:
        raise TapeError("backward called on a tensor detached from any tape")
    return loss.tape.backward(loss)
