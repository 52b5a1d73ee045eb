"""Dense float64 tensors and the reverse-mode autodiff tape.

A :class:`Tensor` is an immutable n-dimensional array of 64-bit floats
(a 32-bit mode exists for benchmarking only).  Operations on tensors live
in :mod:`convmambanet.ndcore.ops`; when a :class:`Tape` is active and an
operand is tracked, each operation appends a node holding everything the
backward pass needs.  Node ids are append-ordered, so every node's inputs
have smaller ids and a single reverse sweep performs backpropagation.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class TapeError(RuntimeError):
    """Autodiff contract violation (non-scalar root, tensor from another tape, ...)."""


class ContractError(ValueError):
    """A caller-side precondition was violated (bad delta sign, mismatched state, ...)."""


class Tensor:
    """N-dimensional array of float64 values, row-major, immutable once built.

    ``node_id`` together with ``tape_token`` identifies the node this tensor
    corresponds to on one specific tape; both are ``None`` for untracked
    tensors and become stale (and are ignored) once that tape is gone.
    """

    __slots__ = ("data", "requires_grad", "node_id", "tape_token")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float64):
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.node_id: int | None = None
        self.tape_token: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """Read-only view of the underlying array."""
        view = self.data.view()
        view.flags.writeable = False
        return view

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    # Arithmetic sugar; the real implementations (and their tape nodes)
    # live in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, _wrap(other))

    def __radd__(self, other):
        from . import ops

        return ops.add(_wrap(other), self)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, _wrap(other))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(_wrap(other), self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, _wrap(other))

    def __rmul__(self, other):
        from . import ops

        return ops.mul(_wrap(other), self)

    def __neg__(self):
        from . import ops

        return ops.mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, _wrap(other))

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops

        return ops.reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops

        return ops.reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def row_major_index(shape: tuple[int, ...], coords: tuple[int, ...]) -> int:
    """Flat index of ``coords`` in a row-major layout of ``shape``."""
    if len(shape) != len(coords):
        raise ShapeError(f"coordinate rank {len(coords)} does not match shape {shape}")
    idx = 0
    for dim, c in zip(shape, coords):
        if not 0 <= c < dim:
            raise ShapeError(f"coordinate {coords} out of bounds for shape {shape}")
        idx = idx * dim + c
    return idx


def row_major_coords(shape: tuple[int, ...], index: int) -> tuple[int, ...]:
    """Inverse of :func:`row_major_index`."""
    coords = []
    for dim in reversed(shape):
        coords.append(index % dim)
        index //= dim
    if index:
        raise ShapeError(f"flat index out of bounds for shape {shape}")
    return tuple(reversed(coords))


class TapeNode:
    """One recorded operation: kind, input node ids, and a backward closure.

    The closure captures whatever forward values the gradient needs and maps
    the output gradient to one gradient array per input (``None`` for inputs
    that need no gradient).  ``inputs`` entries of ``-1`` mark untracked
    constants.
    """

    __slots__ = ("op", "inputs", "backward", "shape")

    def __init__(self, op, inputs, backward, shape):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        self.shape = shape


_TAPE_STACK: list["Tape"] = []
_TAPE_TOKEN = 0


def active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Append-only operation record for one differentiation pass.

    A tape is confined to a single thread: enter it as a context manager,
    run the forward computation, then call :func:`backward` (or
    ``tape.backward``) on a scalar root.  ``gradients`` maps node id to
    gradient tensor afterwards.
    """

    def __init__(self):
        global _TAPE_TOKEN
        _TAPE_TOKEN += 1
        self.token = _TAPE_TOKEN
        self.nodes: list[TapeNode] = []
        self.gradients: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _TAPE_STACK.pop()
        if popped is not self:
            raise TapeError("tape stack corrupted: exited a tape that was not innermost")
        return False

    def is_tracked(self, t: Tensor) -> bool:
        return (t.tape_token == self.token and t.node_id is not None) or t.requires_grad

    def watch(self, t: Tensor) -> int:
        """Register ``t`` as a leaf node on this tape (idempotent)."""
        if t.tape_token == self.token and t.node_id is not None:
            return t.node_id
        nid = len(self.nodes)
        self.nodes.append(TapeNode("leaf", (), None, t.data.shape))
        t.node_id = nid
        t.tape_token = self.token
        return nid

    def record(self, op: str, out: Tensor, inputs: tuple[Tensor, ...], make_backward) -> Tensor:
        """Append a node for ``out`` if any input is tracked.

        ``make_backward(needs)`` receives a per-input boolean tuple saying
        which gradients are actually consumed, and returns the backward
        closure ``g -> sequence of per-input gradients``.
        """
        tracked = tuple(self.is_tracked(t) for t in inputs)
        if not any(tracked):
            return out
        ids = tuple(self.watch(t) if tr else -1 for t, tr in zip(inputs, tracked))
        node = TapeNode(op, ids, make_backward(tracked), out.data.shape)
        out.node_id = len(self.nodes)
        out.tape_token = self.token
        self.nodes.append(node)
        return out

    def grad(self, t: Tensor) -> Tensor | None:
        """Gradient of the last backward pass w.r.t. ``t`` (None if unreached)."""
        if t.tape_token != self.token or t.node_id is None:
            return None
        return self.gradients.get(t.node_id)

    def backward(self, root: Tensor) -> None:
        backward(self, root)


def backward(tape: Tape, root: Tensor) -> None:
    """Reverse-accumulate gradients of a scalar ``root`` over ``tape``.

    Populates ``tape.gradients`` for every node reached from the root;
    leaves created with ``requires_grad=True`` are always reachable nodes
    of the graphs they participate in.
    """
    if root.data.size != 1:
        raise TapeError(f"backward root must be scalar, got shape {root.shape}")
    if root.tape_token != tape.token or root.node_id is None:
        raise TapeError("backward root was not recorded on this tape")

    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    owned = [False] * len(tape.nodes)
    grads[root.node_id] = np.ones_like(root.data)

    for nid in range(root.node_id, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        node = tape.nodes[nid]
        if node.backward is None:
            continue
        for in_id, gi in zip(node.inputs, node.backward(g)):
            if in_id < 0 or gi is None:
                continue
            if grads[in_id] is None:
                grads[in_id] = gi
                owned[in_id] = False
            elif owned[in_id]:
                grads[in_id] += gi
            else:
                grads[in_id] = grads[in_id] + gi
                owned[in_id] = True

    tape.gradients = {
        nid: Tensor(g) for nid, g in enumerate(grads) if g is not None
    }
