"""A small reverse-mode autodiff engine over dense float64 matrices.

Only the operations the model needs are supported. Every op is a method on
:class:`Tape`, which records it for the backward pass::

    tape = Tape()
    y = tape.relu(tape.matmul(x, w))
    loss = tape.sum(y)
    tape.backward(loss)      # w.grad now holds d(loss)/dw

Parameters are long-lived tensors with ``requires_grad=True``; their ``grad``
accumulates across tapes until :meth:`Tensor.zero_grad` is called, which is
how per-example tapes combine into a batch gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class Tensor:
    """A 2-D float64 matrix, optionally tracking a gradient."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} {self.shape[0]}x{self.shape[1]} grad={self.requires_grad}>"


@dataclass
class _Op:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Single-shot record of executed ops.

    ``check_finite`` turns on a NaN/Inf assertion after every forward op;
    ``record=False`` gives an inference-only tape that cannot run backward.
    """

    check_finite: bool = False
    record: bool = True
    ops: list[_Op] = field(default_factory=list)
    _done: bool = False

    def _record(self, arr: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
        if self._done:
            raise RuntimeError("tape already consumed by backward()")
        if self.check_finite and not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite value produced in forward pass")
        needs = self.record and any(x.requires_grad for x in inputs)
        out = Tensor._wrap(arr, needs)
        if needs:
            self.ops.append(_Op(out, inputs, backward))
        return out

    # -- linear algebra -------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        A, B = a.data, b.data
        return self._record(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))

    def spmm(self, m: sp.spmatrix, x: Tensor, mt: sp.spmatrix | None = None) -> Tensor:
        """Sparse constant matrix times tensor; ``m`` carries no gradient.

        ``mt`` optionally supplies a precomputed ``m.T`` for the backward pass.
        """
        if m.shape[1] != x.shape[0]:
            raise ValueError(f"spmm shape mismatch: {m.shape} @ {x.shape}")
        return self._record(np.asarray(m @ x.data), (x,), lambda g: (np.asarray((m.T if mt is None else mt) @ g),))

    def scatter_mean_aggregate(self, src: Tensor, groups, n_out: int) -> Tensor:
        """``out[dst] += weight * src[src_row]`` for every ``(dst, src_row, weight)`` entry."""
        return self.spmm(scatter_matrix(groups, n_out, src.shape[0]), src)

    # -- elementwise ----------------------------------------------------

    def add(self, *xs: Tensor) -> Tensor:
        shape = xs[0].shape
        for x in xs[1:]:
            if x.shape != shape:
                raise ValueError(f"add shape mismatch: {shape} vs {x.shape}")
        total = xs[0].data.copy()
        for x in xs[1:]:
            total += x.data
        return self._record(total, tuple(xs), lambda g: (g,) * len(xs))

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")
        return self._record(a.data - b.data, (a, b), lambda g: (g, -g))

    def add_scalar(self, x: Tensor, c: float) -> Tensor:
        return self._record(x.data + c, (x,), lambda g: (g,))

    def scale(self, x: Tensor, c: float) -> Tensor:
        return self._record(x.data * c, (x,), lambda g: (g * c,))

    def relu(self, x: Tensor) -> Tensor:
        mask = x.data > 0
        return self._record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))

    def tanh(self, x: Tensor) -> Tensor:
        y = np.tanh(x.data)
        return self._record(y, (x,), lambda g: (g * (1.0 - y * y),))

    def dropout(self, x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
        """Inverted dropout: survivors are scaled by ``1/(1-p)``; identity when not training."""
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
        if not training or p == 0.0:
            return x
        keep = (rng.random(x.shape) >= p) / (1.0 - p)
        return self._record(x.data * keep, (x,), lambda g: (g * keep,))

    # -- structural -----------------------------------------------------

    def concat_cols(self, *xs: Tensor) -> Tensor:
        rows = xs[0].shape[0]
        if any(x.shape[0] != rows for x in xs):
            raise ValueError("concat_cols needs equal row counts")
        bounds = np.cumsum([0] + [x.shape[1] for x in xs])
        return self._record(
            np.concatenate([x.data for x in xs], axis=1),
            tuple(xs),
            lambda g: tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(xs))),
        )

    def take_rows(self, x: Tensor, rows) -> Tensor:
        idx = np.asarray(rows, dtype=np.int64).reshape(-1)
        n = x.shape[0]
        if idx.size and (idx.min() < -n or idx.max() >= n):
            raise IndexError(f"row index out of range for {n} rows")

        def back(g):
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            return (gx,)

        return self._record(x.data[idx], (x,), back)

    def reshape(self, x: Tensor, rows: int, cols: int) -> Tensor:
        """Row-major reshape."""
        shape = x.shape
        return self._record(x.data.reshape(rows, cols), (x,), lambda g: (g.reshape(shape),))

    def mean_rows(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        if n == 0:
            raise ValueError("mean_rows of an empty tensor")
        return self._record(x.data.mean(axis=0, keepdims=True), (x,), lambda g: (np.repeat(g / n, n, axis=0),))

    def sum(self, x: Tensor) -> Tensor:
        return self._record(x.data.sum().reshape(1, 1), (x,), lambda g: (np.full(x.shape, g[0, 0]),))

    # -- backward -------------------------------------------------------

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable ``requires_grad`` leaf."""
        if self._done:
            raise RuntimeError("backward() already called on this tape")
        if loss.shape != (1, 1):
            raise ValueError(f"backward needs a 1x1 loss, got {loss.shape}")
        self._done = True
        if not loss.requires_grad:
            return
        adj: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        produced = {id(op.out) for op in self.ops}
        leaves: dict[int, Tensor] = {}
        for op in reversed(self.ops):
            g = adj.pop(id(op.out), None)
            if g is None:
                continue
            for x, gx in zip(op.inputs, op.backward(g)):
                if gx is None or not x.requires_grad:
                    continue
                key = id(x)
                if key in adj:
                    adj[key] = adj[key] + gx
                else:
                    adj[key] = gx
                if key not in produced:
                    leaves[key] = x
        for key, x in leaves.items():
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad += adj[key]
        self.ops.clear()


def scatter_matrix(groups, n_out: int, n_src: int) -> sp.csr_matrix:
    """Sparse ``n_out x n_src`` matrix from ``(dst, src_row, weight)`` entries (duplicates add)."""
    if len(groups):
        dst, src, w = (np.asarray(c) for c in zip(*groups))
    else:
        dst = src = np.zeros(0, dtype=np.int64)
        w = np.zeros(0)
    dst = dst.astype(np.int64)
    src = src.astype(np.int64)
    w = w.astype(np.float64)
    if dst.size and (dst.min() < 0 or dst.max() >= n_out or src.min() < 0 or src.max() >= n_src):
        raise IndexError("scatter index out of range")
    if not np.all(np.isfinite(w)):
        raise ValueError("scatter weights must be finite")
    return sp.csr_matrix((w, (dst, src)), shape=(n_out, n_src))


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float]
    checked: int
    skipped_kinks: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"grad-check {status}: max rel err {self.max_rel_error:.3e} (tol {self.tol:g}), "
            f"{self.checked} entries checked, {self.skipped_kinks} skipped at kinks"
        )


def grad_check(
    f: Callable[[Tape], Tensor],
    params: dict[str, Tensor],
    step: float = 1e-4,
    tol: float = 1e-4,
    floor: float = 1e-6,
    kink_tol: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients of the scalar ``f(tape)`` with central differences.

    ``f`` must be deterministic. Relative error per entry is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.

    Entries that fail ``tol`` and lie within one step of a non-differentiable
    point (a ReLU kink) are skipped. Two symptoms flag them: central differences at ``step`` and
    ``step / 2`` disagree, or the gap between forward and backward one-sided
    slopes fails to halve with the step. For smooth functions both residuals
    are O(step**2) relative to the slope; ``kink_tol`` bounds them.
    """
    for p in params.values():
        p.zero_grad()
    tape = Tape()
    loss = f(tape)
    base = loss.item()
    tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    def value():
        return f(Tape()).item()

    def probe(flat, i, h):
        orig = flat[i]
        flat[i] = orig + h
        up = value()
        flat[i] = orig - h
        down = value()
        flat[i] = orig
        return (up - base) / h, (base - down) / h

    per_param: dict[str, float] = {}
    checked = skipped = 0
    for name, p in params.items():
        worst = 0.0
        flat = p.data.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            fwd, bwd = probe(flat, i, step)
            num = (fwd + bwd) / 2
            err = abs(ga[i] - num) / max(abs(ga[i]), abs(num), floor)
            if err >= tol:
                # only a failing entry pays for the half-step kink probe
                fwd2, bwd2 = probe(flat, i, step / 2)
                half = (fwd2 + bwd2) / 2
                scale = kink_tol * max(abs(fwd), abs(bwd), floor)
                if abs(num - half) > scale or abs((fwd - bwd) - 2 * (fwd2 - bwd2)) > scale:
                    skipped += 1
                    continue
            worst = max(worst, err)
            checked += 1
        per_param[name] = worst
    for p in params.values():
        p.zero_grad()
    return GradCheckReport(max(per_param.values(), default=0.0), per_param, checked, skipped, tol)
