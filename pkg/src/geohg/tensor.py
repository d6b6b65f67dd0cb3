"""Minimal dense float64 numeric core with reverse-mode gradients.

Covers exactly the operations the model needs (dense linear algebra, ReLU,
overflow-safe log-sum-exp, row gathers and segment means over fixed edge
plans) plus the Adam optimizer. Gradients are accumulated by a topological
walk over the recorded forward graph; this is deliberately not a general
autodiff system.

All data is float64. Segment means follow a precomputed AggregationPlan whose
edge order is fixed at plan-build time, so accumulation order (and therefore
the exact floating-point result) never depends on traversal or dict order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np


class NumericError(FloatingPointError):
    """A tensor op produced or was asked to produce non-finite values."""


def require_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


class Tensor:
    """A dense float64 array plus an optional gradient slot.

    Building ops records parent links and a backward closure; ``backward()``
    on a scalar result fills ``grad`` for every reachable tensor that has
    ``requires_grad`` set.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (),
                 _backward: Optional[Callable[[np.ndarray], None]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse-mode gradient accumulation from a scalar result."""
        if self.data.size != 1:
            raise NumericError(f"backward() needs a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(()))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to the given shape, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data @ b.data

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def matmul_t(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T without materializing the transpose in the graph."""
    out_data = a.data @ b.data.T

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.data)
        if b.requires_grad:
            b._accumulate(g.T @ a.data)

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def scale(a: Tensor, c: float) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * c)

    return Tensor(a.data * c, _parents=(a,), _backward=bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * mask)

    return Tensor(np.where(mask, a.data, 0.0), _parents=(a,), _backward=bwd)


def square(a: Tensor) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * 2.0 * a.data)

    return Tensor(a.data * a.data, _parents=(a,), _backward=bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, float(g) / n))

    return Tensor(a.data.mean(), _parents=(a,), _backward=bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, float(g)))

    return Tensor(a.data.sum(), _parents=(a,), _backward=bwd)


def row_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=1, keepdims=True)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(out_data * (g - (g * out_data).sum(axis=1, keepdims=True)))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def log_sum_exp(a: Tensor) -> Tensor:
    """Row-wise overflow-safe log(sum(exp)): returns shape (n,)."""
    m = a.data.max(axis=1, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=1, keepdims=True)
    out_data = (m + np.log(s)).ravel()
    softmax = e / s

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(softmax * g[:, None])

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def diag(a: Tensor) -> Tensor:
    n = min(a.data.shape)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.data)
            idx = np.arange(n)
            full[idx, idx] = g
            a._accumulate(full)

    return Tensor(a.data.diagonal().copy(), _parents=(a,), _backward=bwd)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accumulate(full)

    return Tensor(a.data[idx], _parents=(a,), _backward=bwd)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    na = a.data.shape[0]
    out_data = np.concatenate([a.data, b.data], axis=0)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g[:na])
        if b.requires_grad:
            b._accumulate(g[na:])

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


@dataclass(frozen=True)
class AggregationPlan:
    """Fixed weighted-mean gather plan: out[dst] = sum_e w_norm_e * h[src_e].

    Edges are stored twice, pre-sorted by destination (forward) and by source
    (backward), so both passes use contiguous ``np.add.reduceat`` segments and
    a summation order frozen at build time. ``w_norm`` is the edge weight
    divided by the destination's total in-weight (zero-degree guard applied).
    """

    n_out: int
    src: np.ndarray          # (m,) source rows, sorted by (dst, src)
    w_norm: np.ndarray       # (m,) normalized weights, same order
    seg_starts: np.ndarray   # (b,) first edge of each dst block
    uniq_dst: np.ndarray     # (b,) destination row per block
    bwd_order: np.ndarray    # (m,) permutation regrouping edges by (src, dst)
    bwd_seg_starts: np.ndarray
    bwd_uniq_src: np.ndarray
    bwd_dst: np.ndarray      # (m,) dst per edge, in bwd_order

    @property
    def n_edges(self) -> int:
        return self.src.size

    def has_in_edge(self) -> np.ndarray:
        mask = np.zeros(self.n_out)
        mask[self.uniq_dst] = 1.0
        return mask


def build_plan(src: np.ndarray, dst: np.ndarray, weights: np.ndarray,
               n_out: int) -> AggregationPlan:
    """Normalize weights per destination and freeze both traversal orders."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    order = np.lexsort((src, dst))
    src, dst, weights = src[order], dst[order], weights[order]
    if src.size:
        seg_starts = np.flatnonzero(np.r_[True, dst[1:] != dst[:-1]])
        uniq_dst = dst[seg_starts]
        denom = np.add.reduceat(weights, seg_starts)
        denom_safe = np.where(denom != 0.0, denom, 1.0)
        w_norm = weights / np.repeat(denom_safe, np.diff(np.r_[seg_starts, src.size]))
    else:
        seg_starts = np.zeros(0, dtype=np.int64)
        uniq_dst = np.zeros(0, dtype=np.int64)
        w_norm = weights
    bwd_order = np.lexsort((dst, src))
    bwd_src = src[bwd_order]
    if src.size:
        bwd_seg_starts = np.flatnonzero(np.r_[True, bwd_src[1:] != bwd_src[:-1]])
        bwd_uniq_src = bwd_src[bwd_seg_starts]
    else:
        bwd_seg_starts = np.zeros(0, dtype=np.int64)
        bwd_uniq_src = np.zeros(0, dtype=np.int64)
    return AggregationPlan(n_out=n_out, src=src, w_norm=w_norm,
                           seg_starts=seg_starts, uniq_dst=uniq_dst,
                           bwd_order=bwd_order, bwd_seg_starts=bwd_seg_starts,
                           bwd_uniq_src=bwd_uniq_src, bwd_dst=dst[bwd_order])


def segment_mean(h: Tensor, plan: AggregationPlan) -> Tensor:
    """Weighted mean of source rows per destination; rows with no in-edges are zero."""
    d = h.data.shape[1]
    out_data = np.zeros((plan.n_out, d))
    if plan.n_edges:
        msgs = plan.w_norm[:, None] * h.data[plan.src]
        out_data[plan.uniq_dst] = np.add.reduceat(msgs, plan.seg_starts, axis=0)

    def bwd(g: np.ndarray) -> None:
        if h.requires_grad and plan.n_edges:
            contrib = (plan.w_norm[plan.bwd_order, None]
                       * g[plan.bwd_dst])
            full = np.zeros_like(h.data)
            full[plan.bwd_uniq_src] = np.add.reduceat(
                contrib, plan.bwd_seg_starts, axis=0)
            h._accumulate(full)
        elif h.requires_grad:
            h._accumulate(np.zeros_like(h.data))

    return Tensor(out_data, _parents=(h,), _backward=bwd)


# ---------------------------------------------------------------------------
# optimizer and init
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    """Bias-corrected Adam accumulators for one parameter."""

    m: np.ndarray
    v: np.ndarray
    step: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.m.shape != self.v.shape:
            raise NumericError("Adam moment shapes disagree")
        if self.step < 0:
            raise NumericError("Adam step count must be >= 0")


def adam_init(shape: tuple[int, ...], lr: float) -> AdamState:
    return AdamState(m=np.zeros(shape), v=np.zeros(shape), step=0, lr=lr)


def adam_step(param: np.ndarray, grad: np.ndarray,
              state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; pure, returns new param and state."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise NumericError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"moments {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_param = param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    require_finite(new_param, "Adam update")
    return new_param, replace(state, m=m, v=v, step=t)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: Optional[tuple[int, ...]] = None) -> np.ndarray:
    """Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-a, a, size=shape)


# ---------------------------------------------------------------------------
# direct linear solver (used by the kriging baseline)
# ---------------------------------------------------------------------------

def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b by LU factorization with partial pivoting.

    Raises NumericError when a pivot is (numerically) zero, i.e. the system
    is singular at working precision.
    """
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n:
        raise NumericError(f"bad solve shapes {a.shape} / {b.shape}")
    scale_ref = np.abs(a).max()
    if scale_ref == 0.0:
        raise NumericError("singular system (zero matrix)")
    perm = np.arange(n)
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(a[col:, col])))
        pivot = a[pivot_row, col]
        if abs(pivot) <= 1e-12 * scale_ref:
            raise NumericError(f"singular system (pivot {pivot:.3e} in column {col})")
        if pivot_row != col:
            a[[col, pivot_row]] = a[[pivot_row, col]]
            perm[[col, pivot_row]] = perm[[pivot_row, col]]
        factors = a[col + 1:, col] / pivot
        a[col + 1:, col] = factors
        a[col + 1:, col + 1:] -= factors[:, None] * a[col, col + 1:]
    one_dim = b.ndim == 1
    x = b[perm].reshape(n, -1)
    for col in range(n):                      # forward substitution (unit lower)
        x[col + 1:] -= a[col + 1:, col, None] * x[col]
    for col in range(n - 1, -1, -1):          # back substitution
        x[col] /= a[col, col]
        x[:col] -= a[:col, col, None] * x[col]
    require_finite(x, "linear solve")
    return x.ravel() if one_dim else x
