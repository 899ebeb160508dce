"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every exported operation records its inputs and a closure that routes the
upstream gradient to them; ``backward`` walks the recorded graph once and
accumulates gradients additively into every reachable parameter. The op set
is deliberately small: exactly what the encoders, heads, and losses need,
each with an exact analytic gradient that ``finite_difference_check`` can
verify against central differences.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError


def _as_f64(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """A float64 array plus the bookkeeping reverse mode needs.

    ``requires_grad`` is True for trainable parameters and for any node
    computed from one; gradient routing is skipped entirely on subgraphs
    that cannot reach a parameter.
    """

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_push")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = _as_f64(value)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._push: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            # copy: g may alias an upstream buffer or be a broadcast view
            if g.shape == self.value.shape:
                self.grad = g.copy()
            else:
                self.grad = np.array(np.broadcast_to(g, self.value.shape))
        else:
            self.grad += g

    def __repr__(self) -> str:
        tag = self.name or ("param" if self.requires_grad else "const")
        return f"Tensor({tag}, shape={self.value.shape})"


def parameter(value, name: str | None = None) -> Tensor:
    """Create a trainable leaf tensor."""
    return Tensor(value, requires_grad=True, name=name)


def constant(value) -> Tensor:
    """Create a non-trainable leaf tensor."""
    return Tensor(value)


def _node(value, parents: tuple[Tensor, ...], push) -> Tensor:
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._push = push
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` for every node below ``loss``.

    Gradients add across calls and across repeated uses of the same tensor;
    call ``zero_grads`` on the parameters to reset between steps.
    """
    if loss.value.ndim != 0:
        raise DimensionError(f"backward expects a scalar loss, got shape {loss.value.shape}")
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    loss.accumulate(np.ones_like(loss.value))
    for node in reversed(order):
        if node._push is not None and node.grad is not None:
            node._push(node.grad)


def zero_grads(params: Iterable[Tensor]) -> None:
    """Drop accumulated gradients on the given tensors."""
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# operations


def affine(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Row-wise x @ weights + bias."""
    xv, wv, bv = x.value, weights.value, bias.value
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0] or bv.shape != (wv.shape[1],):
        raise DimensionError(
            f"affine shapes incompatible: input {xv.shape}, weights {wv.shape}, bias {bv.shape}"
        )
    out = xv @ wv + bv

    def push(g):
        if x.requires_grad:
            x.accumulate(g @ wv.T)
        if weights.requires_grad:
            weights.accumulate(xv.T @ g)
        if bias.requires_grad:
            bias.accumulate(g.sum(axis=0))

    return _node(out, (x, weights, bias), push)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul shapes incompatible: {av.shape} @ {bv.shape}")
    out = av @ bv

    def push(g):
        if a.requires_grad:
            a.accumulate(g @ bv.T)
        if b.requires_grad:
            b.accumulate(av.T @ g)

    return _node(out, (a, b), push)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"add shapes differ: {a.value.shape} vs {b.value.shape}")

    def push(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return _node(a.value + b.value, (a, b), push)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"sub shapes differ: {a.value.shape} vs {b.value.shape}")

    def push(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(-g)

    return _node(a.value - b.value, (a, b), push)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def push(g):
        if x.requires_grad:
            x.accumulate(c * g)

    return _node(c * x.value, (x,), push)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, v); subgradient at 0 is 0."""
    mask = x.value > 0.0

    def push(g):
        if x.requires_grad:
            x.accumulate(g * mask)

    return _node(np.where(mask, x.value, 0.0), (x,), push)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.value > 0.0
    factor = np.where(mask, 1.0, slope)

    def push(g):
        if x.requires_grad:
            x.accumulate(g * factor)

    return _node(np.where(mask, x.value, slope * x.value), (x,), push)


def mean_rows(x: Tensor) -> Tensor:
    """Mean over rows, kept as a 1 x d row (graph readout)."""
    if x.value.ndim != 2:
        raise DimensionError(f"mean_rows expects a matrix, got shape {x.value.shape}")
    n = x.value.shape[0]

    def push(g):
        if x.requires_grad:
            x.accumulate(np.broadcast_to(g / n, x.value.shape))

    return _node(x.value.mean(axis=0, keepdims=True), (x,), push)


def sum_all(x: Tensor) -> Tensor:
    def push(g):
        if x.requires_grad:
            x.accumulate(np.broadcast_to(g, x.value.shape))

    return _node(np.asarray(x.value.sum()), (x,), push)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def push(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p.accumulate(g[tuple(idx)])

    return _node(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), push)


def pairwise_sum(col: Tensor, row: Tensor) -> Tensor:
    """Outer broadcast sum: out[i, j] = col[i, 0] + row[j, 0]."""
    cv, rv = col.value, row.value
    if cv.ndim != 2 or cv.shape[1] != 1 or rv.ndim != 2 or rv.shape[1] != 1:
        raise DimensionError(f"pairwise_sum expects column vectors, got {cv.shape} and {rv.shape}")

    def push(g):
        if col.requires_grad:
            col.accumulate(g.sum(axis=1, keepdims=True))
        if row.requires_grad:
            row.accumulate(g.sum(axis=0)[:, None])

    return _node(cv + rv.T, (col, row), push)


def masked_row_softmax(scores: Tensor, mask) -> Tensor:
    """Row-wise softmax restricted to entries where mask is True (0 elsewhere).

    Every row must have at least one allowed entry.
    """
    m = np.asarray(mask, dtype=bool)
    if m.shape != scores.value.shape:
        raise DimensionError(f"mask shape {m.shape} != scores shape {scores.value.shape}")
    if not m.any(axis=1).all():
        raise DimensionError("masked_row_softmax: some row has no allowed entry")
    s = np.where(m, scores.value, -np.inf)
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    alpha = e / e.sum(axis=1, keepdims=True)

    def push(g):
        if scores.requires_grad:
            dot = (g * alpha).sum(axis=1, keepdims=True)
            scores.accumulate(alpha * (g - dot))

    return _node(alpha, (scores,), push)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean of -log softmax(logits)[target] per row, in log-sum-exp form.

    Gradient w.r.t. the logits is (softmax - onehot) / n.
    """
    z = logits.value
    if z.ndim != 2 or z.shape[1] < 2:
        raise DimensionError(f"softmax_cross_entropy expects n x C logits with C >= 2, got {z.shape}")
    t = np.asarray(targets, dtype=np.int64)
    n, c = z.shape
    if t.shape != (n,):
        raise DimensionError(f"targets shape {t.shape} does not match {n} logit rows")
    if t.size and (t.min() < 0 or t.max() >= c):
        raise IndexError(f"target class out of range [0, {c}): {t}")
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    losses = lse - z[np.arange(n), t]
    probs = np.exp(z - lse[:, None])

    def push(g):
        if logits.requires_grad:
            gl = probs.copy()
            gl[np.arange(n), t] -= 1.0
            logits.accumulate(float(g) * gl / n)

    return _node(np.asarray(losses.mean()), (logits,), push)


def grad_reverse(x: Tensor, coeff: float) -> Tensor:
    """Identity in the forward pass; multiplies the gradient by -coeff."""
    coeff = float(coeff)
    if coeff < 0.0:
        raise ValueError(f"grad_reverse coeff must be >= 0, got {coeff}")

    def push(g):
        if x.requires_grad:
            x.accumulate(-coeff * g)

    return _node(x.value, (x,), push)


def softmax(z: np.ndarray) -> np.ndarray:
    """Plain (non-tape) row softmax for inference paths."""
    z = _as_f64(z)
    s = z - z.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# optimization and verification


def sgd_step(params: Iterable[Tensor], eta: float) -> None:
    """p <- p - eta * grad(p) for every parameter; grads stay untouched."""
    eta = float(eta)
    if eta < 0.0:
        raise ValueError(f"learning rate must be >= 0, got {eta}")
    plist = list(params)
    for p in plist:
        if p.grad is None:
            raise NumericError(f"sgd_step: parameter {p.name or '<unnamed>'} has no gradient")
        if p.grad.shape != p.value.shape:
            raise NumericError(
                f"sgd_step: gradient shape {p.grad.shape} != value shape {p.value.shape}"
            )
    for p in plist:
        p.value = p.value - eta * p.grad


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` is a zero-argument callable that rebuilds the loss from the
    current values of ``params``. The relative error for one scalar entry
    uses max(|analytic|, |numeric|, 1e-8) as denominator.
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    params = list(params)
    zero_grads(params)
    loss = loss_fn()
    if not np.isfinite(loss.value):
        raise NumericError(f"loss is not finite: {loss.value}")
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.value) for p in params]
    zero_grads(params)

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lp = float(loss_fn().value)
            flat[i] = orig - epsilon
            lm = float(loss_fn().value)
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError("loss became non-finite during perturbation")
            numeric = (lp - lm) / (2.0 * epsilon)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
