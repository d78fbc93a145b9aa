"""Central finite-difference oracle for hand-written backward passes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Module

MAX_ORACLE_PARAMS = 10_000


class NonFiniteLossError(ArithmeticError):
    pass


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_name: str = ""
    worst_index: tuple = ()
    checked: int = 0


SCALE_FLOOR = 1e-3


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    """|a - n| / max(|a|, |n|, 1e-3 * tensor scale, floor), elementwise.

    Entries whose true gradient is ~0 would otherwise divide pure
    finite-difference round-off by nothing; they are measured against the
    tensor's largest gradient instead.
    """
    if analytic.size == 0:
        return np.zeros_like(analytic)
    scale = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), max(SCALE_FLOOR * scale, floor))
    return np.abs(analytic - numeric) / denom


def _finite(loss: float) -> float:
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"loss is not finite: {loss}")
    return loss


def grad_check(
    model: Module,
    loss_fn: Callable[..., float],
    inputs=None,
    eps: float = 1e-6,
    floor: float = 1e-6,
    max_params: int = MAX_ORACLE_PARAMS,
) -> GradCheckResult:
    """Compare backward gradients of every scalar parameter with central differences.

    ``loss_fn(model, inputs, grad=...)`` runs the forward pass and returns the
    scalar loss; with ``grad=True`` it must also back-propagate into the
    parameters' ``.grad``.
    """
    params = model.parameters()
    total = sum(p.value.size for p in params.values())
    if total > max_params:
        raise ValueError(f"grad_check: model has {total} parameters, oracle limit is {max_params}")
    if total == 0:
        return GradCheckResult(0.0)

    model.zero_grad()
    _finite(loss_fn(model, inputs, grad=True))
    analytic = {name: p.grad.copy() for name, p in params.items()}

    result = GradCheckResult(0.0, checked=total)
    for name, p in params.items():
        numeric = np.empty_like(p.value)
        flat = p.value.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = _finite(loss_fn(model, inputs, grad=False))
            flat[i] = orig - eps
            down = _finite(loss_fn(model, inputs, grad=False))
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * eps)
        err = relative_error(analytic[name], numeric, floor)
        idx = np.unravel_index(int(np.argmax(err)), err.shape) if err.size else ()
        worst = float(err[idx]) if err.size else 0.0
        if worst > result.max_rel_error:
            result.max_rel_error, result.worst_name, result.worst_index = worst, name, idx
    model.zero_grad()
    return result


def input_grad_check(
    fn: Callable[[np.ndarray], np.ndarray],
    backward: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    upstream: np.ndarray,
    eps: float = 1e-6,
    floor: float = 1e-6,
) -> float:
    """Max relative error of an input gradient against central differences of <fn(x), upstream>."""
    fn(x)
    analytic = backward(upstream)
    numeric = np.empty_like(x)
    xf, nf = x.reshape(-1), numeric.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        up = float((fn(x) * upstream).sum())
        xf[i] = orig - eps
        down = float((fn(x) * upstream).sum())
        xf[i] = orig
        nf[i] = (up - down) / (2 * eps)
    if not x.size:
        return 0.0
    return float(relative_error(analytic, numeric, floor).max())
