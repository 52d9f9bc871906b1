"""Finite-difference oracle for the reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, EvaluationError
from .tensor import Parameter, Tape, Tensor, backward, zero_grads


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-5,
) -> float:
    """Compare reverse-mode gradients of a scalar function against central differences.

    ``f`` must be deterministic, take no arguments, and read the current
    values of ``params``. One taped evaluation supplies the analytic
    gradients; every coordinate is then perturbed by +-h for the central
    difference. Returns the max over coordinates of

        |analytic - numeric| / max(1, |numeric|)
    """
    zero_grads(params)
    with Tape() as tape:
        loss = f()
    if loss.size != 1:
        raise ContractError(f"finite_diff_check needs a scalar function, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise EvaluationError("function under check produced a non-finite value")
    backward(loss, tape)
    analytic = [
        np.zeros_like(p.value.data) if p.value.grad is None else np.array(p.value.grad)
        for p in params
    ]

    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.value.data.reshape(-1)
        ana_flat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().data)
            flat[i] = orig - h
            f_minus = float(f().data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise EvaluationError("function under check produced a non-finite value")
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(ana_flat[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    return worst
