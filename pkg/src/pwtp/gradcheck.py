"""Finite-difference validation of reverse-mode gradients."""

import numpy as np

from .autodiff import Var, backward


def grad_check(build, params: dict, h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    build: maps a dict of Var parameters to a scalar Var objective.
    params: dict of name -> float64 array.
    Error per entry is |analytic - central| / max(1, |central|).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    var_params = {k: Var(v) for k, v in params.items()}
    out = build(var_params)
    if not np.isfinite(out.value).all():
        raise ValueError("objective not finite")
    backward(out)
    analytic = {k: v.grad.copy() for k, v in var_params.items()}

    def eval_at(p):
        val = build({k: Var(v) for k, v in p.items()}).value
        if not np.isfinite(val).all():
            raise ValueError("objective not finite")
        return float(val)

    worst = 0.0
    work = {k: v.copy() for k, v in params.items()}
    for name, arr in work.items():
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = eval_at(work)
            flat[i] = orig - h
            fm = eval_at(work)
            flat[i] = orig
            central = (fp - fm) / (2.0 * h)
            ana = analytic[name].reshape(-1)[i]
            err = abs(ana - central) / max(1.0, abs(central))
            if err > worst:
                worst = err
    return worst
