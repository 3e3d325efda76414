from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericError
from .ops import ParamStore

# loss_fn(params, with_grad) -> (loss, grads) when with_grad else loss
LossFn = Callable[[ParamStore, bool], object]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def grad_check(loss_fn: LossFn, params: ParamStore, eps: float = 1e-5,
               precise_fn: Callable[[ParamStore], object] | None = None,
               refine_above: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Every coordinate of every tensor is perturbed in place and restored.

    A float64 central difference carries roughly 1e-11 of absolute noise, which
    dominates the relative error of coordinates whose gradient is near the
    1e-8 floor.  When ``precise_fn`` (params -> loss in np.longdouble) is given,
    coordinates whose float64 error exceeds ``refine_above`` are differenced
    again in extended precision and that result is the one reported.
    """
    loss, grads = loss_fn(params, True)
    if not np.isfinite(loss):
        raise NumericError(f"loss is not finite: {loss}")
    worst = 0.0
    for name, theta in params.items():
        if not theta.flags.c_contiguous:
            raise ValueError(f"{name} must be C-contiguous to perturb in place")
        flat = theta.reshape(-1)
        g = np.asarray(grads[name]).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn(params, False)
            flat[i] = orig - eps
            lm = loss_fn(params, False)
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
            err = relative_error(g[i], (lp - lm) / (2.0 * eps))
            if err > refine_above and precise_fn is not None:
                err = _precise_error(precise_fn, params, name, i, g[i], eps)
            worst = max(worst, err)
    return float(worst)


def _precise_error(precise_fn, params, name, i, analytic, eps):
    wide = dict(params)
    theta = params[name].astype(np.longdouble)
    wide[name] = theta
    flat = theta.reshape(-1)
    orig = flat[i]
    step = np.longdouble(eps)
    flat[i] = orig + step
    lp = precise_fn(wide)
    flat[i] = orig - step
    lm = precise_fn(wide)
    if not (np.isfinite(lp) and np.isfinite(lm)):
        raise NumericError(f"non-finite loss while refining {name}[{i}]")
    numeric = (lp - lm) / (2 * step)
    return float(relative_error(np.longdouble(analytic), numeric))
