"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericsError
from .tensor import Tape, Tensor, backward, zero_grads


def grad_check(
    f: Callable[[Optional[Tape]], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_coords_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Compare tape gradients of ``f`` against central differences.

    ``f`` must be deterministic, build its graph on the tape it is given, and
    return a scalar. Returns the max over checked coordinates of
    ``|analytic - numeric| / max(1, |numeric|)``. ``max_coords_per_param``
    caps the probed coordinates per parameter (seeded subsample via ``rng``),
    which keeps full-model checks affordable; by default every coordinate is
    probed. Non-finite values abort with the offending parameter index.
    """
    if h <= 0:
        raise NumericsError(f"grad_check step h must be positive, got {h}")
    tape = Tape()
    loss = f(tape)
    if not np.isfinite(loss.data):
        raise NumericsError("grad_check: loss is non-finite at the base point")
    zero_grads(params)
    backward(tape, loss, wrt=params)
    analytic = [p.grad.copy() for p in params]

    if max_coords_per_param is not None and rng is None:
        rng = np.random.default_rng(0)

    worst = 0.0
    for idx, p in enumerate(params):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        a_flat = analytic[idx].reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            f_plus = f(None).item()
            flat[c] = orig - h
            f_minus = f(None).item()
            flat[c] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericsError(
                    f"grad_check: non-finite probe at parameter {idx}, coordinate {c}"
                )
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(a_flat[c] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = float(err)
    return worst
