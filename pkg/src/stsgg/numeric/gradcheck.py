from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import NumericError, Parameter, Tensor


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    step: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max ``|analytic - numeric| / max(1, |numeric|)`` over checked entries.

    ``f`` rebuilds the scalar from the current parameter values on each call.
    With ``max_entries`` set, that many entries per parameter are sampled
    (every parameter is still visited).
    """
    for p in params:
        p.grad = None
    out = f()
    if not np.isfinite(out.data).all():
        raise NumericError("objective is not finite at the check point")
    out.backward()
    analytic = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in params}

    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        ga = analytic[p.name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            hi = f().item()
            flat[i] = orig - step
            lo = f().item()
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError(f"non-finite objective while perturbing {p.name}[{i}]")
            numeric = (hi - lo) / (2 * step)
            err = abs(ga[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
