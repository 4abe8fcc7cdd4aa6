"""Finite-difference verification of layer and model gradients.

The module under test only needs forward(x, train) / backward(dy) /
params(). A fixed random projection turns the output into a scalar; the
analytic gradient from backward is compared element by element against
central differences. Modules with many parameters are checked on a seeded
random subset so the full-model check stays fast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FD_STEP = 1e-5


@dataclass
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    passed: bool
    worst: str = ""


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-3)


def grad_check(
    module,
    x: np.ndarray,
    tolerance: float = 1e-4,
    train: bool = False,
    max_elements: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    x = x.astype(np.float64)
    rng = np.random.default_rng(seed)
    out = module.forward(x, train)
    proj = rng.uniform(-1.0, 1.0, size=out.shape)

    def scalar_loss() -> float:
        return float((module.forward(x, train) * proj).sum())

    for p in module.params().values():
        p.grad[...] = 0
    module.forward(x, train)
    dx = module.backward(proj.copy())

    targets: list[tuple[str, np.ndarray, np.ndarray]] = [("input", x, dx)]
    for name, p in module.params().items():
        targets.append((name, p.value, p.grad))

    max_err = 0.0
    n_checked = 0
    worst = ""
    for name, value, analytic in targets:
        flat_v = value.reshape(-1)
        flat_a = analytic.reshape(-1)
        idx = np.arange(flat_v.size)
        if max_elements is not None and flat_v.size > max_elements:
            idx = rng.choice(flat_v.size, size=max_elements, replace=False)
        for i in idx:
            orig = flat_v[i]
            flat_v[i] = orig + FD_STEP
            hi = scalar_loss()
            flat_v[i] = orig - FD_STEP
            lo = scalar_loss()
            flat_v[i] = orig
            numeric = (hi - lo) / (2 * FD_STEP)
            err = _rel_err(float(flat_a[i]), numeric)
            n_checked += 1
            if err > max_err:
                max_err = err
                worst = f"{name}[{i}]: analytic={flat_a[i]:.3e} numeric={numeric:.3e}"
    return GradCheckReport(max_rel_err=max_err, n_checked=n_checked,
                           passed=max_err < tolerance, worst=worst)
