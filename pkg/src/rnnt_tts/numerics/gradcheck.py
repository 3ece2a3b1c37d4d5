from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .layers import Param


@dataclass
class GradCheckReport:
    relative_errors: dict[str, float] = field(default_factory=dict)
    absolute_errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_relative_error(self) -> float:
        return max(self.relative_errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def grad_check(loss_fn: Callable[[], "object"], params: list[Param], tolerance: float = 1e-4,
               h: float = 1e-5, max_entries: int | None = None, rng: np.random.Generator | None = None,
               atol: float = 1e-7) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    ``loss_fn`` rebuilds the graph and returns a scalar Tensor. Parameters with
    ``requires_grad=False`` are skipped. The per-parameter error is the norm-wise
    relative error ``|a - n| / max(|a|, |n|)``, taken as 0 when both norms are below
    ``atol`` (a gradient that is exactly zero, such as attention key biases, leaves
    only round-off on both sides). ``max_entries`` subsamples large
    parameters (with ``rng``) to keep the check cheap.
    """
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    analytic = {p.name: p.grad.astype(np.float64).copy() for p in params}
    report = GradCheckReport(tolerance=tolerance)
    for p in params:
        if not p.requires_grad:
            continue
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False))
        numeric = np.empty(idx.size)
        for n, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + h
            up = float(loss_fn().data)
            flat[k] = orig - h
            down = float(loss_fn().data)
            flat[k] = orig
            numeric[n] = (up - down) / (2 * h)
        a = analytic[p.name].reshape(-1)[idx]
        diff = np.linalg.norm(a - numeric)
        scale = max(np.linalg.norm(a), np.linalg.norm(numeric))
        report.relative_errors[p.name] = float(diff / scale) if scale > atol else 0.0
        report.absolute_errors[p.name] = float(np.max(np.abs(a - numeric))) if idx.size else 0.0
    for p in params:
        p.zero_grad()
    return report
