"""Finite-difference verification of tape gradients.

The check perturbs randomly chosen scalar parameter coordinates and compares
the analytic gradient against a central difference. It is the independent
oracle for every differentiable operation in the package and should be run in
fp64, where a 1e-5 step leaves ~1e-9 of headroom above rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import Rng
from .tensor import GradTape, ParamStore


@dataclass
class CoordinateResult:
    name: str
    offset: int
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradCheckReport:
    ok: bool
    checked: int
    tol: float
    worst: CoordinateResult | None
    failures: list[CoordinateResult] = field(default_factory=list)

    def __str__(self):
        status = "PASS" if self.ok else "FAIL"
        lines = [f"grad_check {status}: {self.checked} coordinates, tol {self.tol:g}"]
        if self.worst is not None:
            w = self.worst
            lines.append(
                f"  worst {w.name}[{w.offset}]: analytic {w.analytic:.10g} "
                f"vs fd {w.numeric:.10g} (rel {w.rel_err:.3g})"
            )
        for f in self.failures[:5]:
            lines.append(
                f"  FAIL {f.name}[{f.offset}]: analytic {f.analytic:.10g} "
                f"vs fd {f.numeric:.10g} (rel {f.rel_err:.3g})"
            )
        return "\n".join(lines)


def grad_check(loss_fn, params: ParamStore, samples=200, tol=1e-4, step=1e-5, seed=0):
    """Compare tape gradients of ``loss_fn(params)`` with central differences.

    ``loss_fn`` must be deterministic (fix its inputs and any noise outside).
    For each sampled coordinate w the relative error is
    |analytic - fd| / max(1, |fd|) with fd = (L(w+h) - L(w-h)) / (2h).
    Coordinates are sampled without replacement when possible.
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ValueError(
                f"grad_check requires fp64 parameters; {name!r} is {p.data.dtype}"
            )

    params.zero_grad()
    with GradTape() as tape:
        loss = loss_fn(params)
    tape.backward(loss)

    names = params.names()
    sizes = [int(params[n].data.size) for n in names]
    total = sum(sizes)
    bounds = np.cumsum(sizes)
    rng = Rng(seed)
    if samples >= total:
        flat_idx = np.arange(total)
    else:
        flat_idx = np.sort(rng.choice_no_replace(total, samples))

    results = []
    for flat in flat_idx:
        pi = int(np.searchsorted(bounds, flat, side="right"))
        offset = int(flat - (bounds[pi - 1] if pi else 0))
        name = names[pi]
        p = params[name]
        analytic = 0.0 if p.grad is None else float(p.grad.flat[offset])

        original = float(p.data.flat[offset])
        p.data.flat[offset] = original + step
        loss_hi = float(loss_fn(params).data)
        p.data.flat[offset] = original - step
        loss_lo = float(loss_fn(params).data)
        p.data.flat[offset] = original

        numeric = (loss_hi - loss_lo) / (2.0 * step)
        rel = abs(analytic - numeric) / max(1.0, abs(numeric))
        results.append(CoordinateResult(name, offset, analytic, numeric, rel))

    worst = max(results, key=lambda r: r.rel_err) if results else None
    failures = [r for r in results if r.rel_err > tol]
    failures.sort(key=lambda r: -r.rel_err)
    return GradCheckReport(
        ok=not failures, checked=len(results), tol=tol, worst=worst, failures=failures
    )
