"""Central finite-difference gradient checking.

ReLU-family activations are not differentiable at 0.  When a probe
``x +/- h`` straddles such a point the central difference averages two
different slopes and says nothing about the gradient at ``x``.  Such probes
are detected by disagreement of the two one-sided slopes and re-probed with
a step ``h * KINK_SHRINK``; the closest of the refined central and one-sided
slopes is compared with the analytic value.  ``GradReport.kinks`` counts them.

Errors are ``|analytic - numeric|`` divided by the largest gradient entry
seen across all checked tensors, so parameters with near-zero gradients are
not judged against finite-difference rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

# probes whose one-sided slopes disagree by more than this cannot resolve a 1e-4 check
KINK_RTOL = 5e-5
KINK_SHRINK = 1e-2


@dataclass
class GradReport:
    errors: dict[int, float] = field(default_factory=dict)
    kinks: int = 0
    probes: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def finite_differences(f: Callable[[], float], x: Tensor, h: float = 1e-5, indices=None):
    """Central, forward and backward differences of ``f`` w.r.t. flat entries of ``x``."""
    flat = x.data.reshape(-1)
    if not np.shares_memory(flat, x.data):
        raise ValueError("tensor data must be contiguous for in-place probing")
    if indices is None:
        indices = np.arange(flat.size)
    central = np.zeros(len(indices))
    forward = np.zeros(len(indices))
    backward = np.zeros(len(indices))
    with T.no_grad():
        f0 = f()
        for n, k in enumerate(indices):
            orig = flat[k]
            flat[k] = orig + h
            fp = f()
            flat[k] = orig - h
            fm = f()
            flat[k] = orig
            central[n] = (fp - fm) / (2 * h)
            forward[n] = (fp - f0) / h
            backward[n] = (f0 - fm) / h
    return central, forward, backward


def numerical_grad(f: Callable[[], float], x: Tensor, h: float = 1e-5, indices=None) -> np.ndarray:
    return finite_differences(f, x, h, indices)[0]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """``max |a - n| / max(max |a|, max |n|, floor)`` over one gradient array."""
    scale = max(float(np.max(np.abs(analytic), initial=0)),
                float(np.max(np.abs(numeric), initial=0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0)) / scale


def check_gradients(build: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-5,
                    max_entries: int | None = None, seed: int = 0) -> GradReport:
    """Compare tape gradients of the scalar ``build()`` against finite differences.

    ``max_entries`` limits probing to a random subset of each tensor.
    """
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    T.get_tape().clear()
    loss = build()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    def f() -> float:
        return float(build().data)

    rng = np.random.default_rng(seed)
    probes = []
    for t, g in zip(tensors, analytic):
        size = t.data.size
        if max_entries is not None and size > max_entries:
            idx = np.sort(rng.choice(size, max_entries, replace=False))
        else:
            idx = np.arange(size)
        central, fwd, bwd = finite_differences(f, t, h, idx)
        probes.append((t, idx, g.reshape(-1)[idx], central, fwd, bwd))

    scale = max([1e-8] + [float(np.max(np.abs(a), initial=0)) for _, _, a, *_ in probes]
                + [float(np.max(np.abs(c), initial=0)) for _, _, _, c, _, _ in probes])
    report = GradReport()
    for n, (t, idx, a, central, fwd, bwd) in enumerate(probes):
        err = np.abs(a - central)
        kink = np.flatnonzero(np.abs(fwd - bwd) > KINK_RTOL * scale)
        if kink.size:
            c2, f2, b2 = finite_differences(f, t, h * KINK_SHRINK, idx[kink])
            ak = a[kink]
            err[kink] = np.min(np.abs(np.stack([c2, f2, b2]) - ak), axis=0)
        report.errors[n] = float(np.max(err, initial=0)) / scale
        report.kinks += int(kink.size)
        report.probes += idx.size
    return report
