"""Dormand-Prince 5(4) integrator for array-valued states.

The state may be an array of any shape; one step size is shared by all of
its entries, which suits batches of trajectories of the same vector field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class StepUnderflow(RuntimeError):
    """Step size fell below the floor; the field is stiff or left its domain."""


def dp_step(fun, t, y, h, k1=None):
    """One Dormand-Prince step.  Returns (y_new, error estimate, k_last)."""
    k = [fun(t, y) if k1 is None else k1]
    for i in range(1, 7):
        yi = y + h * sum(a * kj for a, kj in zip(_A[i], k) if a != 0.0)
        k.append(fun(t + _C[i] * h, yi))
    y_new = y + h * sum(b * kj for b, kj in zip(_B, k) if b != 0.0)
    err = h * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
    return y_new, err, k[-1]


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    steps: list = field(default_factory=list)
    rejected: int = 0

    @property
    def final(self):
        return self.y[-1]


def integrate(fun, t0, y0, t_end, tol=1e-9, h0=None, max_step=np.inf, min_step=1e-12,
              record=True, callback=None, max_steps=1_000_000):
    """Integrate y' = fun(t, y) from t0 to t_end (which may be below t0).

    The local error of every accepted step is below ``tol`` in the mixed
    norm max |err| / (1 + |y|).  ``callback(t0, y0, t1, y1, k0, k1)`` runs
    after each accepted step and may return True to stop early.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    direction = 1.0 if t_end >= t0 else -1.0
    span = abs(t_end - t0)
    h = min(h0 if h0 else 0.01 * max(span, 1e-3), max_step, span if span > 0 else np.inf)
    ts, ys, steps = [t], [y.copy()], []
    rejected = 0
    prev = 1e-4
    just_rejected = False
    k1 = fun(t, y)
    n = 0
    while direction * (t_end - t) > 0:
        n += 1
        if n > max_steps:
            raise StepUnderflow("step budget exhausted")
        h = min(h, abs(t_end - t))
        y_new, err, k_last = dp_step(fun, t, y, direction * h, k1)
        ratio = np.max(np.abs(err) / (1.0 + np.abs(y_new))) / tol
        if not np.isfinite(ratio):
            ratio = 1e10
        if ratio <= 1.0:
            t_new = t + direction * h
            stop = callback(t, y, t_new, y_new, k1, k_last) if callback else False
            t, y, k1 = t_new, y_new, k_last
            steps.append(h)
            if record:
                ts.append(t)
                ys.append(y.copy())
            if stop:
                break
            # PI controller (exponents 0.7/5 and 0.4/5)
            r = max(ratio, 1e-10)
            factor = min(1.0 if just_rejected else 5.0, 0.9 * r ** -0.14 * prev ** 0.08)
            prev = r
            just_rejected = False
        else:
            rejected += 1
            just_rejected = True
            factor = max(0.2, 0.9 * ratio ** -0.2)
        h = min(h * factor, max_step)
        if h < min_step:
            raise StepUnderflow(f"step size {h:.3g} below {min_step:.3g} at t = {t:.6g}")
    if not record:
        ts.append(t)
        ys.append(y.copy())
    return Trajectory(t=np.array(ts), y=np.array(ys), steps=steps, rejected=rejected)


def hermite(t0, y0, f0, t1, y1, f1, t):
    """Cubic Hermite interpolant between two accepted points."""
    h = t1 - t0
    s = (t - t0) / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
