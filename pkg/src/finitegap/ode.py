"""Dormand-Prince 5(4) integrator for complex state vectors with dense output.

A ``guard`` callback may veto a step (for example when two elliptic
variables get too close); the step is then halved until it is accepted or
falls below the step floor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class CollisionError(RuntimeError):
    """The trajectory approached a forbidden configuration."""

    def __init__(self, message: str, pair: tuple | None = None, at: float | None = None):
        super().__init__(message)
        self.pair = pair
        self.at = at


class StepSizeError(RuntimeError):
    """The step size fell below the floor without meeting the tolerance."""


# Dormand-Prince tableau
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
# dense-output coefficients (Hairer, Norsett & Wanner, continuous extension of order 4)
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799, -10690763975 / 1880347072,
    701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423,
])


@dataclass
class Solution:
    """Accepted steps plus a dense interpolant."""

    t: np.ndarray
    y: np.ndarray
    steps: list
    n_eval: int
    n_reject: int

    def __call__(self, tq) -> np.ndarray:
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        out = np.empty((tq.size, self.y.shape[1]), dtype=complex)
        lo, hi = min(self.t[0], self.t[-1]), max(self.t[0], self.t[-1])
        if np.any((tq < lo - 1e-12 * max(1.0, abs(hi))) | (tq > hi + 1e-12 * max(1.0, abs(hi)))):
            raise ValueError("requested time outside the integrated span")
        if not self.steps:
            out[:] = self.y[0]
            return out
        direction = np.sign(self.t[-1] - self.t[0])
        starts = np.array([s[0] for s in self.steps])
        for i, tv in enumerate(tq):
            j = int(np.searchsorted(direction * starts, direction * tv, side="right")) - 1
            j = min(max(j, 0), len(self.steps) - 1)
            out[i] = _dense_eval(self.steps[j], tv)
        return out


def _dense_eval(step, tv) -> np.ndarray:
    t0, h, y0, y1, K = step
    th = (tv - t0) / h
    f0, f1 = K[0], K[6]
    r1 = y1 - y0
    r2 = h * f0 - r1
    r3 = r1 - h * f1 - r2
    r4 = h * (_D @ K)
    th1 = 1.0 - th
    return y0 + th * (r1 + th1 * (r2 + th * (r3 + th1 * r4)))


def _error_norm(err, y0, y1, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def integrate(
    f: Callable[[float, np.ndarray], np.ndarray],
    t_span: Sequence[float],
    y0,
    rtol: float = 1e-9,
    atol: float = 1e-9,
    h0: Optional[float] = None,
    guard: Optional[Callable[[float, np.ndarray], None]] = None,
    max_steps: int = 200_000,
    h_floor: float = 1e-14,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Solution:
    """Integrate ``y' = f(t, y)`` over ``t_span`` with error control.

    ``guard(t, y)`` raises :class:`CollisionError` when a state is not
    admissible; a vetoed trial step is halved, and the error is re-raised
    once the step drops below ``h_floor * |span|``.  ``project(y)`` maps
    every accepted state back onto an invariant manifold.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.asarray(y0, dtype=complex).copy()
    if guard is not None:
        guard(t0, y)
    ts, ys, steps = [t0], [y.copy()], []
    if t1 == t0:
        return Solution(np.array(ts), np.array(ys), steps, 0, 0)
    span = abs(t1 - t0)
    direction = 1.0 if t1 > t0 else -1.0
    K = np.empty((7, y.size), dtype=complex)
    K[0] = f(t0, y)
    n_eval, n_reject = 1, 0
    if h0 is None:
        d0 = np.max(np.abs(y)) + 1e-300
        d1 = np.max(np.abs(K[0])) + 1e-300
        h0 = min(0.01 * d0 / d1, 0.1 * span)
    h = direction * max(h0, h_floor * span)
    t = t0
    for _ in range(max_steps):
        if direction * (t + h - t1) > 0:
            h = t1 - t
        vetoed = None
        for s in range(1, 7):
            ys_ = y + h * (np.asarray(_A[s]) @ K[:s])
            K[s] = f(t + _C[s] * h, ys_)
        n_eval += 6
        y_new = y + h * (_B @ K)
        err = _error_norm(h * (_E @ K), y, y_new, rtol, atol)
        if not np.all(np.isfinite(y_new)):
            err = np.inf
        if guard is not None and err <= 1.0:
            try:
                guard(t + h, y_new)
            except CollisionError as exc:
                vetoed = exc
        if err <= 1.0 and vetoed is None:
            if project is not None:
                y_new = project(y_new)
            k7 = f(t + h, y_new)
            n_eval += 1
            K[6] = k7
            steps.append((t, h, y.copy(), y_new.copy(), K.copy()))
            t, y = t + h, y_new
            ts.append(t)
            ys.append(y.copy())
            K[0] = k7
            if direction * (t - t1) >= -1e-15 * span:
                return Solution(np.array(ts), np.array(ys), steps, n_eval, n_reject)
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h = h * min(5.0, max(0.2, fac))
        else:
            n_reject += 1
            if vetoed is not None:
                h = 0.5 * h
                if abs(h) < h_floor * span:
                    raise vetoed
            else:
                fac = 0.9 * err ** -0.2 if np.isfinite(err) else 0.1
                h = h * max(0.1, min(0.5, fac))
                if abs(h) < h_floor * span:
                    raise StepSizeError(f"step size underflow at t = {t:.17g}")
    raise StepSizeError(f"maximum number of steps ({max_steps}) exceeded")
