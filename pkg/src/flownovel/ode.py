"""Explicit Runge-Kutta integrators for batched ODE states.

``rk4`` is a fixed-grid classical Runge-Kutta scheme written only in terms of
``+`` and scalar ``*`` so it runs on numpy arrays or on :class:`ad.Tensor`
values (training differentiates straight through the unrolled steps).

``dopri5`` is the adaptive Dormand-Prince 5(4) pair with FSAL, numpy only.
Rows of the state are independent problems (one per sample): a row that turns
non-finite is frozen and reported instead of poisoning the step size of the
rest of the batch.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

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
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def rk4(func: Callable, state: tuple, t0: float, t1: float, steps: int,
        on_step: Callable | None = None) -> tuple:
    """Integrate ``d state/dt = func(t, state)`` from t0 to t1 (t1 < t0 allowed)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    h = (t1 - t0) / steps
    y = tuple(state)
    for i in range(steps):
        t = t0 + i * h
        k1 = func(t, y)
        k2 = func(t + h / 2, tuple(a + (h / 2) * b for a, b in zip(y, k1)))
        k3 = func(t + h / 2, tuple(a + (h / 2) * b for a, b in zip(y, k2)))
        k4 = func(t + h, tuple(a + h * b for a, b in zip(y, k3)))
        y = tuple(a + (h / 6) * (b1 + 2 * b2 + 2 * b3 + b4)
                  for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
        if on_step is not None:
            y = on_step(t + h, y)
    return y


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return np.sqrt(np.mean((err / scale) ** 2, axis=1))


def _initial_step(func, t0, y0, f0, direction, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = func(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri5(func: Callable, y0: np.ndarray, t0: float, t1: float, rtol: float = 1e-5,
           atol: float = 1e-5, max_steps: int = 10000, blowup: float = np.inf):
    """Adaptive integration of a batch ``y0`` of shape [batch, n].

    Returns ``(y1, ok, n_steps)``. ``ok[i]`` is False when row ``i`` became
    non-finite, exceeded ``blowup`` in magnitude, or could not be finished
    within ``max_steps`` even when integrated on its own.
    """
    y0 = np.array(y0, dtype=np.float64)
    if y0.ndim != 2:
        raise ValueError("state must be [batch, n]")
    y = y0.copy()
    ok = np.ones(len(y), dtype=bool)
    if t1 == t0 or len(y) == 0:
        return y, ok, 0
    direction = np.sign(t1 - t0)
    span = abs(t1 - t0)
    active = np.arange(len(y))

    with np.errstate(over="ignore", invalid="ignore"):
        f = func(t0, y)
        bad = ~np.all(np.isfinite(f), axis=1)
        ok[bad] = False
        active = active[~bad]
        f = f[~bad]
        t = t0
        h = _initial_step(lambda tt, yy: func(tt, yy), t0, y[active], f, direction, rtol, atol) \
            if len(active) else 0.0
        h = min(h, span)
        steps = 0
        while len(active) and direction * (t1 - t) > 1e-12 * span:
            if steps >= max_steps:
                break
            h = min(h, abs(t1 - t))
            ya = y[active]
            ks = [f]
            for s in range(1, 7):
                yi = ya + direction * h * sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
                ks.append(func(t + direction * h * _C[s], yi))
            y_new = ya + direction * h * sum(b * k for b, k in zip(_B5, ks) if b != 0.0)
            err = direction * h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
            row_bad = ~(np.all(np.isfinite(y_new), axis=1) & np.all(np.isfinite(ks[-1]), axis=1)
                        & (np.max(np.abs(y_new), axis=1) < blowup))
            if np.any(row_bad):
                ok[active[row_bad]] = False
                keep = ~row_bad
                active, f = active[keep], f[keep]
                continue
            norms = _error_norm(err, ya, y_new, rtol, atol)
            err_max = float(np.max(norms)) if len(norms) else 0.0
            steps += 1
            if err_max <= 1.0:
                t = t + direction * h
                y[active] = y_new
                f = ks[-1]
                factor = 10.0 if err_max == 0 else min(10.0, 0.9 * err_max ** -0.2)
            else:
                factor = max(0.2, 0.9 * err_max ** -0.2)
            h = h * factor
            if h < 1e-14 * span:
                steps = max_steps

        if len(active) and direction * (t1 - t) > 1e-12 * span:
            # Budget exhausted: finish each remaining row alone so one stiff or
            # diverging sample cannot take the others down with it.
            if len(active) == 1 and len(y) == 1:
                ok[:] = False
                return y, ok, steps
            for i in active:
                yi, oki, _ = dopri5(func, y[i:i + 1], t, t1, rtol, atol, max_steps, blowup)
                y[i] = yi[0]
                ok[i] = oki[0]
    y[~ok] = np.nan
    return y, ok, steps
