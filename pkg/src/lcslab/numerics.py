"""Shared numerical kernels: linear path ODE steps, Simpson sums, damped
Gauss-Newton on periodic charts."""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["rk4_linear_path", "simpson_path", "gauss_newton",
           "dedup_points", "segment_nodes"]


def segment_nodes(n_steps: int) -> np.ndarray:
    """Endpoint and midpoint abscissae for ``n_steps`` RK4 steps on [0, 1]."""
    return np.linspace(0.0, 1.0, 2 * n_steps + 1)


def rk4_linear_path(a: np.ndarray, b: np.ndarray, f0, h: float) -> np.ndarray:
    """Integrate ``f' = b(s) + a(s) f`` along a path.

    ``a`` and ``b`` carry values at the ``2*n_steps + 1`` endpoint/midpoint
    nodes in their last axis; ``h`` is the step in the path parameter.
    Classical RK4; exactness of the linear structure keeps this order 4.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    n_steps = (a.shape[-1] - 1) // 2
    f = np.broadcast_to(np.asarray(f0, float), a.shape[:-1]).astype(float).copy()
    for i in range(n_steps):
        a0, am, a1 = a[..., 2 * i], a[..., 2 * i + 1], a[..., 2 * i + 2]
        b0, bm, b1 = b[..., 2 * i], b[..., 2 * i + 1], b[..., 2 * i + 2]
        k1 = b0 + a0 * f
        k2 = bm + am * (f + 0.5 * h * k1)
        k3 = bm + am * (f + 0.5 * h * k2)
        k4 = b1 + a1 * (f + h * k3)
        f = f + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return f


def simpson_path(vals: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson over endpoint/midpoint node values (last axis)."""
    v0 = vals[..., 0:-1:2]
    vm = vals[..., 1::2]
    v1 = vals[..., 2::2]
    return (h / 6.0) * (v0 + 4.0 * vm + v1).sum(axis=-1)


def gauss_newton(residual: Callable[[np.ndarray], tuple],
                 seeds: np.ndarray, max_iter: int = 40, tol: float = 1e-12,
                 damping: float = 1e-10, step_cap: float = 1.0):
    """Damped Gauss-Newton for (possibly underdetermined) systems.

    ``residual(u)`` returns ``(r, J)`` with r shape (B, m) and J shape
    (B, m, k).  Runs the whole seed batch simultaneously; converged seeds
    leave the active set, so the cost is driven by the stragglers.  Returns
    the final iterates, residual norms, and a convergence mask.
    """
    u = np.array(seeds, dtype=float, copy=True)
    if u.ndim == 1:
        u = u[None, :]
    B = u.shape[0]
    final_norms = np.full(B, np.inf)
    active = np.arange(B)
    for _ in range(max_iter):
        if active.size == 0:
            break
        r, J = residual(u[active])
        norms = np.linalg.norm(r, axis=-1)
        final_norms[active] = norms
        done = norms <= tol
        if done.any():
            active = active[~done]
            r, J = r[~done], J[~done]
            if active.size == 0:
                break
        JT = np.swapaxes(J, -1, -2)
        H = JT @ J[...] + damping * np.eye(u.shape[-1])
        g = np.einsum("bij,bj->bi", JT, r)
        try:
            step = np.linalg.solve(H, g[..., None])[..., 0]
        except np.linalg.LinAlgError:  # pragma: no cover
            step = np.einsum("bij,bj->bi", np.linalg.pinv(H), g)
        lengths = np.linalg.norm(step, axis=-1, keepdims=True)
        scale = np.minimum(1.0, step_cap / np.maximum(lengths, 1e-300))
        u[active] = u[active] - step * scale
    if active.size:
        r, _ = residual(u[active])
        final_norms[active] = np.linalg.norm(r, axis=-1)
    return u, final_norms, final_norms <= max(tol, 1e-9)


def dedup_points(points: np.ndarray, radius: float,
                 difference=None) -> list:
    """Greedy dedup; returns indices of representatives.

    ``difference(a, b)`` may implement circle-aware differences; defaults to
    plain subtraction.
    """
    if difference is None:
        difference = lambda a, b: a - b
    reps: list[int] = []
    for i in range(points.shape[0]):
        keep = True
        for j in reps:
            if np.linalg.norm(difference(points[i], points[j])) <= radius:
                keep = False
                break
        if keep:
            reps.append(i)
    return reps
