"""Fixed-step integration of time-varying linear/matrix ODEs.

The workhorse is classical 4th-order Runge-Kutta on a uniform grid.  Stage
values of time-varying coefficients at half-steps come from linear
interpolation of node values, so every coefficient can live on the same
grid as the solution.  Backward problems are integrated in reversed time
with negated right-hand side; returned paths are always forward-indexed.
"""

from __future__ import annotations

import numpy as np

from .errors import IntegrationBlowupError, SingularMatrixError
from .grid import MatrixPath, TimeGrid, VectorPath

_RCOND_MIN = 1e-12


def _coef_nodes(obj, grid, like=None):
    """Normalize a coefficient (None / constant / path / callable) to node values.

    Returns an array of shape (steps+1, ...) or None.
    """
    if obj is None:
        return None
    if callable(obj):
        return np.array([np.asarray(obj(t), dtype=float) for t in grid.times])
    if isinstance(obj, (MatrixPath, VectorPath)):
        if obj.grid.steps != grid.steps or abs(obj.grid.t_start - grid.t_start) > 1e-9:
            raise ValueError("coefficient path lives on a different grid")
        return obj.values
    arr = np.asarray(obj, dtype=float)
    if arr.ndim >= 1 and arr.shape[0] == grid.steps + 1 and (like is None or arr.ndim == like + 1):
        return arr
    # constant coefficient, broadcast to all nodes
    return np.broadcast_to(arr, (grid.steps + 1,) + arr.shape).copy()


def _apply(H, v):
    return H @ v if H is not None else np.zeros_like(v)


def _check_finite(v, k, t):
    if not np.all(np.isfinite(v)):
        raise IntegrationBlowupError(
            f"integration blew up at node {k} (t={t:.6g})", node=k, time=t
        )


def rk4_affine(H, f, v0, grid, forward=True):
    """RK4 for dv/dt = H(t) v + f(t) with H, f given as node arrays (or None).

    v0 is the value at t_start (forward) or t_end (backward).  Returns the
    full forward-indexed array of node values.
    """
    K = grid.steps
    dt = grid.dt
    times = grid.times
    v = np.asarray(v0, dtype=float).copy()
    out = np.empty((K + 1,) + v.shape)
    Hm = None if H is None else 0.5 * (H[:-1] + H[1:])
    fm = None if f is None else 0.5 * (f[:-1] + f[1:])

    def stage(Hk, fk, vk):
        r = _apply(Hk, vk)
        if fk is not None:
            r = r + fk
        return r

    if forward:
        out[0] = v
        for k in range(K):
            Ha, Hb, Hc = (None, None, None) if H is None else (H[k], Hm[k], H[k + 1])
            fa, fb, fc = (None, None, None) if f is None else (f[k], fm[k], f[k + 1])
            k1 = stage(Ha, fa, v)
            k2 = stage(Hb, fb, v + 0.5 * dt * k1)
            k3 = stage(Hb, fb, v + 0.5 * dt * k2)
            k4 = stage(Hc, fc, v + dt * k3)
            v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check_finite(v, k + 1, times[k + 1])
            out[k + 1] = v
    else:
        out[K] = v
        for k in range(K, 0, -1):
            Ha, Hb, Hc = (None, None, None) if H is None else (H[k], Hm[k - 1], H[k - 1])
            fa, fb, fc = (None, None, None) if f is None else (f[k], fm[k - 1], f[k - 1])
            k1 = stage(Ha, fa, v)
            k2 = stage(Hb, fb, v - 0.5 * dt * k1)
            k3 = stage(Hb, fb, v - 0.5 * dt * k2)
            k4 = stage(Hc, fc, v - dt * k3)
            v = v - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check_finite(v, k - 1, times[k - 1])
            out[k - 1] = v
    return out


def rk4_nonlinear(rhs, v0, grid, forward=True):
    """RK4 for dv/dt = rhs(t, v) with a general (possibly nonlinear) rhs."""
    K = grid.steps
    dt = grid.dt
    times = grid.times
    v = np.asarray(v0, dtype=float).copy()
    out = np.empty((K + 1,) + v.shape)
    if forward:
        out[0] = v
        rng = range(K)
    else:
        out[K] = v
        rng = range(K, 0, -1)
    for k in rng:
        if forward:
            t, h, knext = times[k], dt, k + 1
        else:
            t, h, knext = times[k], -dt, k - 1
        k1 = rhs(t, v)
        k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2)
        k4 = rhs(t + h, v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(v, knext, times[knext])
        out[knext] = v
    return out


def integrate_linear_ode(H, f, boundary, grid, direction="forward"):
    """Solve dv/dt = H(t) v + f(t) on the grid with a boundary value.

    boundary is a (time, value) pair; the time must be the grid start for
    forward problems and the grid end for backward problems.  Returns a
    VectorPath for vector-valued problems, MatrixPath for matrix-valued.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    t_b, v_b = boundary
    v_b = np.asarray(v_b, dtype=float)
    expect = grid.t_start if direction == "forward" else grid.t_end
    if abs(t_b - expect) > 1e-9:
        raise ValueError(
            f"boundary time {t_b} must be the grid {'start' if direction == 'forward' else 'end'} ({expect})"
        )
    Hn = _coef_nodes(H, grid, like=2)
    fn = _coef_nodes(f, grid, like=v_b.ndim)
    values = rk4_affine(Hn, fn, v_b, grid, forward=(direction == "forward"))
    if v_b.ndim == 1:
        return VectorPath(grid, values)
    return MatrixPath(grid, values)


def fundamental_solution(H, t_ref, grid=None):
    """Fundamental solution Phi with dPhi/dt = H(t) Phi and Phi(t_ref) = I.

    Phi(t) Phi(s)^{-1} is then the state-transition matrix from s to t.
    """
    if isinstance(H, MatrixPath):
        grid = H.grid
    elif grid is None:
        raise ValueError("grid required when H is not a MatrixPath")
    Hn = _coef_nodes(H, grid, like=2)
    n, m = Hn.shape[1:]
    if n != m:
        raise ValueError(f"H must be square, got {n}x{m}")
    k_ref = grid.index_of(t_ref)
    eye = np.eye(n)
    K = grid.steps
    values = np.empty((K + 1, n, n))
    if k_ref < K:
        sub = grid.subgrid(k_ref, K)
        values[k_ref:] = rk4_affine(Hn[k_ref:], None, eye, sub, forward=True)
    if k_ref > 0:
        sub = grid.subgrid(0, k_ref)
        values[: k_ref + 1] = rk4_affine(Hn[: k_ref + 1], None, eye, sub, forward=False)
    values[k_ref] = eye
    return MatrixPath(grid, values)


def invert_path(Phi):
    """Nodewise inverses of a square MatrixPath, with conditioning guard."""
    vals = Phi.values
    rcond = 1.0 / np.linalg.cond(vals)
    if np.any(rcond < _RCOND_MIN):
        k = int(np.argmin(rcond))
        raise SingularMatrixError(
            f"path matrix at node {k} is numerically singular (rcond={rcond[k]:.3g})"
        )
    return np.linalg.inv(vals)


def variation_of_constants(Phi, f, boundary, Phi_inv=None):
    """Solve dv/dt = H(t) v + f(t) from Phi, via variation of constants.

    v(t) = Phi(t) Phi(t_b)^{-1} v_b + Phi(t) * integral_{t_b}^{t} Phi(s)^{-1} f(s) ds,
    with the integral evaluated by the trapezoid rule on the grid.
    """
    grid = Phi.grid
    fn = _coef_nodes(f, grid)
    t_b, v_b = boundary
    v_b = np.asarray(v_b, dtype=float)
    k_b = grid.index_of(t_b)
    if Phi_inv is None:
        Phi_inv = invert_path(Phi)
    if fn is None:
        integ = np.zeros((grid.steps + 1,) + v_b.shape)
    else:
        w = np.einsum("kij,kj...->ki...", Phi_inv, fn)
        # cumulative trapezoid anchored at node k_b
        seg = 0.5 * grid.dt * (w[:-1] + w[1:])
        cum = np.concatenate([np.zeros((1,) + w.shape[1:]), np.cumsum(seg, axis=0)])
        integ = cum - cum[k_b]
    base = np.einsum("kij,j...->ki...", Phi.values, Phi_inv[k_b] @ v_b)
    corr = np.einsum("kij,kj...->ki...", Phi.values, integ)
    values = base + corr
    if v_b.ndim == 1:
        return VectorPath(grid, values)
    return MatrixPath(grid, values)
