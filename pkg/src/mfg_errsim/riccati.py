"""Riccati and backward offset equations of the equilibrium system.

Five coupled objects are solved backward from the horizon:

* P1  -- symmetric Riccati of the individual control problem,
* P0  -- non-symmetric Riccati of the coupled mean-field system,
* P2  -- Riccati of the average-prediction system (P2 = P0 - P1),
* G   -- offset paired with P0 (p = P0 z + G),
* G1  -- offset paired with (P1, P2) (G1 = G),

plus the tracking offset g driven by given mean-field paths.

Sign conventions are derived from first principles by substituting the
affine representations into the coupled forward-backward system; the
identities P2 = P0 - P1 and G1 = G are the consistency arbiters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FiniteEscapeError, IntegrationBlowupError
from .grid import MatrixPath, TimeGrid, VectorPath, require_same_grid
from .ode import rk4_affine, rk4_nonlinear
from .params import SystemParams


def _escape_guard(fn, what):
    try:
        return fn()
    except IntegrationBlowupError as e:
        raise FiniteEscapeError(
            f"{what} escaped to infinity near t={e.time:.6g}", node=e.node, time=e.time
        ) from e


def solve_P1(params: SystemParams, grid: TimeGrid) -> MatrixPath:
    """Symmetric Riccati: -dP1 = [P1 A + A'P1 + (Q_I+Q) - P1 B R^-1 B' P1] dt,
    P1(T) = Qbar_I + Qbar."""
    A, BRB = params.A, params.BRB
    Qsum = params.Q_I + params.Q

    def rhs(t, P):
        return -(P @ A + A.T @ P + Qsum - P @ BRB @ P)

    PT = params.Qbar_I + params.Qbar
    values = _escape_guard(lambda: rk4_nonlinear(rhs, PT, grid, forward=False), "P1")
    return MatrixPath(grid, values)


def solve_P0(params: SystemParams, grid: TimeGrid) -> MatrixPath:
    """Non-symmetric Riccati of the coupled system:
    -dP0 = [P0(A+C) + A'P0 + (Q_I+Q-Q*Gamma) - P0 (B+F) R^-1 B' P0] dt,
    P0(T) = Qbar_I + Qbar - Qbar*Gammabar."""
    AC = params.A + params.C
    At = params.A.T
    BFRB = params.BFRB
    Qeff = -params.Qcal  # Q_I + Q - Q*Gamma

    def rhs(t, P):
        return -(P @ AC + At @ P + Qeff - P @ BFRB @ P)

    PT = params.Qbar_I + params.Qbar - params.Qbar @ params.Gammabar
    values = _escape_guard(lambda: rk4_nonlinear(rhs, PT, grid, forward=False), "P0")
    return MatrixPath(grid, values)


def solve_P2(params: SystemParams, P1: MatrixPath, grid: TimeGrid) -> MatrixPath:
    """Riccati of the average-prediction system, P2(T) = -Qbar*Gammabar."""
    require_same_grid(P1)
    AC = params.A + params.C
    At = params.A.T
    BFRB = params.BFRB
    S = _coupling_weight(params, P1)  # (K+1, n, n)
    K = grid.steps
    Sm = 0.5 * (S[:-1] + S[1:])
    P1m = 0.5 * (P1.values[:-1] + P1.values[1:])

    # stage coefficients by linear interpolation of node values
    def rhs_at(P1k, Sk):
        H1 = AC - BFRB @ P1k
        H2 = At - P1k @ BFRB

        def rhs(P):
            return -(P @ H1 + H2 @ P + Sk - P @ BFRB @ P)

        return rhs

    dt = grid.dt
    P = -params.Qbar @ params.Gammabar
    values = np.empty((K + 1,) + P.shape)
    values[K] = P
    for k in range(K, 0, -1):
        ra = rhs_at(P1.values[k], S[k])
        rb = rhs_at(P1m[k - 1], Sm[k - 1])
        rc = rhs_at(P1.values[k - 1], S[k - 1])
        k1 = ra(P)
        k2 = rb(P - 0.5 * dt * k1)
        k3 = rb(P - 0.5 * dt * k2)
        k4 = rc(P - dt * k3)
        P = P - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(P)):
            raise FiniteEscapeError(
                f"P2 escaped to infinity near t={grid.times[k - 1]:.6g}",
                node=k - 1, time=grid.times[k - 1],
            )
        values[k - 1] = P
    return MatrixPath(grid, values)


def _coupling_weight(params: SystemParams, P1: MatrixPath) -> np.ndarray:
    """S(t) = P1 C - P1 F R^-1 B' P1 - Q*Gamma at every node."""
    P1v = P1.values
    FRB = params.F @ params.RinvBt
    return (
        np.einsum("kij,jl->kil", P1v, params.C)
        - np.einsum("kij,jl,klm->kim", P1v, FRB, P1v)
        - (params.Q @ params.Gamma)
    )


def solve_G(params: SystemParams, P0: MatrixPath, grid: TimeGrid) -> VectorPath:
    """Offset of the coupled system: dG = [-(A' - P0 (B+F) R^-1 B') G + nu] dt,
    G(T) = -Qbar_I sbar - Qbar etabar."""
    At, BFRB, nu = params.A.T, params.BFRB, params.nu
    H = -(At[None, :, :] - np.einsum("kij,jl->kil", P0.values, BFRB))
    f = np.broadcast_to(nu, (grid.steps + 1, params.n)).copy()
    GT = -params.Qbar_I @ params.sbar - params.Qbar @ params.etabar
    values = _escape_guard(lambda: rk4_affine(H, f, GT, grid, forward=False), "G")
    return VectorPath(grid, values)


def solve_G1(params: SystemParams, P1: MatrixPath, P2: MatrixPath, grid: TimeGrid) -> VectorPath:
    """Offset paired with (P1, P2):
    dG1 = [-(A' - (P1+P2)(B+F) R^-1 B') G1 + nu] dt, same terminal as G."""
    At, BFRB, nu = params.A.T, params.BFRB, params.nu
    P12 = P1.values + P2.values
    H = -(At[None, :, :] - np.einsum("kij,jl->kil", P12, BFRB))
    f = np.broadcast_to(nu, (grid.steps + 1, params.n)).copy()
    GT = -params.Qbar_I @ params.sbar - params.Qbar @ params.etabar
    values = _escape_guard(lambda: rk4_affine(H, f, GT, grid, forward=False), "G1")
    return VectorPath(grid, values)


def solve_tracking_offset(
    params: SystemParams,
    P1: MatrixPath,
    z_path: VectorPath,
    ubar_path: VectorPath,
    grid: TimeGrid,
    terminal_z: np.ndarray | None = None,
) -> VectorPath:
    """Backward tracking offset g driven by mean-field paths (z, ubar):

    dg = -[(A' - P1 B R^-1 B') g + (P1 C - Q*Gamma) z + P1 F ubar - Q_I s - Q eta] dt,
    g(T) = -Qbar_I sbar - Qbar (Gammabar z(T) + etabar).
    """
    require_same_grid(P1, z_path, ubar_path)
    At, BRB = params.A.T, params.BRB
    P1v = P1.values
    H = -(At[None, :, :] - np.einsum("kij,jl->kil", P1v, BRB))
    drive = (
        np.einsum("kij,jl,kl->ki", P1v, params.C, z_path.values)
        - np.einsum("ij,kj->ki", params.Q @ params.Gamma, z_path.values)
        + np.einsum("kij,jl,kl->ki", P1v, params.F, ubar_path.values)
        - params.nu
    )
    f = -drive
    zT = z_path.terminal if terminal_z is None else np.asarray(terminal_z, dtype=float)
    gT = -params.Qbar_I @ params.sbar - params.Qbar @ (params.Gammabar @ zT + params.etabar)
    values = _escape_guard(lambda: rk4_affine(H, f, gT, grid, forward=False), "g")
    return VectorPath(grid, values)


@dataclass
class RiccatiBundle:
    """All Riccati/offset solutions on one grid, plus the generating params."""

    params: SystemParams
    grid: TimeGrid
    P0: MatrixPath
    P1: MatrixPath
    P2: MatrixPath
    G: VectorPath
    G1: VectorPath

    @classmethod
    def solve(cls, params: SystemParams, grid: TimeGrid) -> "RiccatiBundle":
        P1 = solve_P1(params, grid)
        P0 = solve_P0(params, grid)
        P2 = solve_P2(params, P1, grid)
        G = solve_G(params, P0, grid)
        G1 = solve_G1(params, P1, P2, grid)
        return cls(params=params, grid=grid, P0=P0, P1=P1, P2=P2, G=G, G1=G1)

    @property
    def Qcal(self) -> np.ndarray:
        return self.params.Qcal

    @property
    def nu(self) -> np.ndarray:
        return self.params.nu


def solve_bundle(params: SystemParams, grid: TimeGrid) -> RiccatiBundle:
    return RiccatiBundle.solve(params, grid)
