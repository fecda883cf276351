"""Equilibrium mean field, feedback law, cost, and related diagnostics.

The equilibrium mean-field state z solves the forward ODE

    dz = [(A + C - (B+F) R^-1 B' P0) z - (B+F) R^-1 B' G] dt,   z(0) = z0,

and the mean-field control is ubar = -R^-1 B' (P0 z + G).  An individual
agent plays the affine feedback u = -R^-1 B' (P1 x + g) where the tracking
offset g is driven by the mean-field paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .grid import MatrixPath, TimeGrid, VectorPath, require_same_grid
from .ode import rk4_affine
from .params import SystemParams
from .riccati import RiccatiBundle, solve_tracking_offset


@dataclass
class MeanField:
    """Equilibrium mean-field state and control paths."""

    z: VectorPath
    ubar: VectorPath


@dataclass
class FeedbackLaw:
    """Affine state feedback u = -R^-1 B' (P1 x + g), valid on [t_from, T]."""

    params: SystemParams
    P1: MatrixPath
    g: VectorPath
    t_from: float = 0.0

    def __call__(self, x, t):
        return self.feedback(x, t)

    def feedback(self, x, t):
        if t < self.t_from - 1e-9 or t > self.g.grid.t_end + 1e-9:
            raise ValueError(f"t={t} outside law domain [{self.t_from}, {self.g.grid.t_end}]")
        x = np.asarray(x, dtype=float)
        return -self.params.RinvBt @ (self.P1.at(t) @ x + self.g.at(t))

    def at_node(self, x, k):
        """Vectorized evaluation at grid node k for a batch of states (N, n)."""
        x = np.asarray(x, dtype=float)
        return -(x @ self.P1[k].T + self.g[k]) @ self.params.RinvBt.T


def feedback(law: FeedbackLaw, x, t):
    return law.feedback(x, t)


def equilibrium_mf(bundle: RiccatiBundle, z0) -> MeanField:
    """Solve the equilibrium mean-field forward ODE from z(0) = z0."""
    params, grid = bundle.params, bundle.grid
    BFRB = params.BFRB
    P0v, Gv = bundle.P0.values, bundle.G.values
    H = (params.A + params.C)[None, :, :] - np.einsum("ij,kjl->kil", BFRB, P0v)
    f = -np.einsum("ij,kj->ki", BFRB, Gv)
    zv = rk4_affine(H, f, np.asarray(z0, dtype=float), grid, forward=True)
    ub = -np.einsum("ij,kj->ki", params.RinvBt, np.einsum("kij,kj->ki", P0v, zv) + Gv)
    return MeanField(z=VectorPath(grid, zv), ubar=VectorPath(grid, ub))


def perturbed_mf(bundle: RiccatiBundle, z0, E_i) -> MeanField:
    """Mean-field prediction of an agent whose initial estimate is z0 + E_i."""
    return equilibrium_mf(bundle, np.asarray(z0, dtype=float) + np.asarray(E_i, dtype=float))


def equilibrium_law(bundle: RiccatiBundle, mf: MeanField) -> FeedbackLaw:
    """Feedback law of the representative agent under a given mean field."""
    g = solve_tracking_offset(bundle.params, bundle.P1, mf.z, mf.ubar, bundle.grid)
    return FeedbackLaw(params=bundle.params, P1=bundle.P1, g=g)


def cost(params: SystemParams, x_path: VectorPath, u_path: VectorPath, z_path: VectorPath) -> float:
    """Quadratic tracking cost of one realized path (trapezoid in time).

    Running terms:  |x - s|^2_{Q_I} + |x - (Gamma z + eta)|^2_Q + |u|^2_R,
    terminal terms: |x(T) - sbar|^2_{Qbar_I} + |x(T) - (Gammabar z(T) + etabar)|^2_{Qbar}.
    """
    grid = require_same_grid(x_path, u_path, z_path)
    x, u, z = x_path.values, u_path.values, z_path.values

    def quad(v, W):
        return np.einsum("ki,ij,kj->k", v, W, v)

    run = (
        quad(x - params.s, params.Q_I)
        + quad(x - (z @ params.Gamma.T + params.eta), params.Q)
        + quad(u, params.R)
    )
    integral = np.trapezoid(run, dx=grid.dt)
    xT = x[-1]
    dT1 = xT - params.sbar
    dT2 = xT - (params.Gammabar @ z[-1] + params.etabar)
    terminal = dT1 @ params.Qbar_I @ dT1 + dT2 @ params.Qbar @ dT2
    return float(integral + terminal)


def _opnorm(M) -> float:
    return float(np.linalg.norm(M, 2))


def existence_check(
    params: SystemParams,
    grid: TimeGrid | None = None,
    Qp=None,
    S=None,
    Qp_bar=None,
    S_bar=None,
):
    """Sufficient condition for a unique mean-field equilibrium.

    Splits the composite running weight Q_I + Q - Q*Gamma as Qp + S with Qp
    positive definite (default Qp = Q_I + Q, S = symmetrized -Q*Gamma; the
    skew part of Q*Gamma is discarded).  Evaluates

        lhs = (1 + sqrt(T) * ||phi||_T * ||Ccal Qp^{-1/2}||) * (1 + N(S)),

    where phi(s, t) is the state-transition matrix of A, and returns
    {"satisfied": lhs < 2, "lhs": lhs}.  The sup in ||phi||_T runs over grid
    nodes; the inner integral uses the trapezoid rule.
    """
    if grid is None:
        grid = params.default_grid()
    QG = params.Q @ params.Gamma
    QGbar = params.Qbar @ params.Gammabar
    if Qp is None:
        Qp = params.Q_I + params.Q
    if S is None:
        S = -0.5 * (QG + QG.T)
    if Qp_bar is None:
        Qp_bar = params.Qbar_I + params.Qbar
    if S_bar is None:
        S_bar = -0.5 * (QGbar + QGbar.T)
    for name, M in (("Qp", Qp), ("Qp_bar", Qp_bar)):
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ValueError(f"{name} must be positive definite") from None

    # matrix square roots via eigendecomposition (weights are SPD)
    def sqrt_pair(M):
        w, V = np.linalg.eigh(np.asarray(M, dtype=float))
        return (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T

    Qb_half, Qb_nhalf = sqrt_pair(Qp_bar)
    _, Qp_nhalf = sqrt_pair(Qp)
    Q_nhalf = Qp_nhalf

    Ccal = params.BFRB
    K = grid.steps
    dt = grid.dt
    # phi(s, t) = exp(A (s - t)) depends only on the lag; precompute per lag
    E1 = expm(params.A * dt)
    powers = np.empty((K + 1,) + params.A.shape)
    powers[0] = np.eye(params.n)
    for k in range(1, K + 1):
        powers[k] = E1 @ powers[k - 1]
    m_int = np.array([_opnorm(powers[k].T @ Qb_half) ** 2 for k in range(K + 1)])
    m_term = np.array([_opnorm(powers[k].T @ Qb_nhalf) ** 2 for k in range(K + 1)])
    # cumulative trapezoid of m_int over the lag variable
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (m_int[:-1] + m_int[1:]))])
    # node t_j has lag range [0, T - t_j], i.e. lags 0..K-j
    vals = np.sqrt(m_term[::-1] + cum[::-1])
    phi_norm = float(np.max(vals))

    NS = max(_opnorm(Qb_nhalf @ S_bar @ Qb_nhalf), _opnorm(Q_nhalf @ S @ Q_nhalf))
    lhs = (1.0 + np.sqrt(params.T) * phi_norm * _opnorm(Ccal @ Qp_nhalf)) * (1.0 + NS)
    return {"satisfied": bool(lhs < 2.0), "lhs": float(lhs)}


def epsilon_nash_gap(
    params: SystemParams,
    N: int,
    seed: int,
    grid: TimeGrid | None = None,
    z0=None,
    init_cov=None,
    D=None,
) -> float:
    """Empirical unilateral-deviation gap of the equilibrium feedback.

    Simulates N agents under the equilibrium law, computes player 1's cost
    against the empirical averages, then recomputes player 1's best response
    to the frozen empirical mean-field paths (same noise) and returns
    J_1(equilibrium) - J_1(best response).  For D = 0 the best response is
    exactly optimal pathwise, so the gap is nonnegative up to roundoff; with
    noise, optimality holds in expectation only and single-seed gaps
    fluctuate around it.
    """
    from . import population

    if N < 2 and not np.allclose(params.C, 0):
        raise ValueError("N must be >= 2 for a coupled game")
    if grid is None:
        grid = params.default_grid()
    if z0 is None:
        z0 = params.s
    if init_cov is None:
        init_cov = np.zeros((params.n, params.n))
    bundle = RiccatiBundle.solve(params, grid)
    mf = equilibrium_mf(bundle, z0)
    law = equilibrium_law(bundle, mf)
    pop = population.sample_population(
        N, init_mean=z0, init_cov=init_cov,
        error_mean=np.zeros(params.n), error_cov=np.zeros((params.n, params.n)),
        seed=seed,
    )
    res = population.simulate(
        params, pop, law, mf_coupling="empirical", grid=grid, seed=seed, D=D)
    x_N, u_N = res.x_N, res.u_N
    tr1 = res.traces[0]
    J_eq = cost(params, tr1.x, tr1.u, x_N)

    # best response to the frozen empirical mean field
    g_br = solve_tracking_offset(params, bundle.P1, x_N, u_N, grid)
    law_br = FeedbackLaw(params=params, P1=bundle.P1, g=g_br)
    x_br, u_br = population.replay_agent(
        params, tr1, law_br, x_N, u_N, grid, seed=seed, D=D
    )
    # the deviator moves the empirical average by its own 1/N share
    from .grid import VectorPath

    x_N_dev = VectorPath(grid, x_N.values + (x_br.values - tr1.x.values) / N)
    J_br = cost(params, x_br, u_br, x_N_dev)
    return float(J_eq - J_br)
