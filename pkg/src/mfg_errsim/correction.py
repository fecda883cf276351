"""One-time recovery of information errors from an agent's own trajectory.

An agent observes its own state and control, so the drift residual

    Ob(t) = x_dot - A x - B u = C z_A(t) + F ubar_A(t)

reveals the mean field it actually lives in.  Subtracting the agent's own
prediction leaves an affine function of the unknown errors,

    Ob1(t) = K1(t) Ebar + K2(t) E_i,

with K1 = (C - F R^-1 B' P1) Mz - F R^-1 B' Mg and
K2 = -(C - F R^-1 B' P1) Phi1 + F R^-1 B' Mg.  Sampling Ob1 at m times and
stacking gives a linear system; if its rank is 2n the errors are uniquely
recoverable, the true mean field at the correction time t0 can be
reconstructed, and the game restarted from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeedbackLaw
from .deviations import DeviationMaps
from .errors import IdentifiabilityError
from .grid import MatrixPath, VectorPath
from .ode import rk4_affine
from .params import SystemParams
from .population import AgentTrace
from .riccati import RiccatiBundle, _coupling_weight, solve_tracking_offset

DEFAULT_SV_TOL = 1e-8
DEFAULT_SAMPLES = 8


def observable_path(trace, params: SystemParams, grid=None, mode="finite-difference") -> VectorPath:
    """Extract Ob(t) = x_dot - A x - B u from an agent's realized path.

    mode "exact-drift" uses the stored simulation drift (validation only);
    "finite-difference" estimates x_dot by central differences, which is all
    a real agent can do.
    """
    if isinstance(trace, AgentTrace):
        x, u, drift = trace.x, trace.u, trace.drift
    else:
        x, u, drift = trace  # (x, u, drift-or-None) triple
    if grid is None:
        grid = x.grid
    if grid.steps < 2:
        raise ValueError("need at least three nodes to estimate the drift")
    xv, uv = x.values, u.values
    if mode == "exact-drift":
        if drift is None:
            raise ValueError("exact-drift mode requires a stored drift path")
        xdot = drift.values
    elif mode == "finite-difference":
        dt = grid.dt
        xdot = np.empty_like(xv)
        xdot[1:-1] = (xv[2:] - xv[:-2]) / (2.0 * dt)
        xdot[0] = (-3.0 * xv[0] + 4.0 * xv[1] - xv[2]) / (2.0 * dt)
        xdot[-1] = (3.0 * xv[-1] - 4.0 * xv[-2] + xv[-3]) / (2.0 * dt)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ob = xdot - xv @ params.A.T - uv @ params.B.T
    return VectorPath(grid, ob)


def residual_path(Ob: VectorPath, z_i: VectorPath, g_i: VectorPath,
                  params: SystemParams, P1: MatrixPath) -> VectorPath:
    """Ob1(t) = Ob(t) - (C - F R^-1 B' P1) z_i(t) + F R^-1 B' g_i(t)."""
    FRB = params.F @ params.RinvBt
    pred = (
        z_i.values @ params.C.T
        - np.einsum("ij,kjl,kl->ki", FRB, P1.values, z_i.values)
        - g_i.values @ FRB.T
    )
    return VectorPath(Ob.grid, Ob.values - pred)


def k_matrices(maps: DeviationMaps) -> tuple[MatrixPath, MatrixPath]:
    """The coefficient paths of Ob1 = K1 Ebar + K2 E_i."""
    params = maps.params
    FRB = params.F @ params.RinvBt
    P1v = maps.bundle.P1.values
    CFP = params.C[None, :, :] - np.einsum("ij,kjl->kil", FRB, P1v)
    K1 = (
        np.einsum("kij,kjl->kil", CFP, maps.Mz.values)
        - np.einsum("ij,kjl->kil", FRB, maps.Mg.values)
    )
    K2 = (
        -np.einsum("kij,kjl->kil", CFP, maps.Phi1.values)
        + np.einsum("ij,kjl->kil", FRB, maps.Mg.values)
    )
    return MatrixPath(maps.grid, K1), MatrixPath(maps.grid, K2)


def default_sample_times(grid, t0, m=DEFAULT_SAMPLES):
    """m equispaced grid nodes in (0, t0]."""
    k0 = grid.index_of(t0)
    if k0 < m:
        raise ValueError(f"t0={t0} leaves fewer than {m} nodes to sample")
    ks = np.linspace(k0 / m, k0, m).round().astype(int)
    return [float(grid.times[k]) for k in ks]


@dataclass
class CorrectionProblem:
    """Stacked linear system for recovering (Ebar, E_i) at time t0."""

    maps: DeviationMaps
    t0: float
    sample_times: list
    K1: MatrixPath
    K2: MatrixPath
    stacked_K: np.ndarray
    stacked_Ob1: np.ndarray
    z_i_t0: np.ndarray | None = None
    sv_tol: float = DEFAULT_SV_TOL

    @property
    def n(self):
        return self.maps.params.n


def build_correction_problem(maps: DeviationMaps, Ob1: VectorPath, t0,
                             sample_times=None, z_i_t0=None,
                             sv_tol=DEFAULT_SV_TOL) -> CorrectionProblem:
    grid = maps.grid
    if sample_times is None:
        sample_times = default_sample_times(grid, t0)
    sample_times = sorted(float(t) for t in sample_times)
    if not sample_times:
        raise ValueError("sample_times must be nonempty")
    if sample_times[0] < grid.t_start - 1e-9 or sample_times[-1] > t0 + 1e-9:
        raise ValueError(f"sample times must lie in [0, t0={t0}]")
    K1, K2 = k_matrices(maps)
    rows_K, rows_b = [], []
    for t in sample_times:
        rows_K.append(np.hstack([K1.at(t), K2.at(t)]))
        rows_b.append(Ob1.at(t))
    return CorrectionProblem(
        maps=maps, t0=float(t0), sample_times=sample_times,
        K1=K1, K2=K2,
        stacked_K=np.vstack(rows_K), stacked_Ob1=np.concatenate(rows_b),
        z_i_t0=None if z_i_t0 is None else np.asarray(z_i_t0, dtype=float),
        sv_tol=sv_tol,
    )


def identifiability(problem: CorrectionProblem):
    """Numerical rank of the stacked coefficient matrix."""
    sv = np.linalg.svd(problem.stacked_K, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(sv > problem.sv_tol * sv[0]))
    return {"rank": rank, "identifiable": rank == 2 * problem.n}


@dataclass
class CorrectionResult:
    E_bar: np.ndarray
    E_i: np.ndarray
    z_A_t0: np.ndarray | None
    identifiable: bool
    rank: int
    residual: float


def recover_errors(problem: CorrectionProblem) -> CorrectionResult:
    """Least-squares recovery of (Ebar, E_i), plus the true mean field at t0.

    z_A(t0) = z_i(t0) + Mz(t0) Ebar - Phi1(t0) E_i  (requires z_i_t0).
    """
    ident = identifiability(problem)
    if not ident["identifiable"]:
        raise IdentifiabilityError(
            f"stacked system has rank {ident['rank']} < {2 * problem.n}; "
            "errors are not recoverable from these samples"
        )
    n = problem.n
    sol, *_ = np.linalg.lstsq(problem.stacked_K, problem.stacked_Ob1, rcond=None)
    E_bar, E_i = sol[:n], sol[n:]
    residual = float(np.linalg.norm(problem.stacked_K @ sol - problem.stacked_Ob1))
    z_A_t0 = None
    if problem.z_i_t0 is not None:
        maps = problem.maps
        t0 = problem.t0
        z_A_t0 = problem.z_i_t0 + maps.Mz.at(t0) @ E_bar - maps.Phi1.at(t0) @ E_i
    return CorrectionResult(
        E_bar=E_bar, E_i=E_i, z_A_t0=z_A_t0,
        identifiable=True, rank=ident["rank"], residual=residual,
    )


def modified_game(params: SystemParams, bundle: RiccatiBundle, z_A_t0, t0):
    """Restart the equilibrium from the reconstructed mean field at t0.

    Returns the corrected mean field z_new, average control, the tracking
    offset g_new, and the feedback law valid on [t0, T].
    """
    grid = bundle.grid
    k0 = grid.index_of(t0)
    sub = grid.subgrid(k0)
    P0 = bundle.P0.slice(k0)
    P1 = bundle.P1.slice(k0)
    G = bundle.G.slice(k0)
    BFRB = params.BFRB
    H = (params.A + params.C)[None, :, :] - np.einsum("ij,kjl->kil", BFRB, P0.values)
    f = -np.einsum("ij,kj->ki", BFRB, G.values)
    zv = rk4_affine(H, f, np.asarray(z_A_t0, dtype=float), sub, forward=True)
    z_new = VectorPath(sub, zv)
    ub = -np.einsum("ij,kj->ki", params.RinvBt,
                    np.einsum("kij,kj->ki", P0.values, zv) + G.values)
    ubar_new = VectorPath(sub, ub)
    g_new = solve_tracking_offset(params, P1, z_new, ubar_new, sub)
    law = FeedbackLaw(params=params, P1=P1, g=g_new, t_from=float(t0))
    return {"z_new": z_new, "ubar_new": ubar_new, "g_new": g_new, "law": law}


def corrected_mf_deviation(maps: DeviationMaps, t0, E_bar) -> VectorPath:
    """Post-correction mean-field deviation on [t0, T].

    After every agent corrects at t0, the only remaining discrepancy is the
    initial offset z_A(t0) - z_c(t0) = Mz(t0) Ebar, which then propagates
    through the correct-information equilibrium dynamics:
    dz_new(t) = Phi1(t) Phi1(t0)^{-1} Mz(t0) Ebar.
    """
    grid = maps.grid
    k0 = grid.index_of(t0)
    E_bar = np.asarray(E_bar, dtype=float)
    seed_vec = maps.Mz[k0] @ E_bar
    w = np.linalg.solve(maps.Phi1[k0], seed_vec)
    vals = np.einsum("kij,j->ki", maps.Phi1.values[k0:], w)
    sub = grid.subgrid(k0)
    return VectorPath(sub, vals)


def modified_offset_map(maps: DeviationMaps, t0) -> MatrixPath:
    """Map Ebar -> deviation of the post-correction offset g_new on [t0, T].

    Built by the same backward ODE as the pre-correction offset map, driven
    by the post-correction mean-field deviation Phi1(t) Phi1(t0)^{-1} Mz(t0).
    """
    bundle = maps.bundle
    params = bundle.params
    grid = maps.grid
    k0 = grid.index_of(t0)
    sub = grid.subgrid(k0)
    seed = np.linalg.solve(maps.Phi1[k0], maps.Mz[k0])
    dPhi = np.einsum("kij,jl->kil", maps.Phi1.values[k0:], seed)
    P1v = bundle.P1.values[k0:]
    S = _coupling_weight(params, bundle.P1)[k0:]
    Hg = -(params.A.T[None, :, :] - np.einsum("kij,jl->kil", P1v, params.BFRB))
    f = -np.einsum("kij,kjl->kil", S, dPhi)
    MT = -params.Qbar @ params.Gammabar @ dPhi[-1]
    vals = rk4_affine(Hg, f, MT, sub, forward=False)
    return MatrixPath(sub, vals)
