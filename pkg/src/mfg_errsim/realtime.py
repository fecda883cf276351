"""Continuous re-estimation mode: agents re-anchor their mean-field
prediction and feedback law at every grid node.

At an anchor time t0 an agent holds two estimates: z_hat (its own estimate
of the mean-field state) and zbar_hat (its estimate of the population's
average estimate).  From these it predicts the average offset gbar, its own
mean-field path, and its tracking offset, all on [t0, T].  The deviations of
these predictions from the correct-information equilibrium are linear in the
estimate errors, with maps

    dz_hat(t)  = Miz(t) E_i(t0) + M0z(t) Ebar_i(t0),
    dg_i(t)    = Mig(t) E_i(t0) + M0g(t) Ebar_i(t0),

where E_i(t0) = z_hat - z_c(t0) and Ebar_i(t0) = zbar_hat - z_c(t0).

The maps for all anchors are generated from three kernel paths (V, U, J)
computed once per parameter set, which also yields the diagonal maps
t -> M(t; t) needed when agents re-anchor at every instant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeedbackLaw, MeanField, equilibrium_mf
from .deviations import DeviationMaps
from .grid import MatrixPath, TimeGrid, VectorPath
from .ode import invert_path, rk4_affine
from .params import SystemParams
from .riccati import RiccatiBundle, _coupling_weight, solve_tracking_offset


@dataclass
class EstimatorState:
    """An agent's mean-field estimates at anchor time t0."""

    zbar_hat: np.ndarray
    z_hat: np.ndarray
    t0: float


@dataclass
class RealtimeDeviationMaps:
    """Estimate-error-to-deviation maps for one anchor time t0."""

    t0: float
    Miz: MatrixPath
    M0z: MatrixPath
    Mig: MatrixPath
    M0g: MatrixPath


@dataclass
class RealtimeKernels:
    """Anchor-independent kernels from which all realtime maps follow."""

    bundle: RiccatiBundle
    maps: DeviationMaps          # supplies Phi1 and PhiZ
    PhiZ_inv: np.ndarray         # (K+1, n, n)
    Phi1_inv: np.ndarray
    J: np.ndarray                # cumulative coupling integral
    V: np.ndarray                # own-error offset kernel
    U: np.ndarray                # average-error offset kernel
    Mig_diag: np.ndarray         # t -> Mig(t; t)
    M0g_diag: np.ndarray         # t -> M0g(t; t)

    @property
    def grid(self):
        return self.bundle.grid

    @property
    def params(self):
        return self.bundle.params


def build_kernels(bundle: RiccatiBundle, maps: DeviationMaps) -> RealtimeKernels:
    params, grid = bundle.params, bundle.grid
    K = grid.steps
    P1v, P2v = bundle.P1.values, bundle.P2.values
    BFRB, BRB = params.BFRB, params.BRB
    PhiZ, Phi1 = maps.PhiZ, maps.Phi1
    PhiZ_inv = invert_path(PhiZ)
    Phi1_inv = invert_path(Phi1)

    # J(t) = int_0^t PhiZ^-1 (B+F) R^-1 B' P2 Phi1 ds  (trapezoid)
    integrand = np.einsum(
        "kij,jl,klm,kmp->kip", PhiZ_inv, BFRB, P2v, Phi1.values
    )
    seg = 0.5 * grid.dt * (integrand[:-1] + integrand[1:])
    J = np.concatenate([np.zeros((1,) + seg.shape[1:]), np.cumsum(seg, axis=0)])

    S = _coupling_weight(params, bundle.P1)
    Hback = -(params.A.T[None, :, :] - np.einsum("kij,jl->kil", P1v, BRB))

    # V: backward, driven by S PhiZ, terminal -Qbar Gammabar PhiZ(T)
    fV = -np.einsum("kij,kjl->kil", S, PhiZ.values)
    VT = -params.Qbar @ params.Gammabar @ PhiZ.terminal
    V = rk4_affine(Hback, fV, VT, grid, forward=False)

    # U: backward, driven by -S PhiZ J - P1 F R^-1 B' P2 Phi1,
    #    terminal +Qbar Gammabar PhiZ(T) J(T)
    FRB = params.F @ params.RinvBt
    fU = (
        np.einsum("kij,kjl->kil", -fV, J)  # = +S PhiZ J
        + np.einsum("kij,jl,klm,kmp->kip", P1v, FRB, P2v, Phi1.values)
    )
    UT = params.Qbar @ params.Gammabar @ PhiZ.terminal @ J[K]
    U = rk4_affine(Hback, fU, UT, grid, forward=False)

    Mig_diag = np.einsum("kij,kjl->kil", V, PhiZ_inv)
    M0g_diag = np.einsum(
        "kij,kjl->kil", U + np.einsum("kij,kjl->kil", V, J), Phi1_inv
    )
    return RealtimeKernels(
        bundle=bundle, maps=maps, PhiZ_inv=PhiZ_inv, Phi1_inv=Phi1_inv,
        J=J, V=V, U=U, Mig_diag=Mig_diag, M0g_diag=M0g_diag,
    )


def build_realtime_maps(kernels: RealtimeKernels, t0) -> RealtimeDeviationMaps:
    """Deviation maps for a fixed anchor t0, on the full grid."""
    grid = kernels.grid
    k0 = grid.index_of(t0)
    PhiZ = kernels.maps.PhiZ.values
    PhiZ_inv0 = kernels.PhiZ_inv[k0]
    Phi1_inv0 = kernels.Phi1_inv[k0]
    J0 = kernels.J[k0]
    Miz = np.einsum("kij,jl->kil", PhiZ, PhiZ_inv0)
    M0z = -np.einsum("kij,kjl,lm->kim", PhiZ, kernels.J - J0, Phi1_inv0)
    Mig = np.einsum("kij,jl->kil", kernels.V, PhiZ_inv0)
    M0g = np.einsum(
        "kij,jl->kil",
        kernels.U + np.einsum("kij,jl->kil", kernels.V, J0),
        Phi1_inv0,
    )
    return RealtimeDeviationMaps(
        t0=float(t0),
        Miz=MatrixPath(grid, Miz), M0z=MatrixPath(grid, M0z),
        Mig=MatrixPath(grid, Mig), M0g=MatrixPath(grid, M0g),
    )


def restricted_prediction(bundle: RiccatiBundle, est: EstimatorState, route="p2"):
    """One agent's full prediction and strategy from its estimates at t0.

    route "p2" propagates the average estimate with (P1 + P2, G1); route
    "p0" uses the equivalent (P0, G) representation.  Returns the predicted
    average state zbar, average offset gbar, own mean-field estimate z_hat,
    tracking offset g_i, and the feedback law on [t0, T].
    """
    params, grid = bundle.params, bundle.grid
    k0 = grid.index_of(est.t0)
    sub = grid.subgrid(k0) if k0 > 0 else grid
    P1 = bundle.P1.slice(k0) if k0 > 0 else bundle.P1
    BFRB = params.BFRB
    if route == "p2":
        P12 = P1.values + (bundle.P2.slice(k0) if k0 > 0 else bundle.P2).values
        Gv = (bundle.G1.slice(k0) if k0 > 0 else bundle.G1).values
        H = (params.A + params.C)[None, :, :] - np.einsum("ij,kjl->kil", BFRB, P12)
        f = -np.einsum("ij,kj->ki", BFRB, Gv)
        zbar_v = rk4_affine(H, f, np.asarray(est.zbar_hat, dtype=float), sub, forward=True)
        gbar_v = np.einsum("kij,kj->ki", P12 - P1.values, zbar_v) + Gv
    elif route == "p0":
        P0 = (bundle.P0.slice(k0) if k0 > 0 else bundle.P0).values
        Gv = (bundle.G.slice(k0) if k0 > 0 else bundle.G).values
        H = (params.A + params.C)[None, :, :] - np.einsum("ij,kjl->kil", BFRB, P0)
        f = -np.einsum("ij,kj->ki", BFRB, Gv)
        zbar_v = rk4_affine(H, f, np.asarray(est.zbar_hat, dtype=float), sub, forward=True)
        gbar_v = np.einsum("kij,kj->ki", P0 - P1.values, zbar_v) + Gv
    else:
        raise ValueError(f"unknown route {route!r}")
    zbar = VectorPath(sub, zbar_v)
    gbar = VectorPath(sub, gbar_v)

    # own mean-field estimate, driven by the predicted average offset
    Hz = (params.A + params.C)[None, :, :] - np.einsum("ij,kjl->kil", BFRB, P1.values)
    fz = -np.einsum("ij,kj->ki", BFRB, gbar_v)
    zhat_v = rk4_affine(Hz, fz, np.asarray(est.z_hat, dtype=float), sub, forward=True)
    z_hat = VectorPath(sub, zhat_v)
    ubar_v = -np.einsum(
        "ij,kj->ki", params.RinvBt,
        np.einsum("kij,kj->ki", P1.values, zhat_v) + gbar_v,
    )
    ubar = VectorPath(sub, ubar_v)
    g_i = solve_tracking_offset(params, P1, z_hat, ubar, sub)
    law = FeedbackLaw(params=params, P1=P1, g=g_i, t_from=float(est.t0))
    return {"zbar": zbar, "gbar": gbar, "z_hat": z_hat, "ubar": ubar,
            "g_i": g_i, "law": law}


def deviation_quadrature(kernels: RealtimeKernels, Ebar_path, Ebar1_path) -> VectorPath:
    """Predicted actual-mean-field deviation from realized estimate errors.

    Ebar_path(t) is the population-average own-estimate error, Ebar1_path(t)
    the average of the agents' average-estimate errors.  Evaluates

        dz_A(t) = -PhiZ(t) int_0^t PhiZ^-1 (B+F) R^-1 B'
                  [Mig(s; s) Ebar(s) + M0g(s; s) Ebar1(s)] ds.
    """
    grid = kernels.grid
    params = kernels.params
    dg = (
        np.einsum("kij,kj->ki", kernels.Mig_diag, Ebar_path.values)
        + np.einsum("kij,kj->ki", kernels.M0g_diag, Ebar1_path.values)
    )
    w = -np.einsum("kij,jl,kl->ki", kernels.PhiZ_inv, params.BFRB, dg)
    seg = 0.5 * grid.dt * (w[:-1] + w[1:])
    cum = np.concatenate([np.zeros((1, params.n)), np.cumsum(seg, axis=0)])
    vals = np.einsum("kij,kj->ki", kernels.maps.PhiZ.values, cum)
    return VectorPath(grid, vals)


# ---------------------------------------------------------------------------
# estimator policies: policy(agent_id, k, t) -> (own-estimate error E_i(t),
#                                                average-estimate error Ebar_i(t))


def truth_policy():
    """All estimates correct at every node."""

    def policy(agent_id, k, t):
        return 0.0, 0.0

    return policy


def hold_initial_error_policy(errors, Ebar):
    """Estimate = correct value + the agent's fixed initial offset."""
    errors = np.asarray(errors, dtype=float)
    Ebar = np.asarray(Ebar, dtype=float)

    def policy(agent_id, k, t):
        return errors[agent_id], Ebar

    return policy


def decay_to_truth_policy(errors, Ebar, rate=1.0):
    """Initial offsets shrinking exponentially as estimation improves."""
    errors = np.asarray(errors, dtype=float)
    Ebar = np.asarray(Ebar, dtype=float)

    def policy(agent_id, k, t):
        damp = np.exp(-rate * t)
        return errors[agent_id] * damp, Ebar * damp

    return policy


def constant_error_policy(e0):
    """Every agent holds the same fixed estimate error (both estimates)."""
    e0 = np.asarray(e0, dtype=float)

    def policy(agent_id, k, t):
        return e0, e0

    return policy


def realtime_simulate(
    params: SystemParams,
    bundle: RiccatiBundle,
    population,
    estimator_policy,
    grid: TimeGrid | None = None,
    seed: int = 0,
    z0=None,
    D=None,
    kernels: RealtimeKernels | None = None,
):
    """Simulate N agents who re-anchor their strategy at every grid node.

    Each node, agent i's control is the anchored feedback evaluated at the
    anchor itself: u_i(t_k) = -R^-1 B'(P1 x_i + g_c + Mig(t_k;t_k) E_i(t_k)
    + M0g(t_k;t_k) Ebar_i(t_k)), with the estimate errors supplied by the
    policy.  Returns the realized mean field, the correct-information
    reference, realized error paths, and a report comparing the realized
    deviation with the linear-theory quadrature.
    """
    from .deviations import build_maps
    from .population import _draw_noise

    if grid is None:
        grid = bundle.grid
    if kernels is None:
        kernels = build_kernels(bundle, build_maps(bundle))
    n = params.n
    N = len(population)
    K, dt = grid.steps, grid.dt
    sqdt = np.sqrt(dt)
    if z0 is None:
        z0 = np.mean([p[0] for p in population], axis=0)
    mf_c = equilibrium_mf(bundle, z0)
    # correct-information offset: g_c = (P0 - P1) z_c + G
    g_c = (
        np.einsum("kij,kj->ki", bundle.P0.values - bundle.P1.values, mf_c.z.values)
        + bundle.G.values
    )
    if D is None:
        D = params.D
    D = np.eye(n) * D if np.ndim(D) == 0 else np.asarray(D, dtype=float)
    noisy = not np.allclose(D, 0.0)
    noise = _draw_noise(N, K, n, seed) if noisy else None

    x = np.array([p[0] for p in population], dtype=float)
    times = grid.times
    z_A = np.empty((K + 1, n))
    Ebar_real = np.empty((K + 1, n))
    Ebar1_real = np.empty((K + 1, n))
    RB = params.RinvBt
    for k in range(K + 1):
        errs = np.array([estimator_policy(i, k, times[k]) for i in range(N)], dtype=float)
        if errs.ndim == 2:  # scalar (0.0, 0.0) pairs broadcast to vectors
            errs = errs[:, :, None] * np.ones(n)
        E_own, E_avg = errs[:, 0, :], errs[:, 1, :]
        Ebar_real[k] = np.mean(E_own, axis=0)
        Ebar1_real[k] = np.mean(E_avg, axis=0)
        g_ik = g_c[k] + E_own @ kernels.Mig_diag[k].T + E_avg @ kernels.M0g_diag[k].T
        u = -(x @ bundle.P1[k].T + g_ik) @ RB.T
        z_A[k] = np.mean(x, axis=0)
        if k < K:
            mf_x = z_A[k]
            mf_u = np.mean(u, axis=0)
            drift = x @ params.A.T + u @ params.B.T + mf_x @ params.C.T + mf_u @ params.F.T
            x = x + drift * dt
            if noisy:
                x = x + (noise[:, k, :] @ D.T) * sqdt
    z_A_path = VectorPath(grid, z_A)
    Ebar_path = VectorPath(grid, Ebar_real)
    Ebar1_path = VectorPath(grid, Ebar1_real)
    predicted = deviation_quadrature(kernels, Ebar_path, Ebar1_path)
    realized = z_A - mf_c.z.values
    report = {
        "max_abs_deviation": float(np.max(np.abs(realized))),
        "max_abs_mismatch": float(np.max(np.abs(realized - predicted.values))),
    }
    return {
        "z_A": z_A_path,
        "z_c": mf_c.z,
        "Ebar": Ebar_path,
        "Ebar1": Ebar1_path,
        "predicted_deviation": predicted,
        "deviation_report": report,
    }
