"""System parameters and canonical fixtures.

SystemParams collects every model matrix/vector of the game: state dynamics
(A, B, C, F, D), running and terminal cost weights (Q_I, Q, Qbar_I, Qbar, R),
tracking couplings (Gamma, Gammabar) and targets (eta, etabar, s, sbar), and
the horizon T.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import TimeGrid


def _mat(x, n, m, name):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.shape != (n, m):
        raise ValueError(f"{name} must be {n}x{m}, got {a.shape}")
    return a


def _vec(x, n, name):
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if a.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {a.shape}")
    return a


def _check_spd(M, name):
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite (Cholesky failed)") from None


@dataclass(frozen=True)
class SystemParams:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    D: np.ndarray
    Q_I: np.ndarray
    Q: np.ndarray
    Qbar_I: np.ndarray
    Qbar: np.ndarray
    R: np.ndarray
    Gamma: np.ndarray
    Gammabar: np.ndarray
    eta: np.ndarray
    etabar: np.ndarray
    s: np.ndarray
    sbar: np.ndarray
    T: float
    # test-only escape hatch for semidefinite cost fixtures
    relaxed: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        n = np.atleast_2d(np.asarray(self.A)).shape[0]
        d = np.atleast_2d(np.asarray(self.R)).shape[0]
        for name in ("A", "C", "F", "D", "Q_I", "Q", "Qbar_I", "Qbar", "Gamma", "Gammabar"):
            m = n
            object.__setattr__(self, name, _mat(getattr(self, name), n, m, name))
        object.__setattr__(self, "B", _mat(self.B, n, d, "B"))
        object.__setattr__(self, "R", _mat(self.R, d, d, "R"))
        for name in ("eta", "etabar", "s", "sbar"):
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not self.relaxed:
            for name in ("Q_I", "Q", "Qbar_I", "Qbar", "R"):
                _check_spd(getattr(self, name), name)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.R.shape[0]

    # frequently used compounds
    @property
    def Rinv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @property
    def RinvBt(self) -> np.ndarray:
        return self.Rinv @ self.B.T

    @property
    def BRB(self) -> np.ndarray:
        """B R^{-1} B^T."""
        return self.B @ self.RinvBt

    @property
    def BFRB(self) -> np.ndarray:
        """(B + F) R^{-1} B^T."""
        return (self.B + self.F) @ self.RinvBt

    @property
    def Qcal(self) -> np.ndarray:
        """Composite running weight Q*Gamma - Q_I - Q of the coupled system."""
        return self.Q @ self.Gamma - self.Q_I - self.Q

    @property
    def nu(self) -> np.ndarray:
        """Composite running target Q_I s + Q eta."""
        return self.Q_I @ self.s + self.Q @ self.eta

    def with_(self, **kw) -> "SystemParams":
        return replace(self, **kw)

    def default_grid(self, steps: int = 2000) -> TimeGrid:
        return TimeGrid(0.0, self.T, steps)


def p6_params(D_scale: float = 0.05) -> SystemParams:
    """Canonical 2-d fixture "P6".

    sbar is set equal to s (the barred quantities mirror the unbarred ones
    elsewhere in the fixture).
    """
    I = np.eye(2)
    s = np.array([0.5, 0.3])
    return SystemParams(
        A=-I, B=0.5 * I, C=0.5 * I, F=0.5 * I, D=D_scale * I,
        Q_I=I, Q=I, Qbar_I=I, Qbar=I, R=I,
        Gamma=I, Gammabar=I,
        eta=np.zeros(2), etabar=np.zeros(2), s=s, sbar=s,
        T=2.0,
    )


P6_Z0 = np.array([0.3, 0.5])
P6_INIT_COV = 0.003 * np.eye(2)
P6_ERROR_COV = 0.1 * np.eye(2)
P6_EBAR_BASE = np.array([0.1, -0.1])


def s1_params() -> SystemParams:
    """Scalar fixture "S1": stationary Riccati with P1(T) at the fixed point."""
    one = np.eye(1)
    z = np.zeros(1)
    return SystemParams(
        A=0 * one, B=one, C=0 * one, F=0 * one, D=0 * one,
        Q_I=0.5 * one, Q=0.5 * one, Qbar_I=0.5 * one, Qbar=0.5 * one, R=one,
        Gamma=0 * one, Gammabar=0 * one,
        eta=z, etabar=z, s=z, sbar=z,
        T=2.0,
    )
