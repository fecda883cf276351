"""Shared fixtures: the canonical 2-d parameter set solved once per session."""

import numpy as np
import pytest

from mfg_errsim.core import equilibrium_law, equilibrium_mf
from mfg_errsim.deviations import build_maps
from mfg_errsim.params import P6_Z0, p6_params
from mfg_errsim.realtime import build_kernels
from mfg_errsim.riccati import RiccatiBundle


@pytest.fixture(scope="session")
def params():
    return p6_params()


@pytest.fixture(scope="session")
def grid(params):
    return params.default_grid(2000)


@pytest.fixture(scope="session")
def bundle(params, grid):
    return RiccatiBundle.solve(params, grid)


@pytest.fixture(scope="session")
def maps(bundle):
    return build_maps(bundle)


@pytest.fixture(scope="session")
def kernels(bundle, maps):
    return build_kernels(bundle, maps)


@pytest.fixture(scope="session")
def mf_c(bundle):
    return equilibrium_mf(bundle, P6_Z0)


@pytest.fixture(scope="session")
def law_c(bundle, mf_c):
    return equilibrium_law(bundle, mf_c)


@pytest.fixture(scope="session")
def z0():
    return np.asarray(P6_Z0, dtype=float)
