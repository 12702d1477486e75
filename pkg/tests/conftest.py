"""Shared fixtures: small-scale artifacts reused across the module tests.

Everything here is deterministic. The moving-front configuration uses
theta=0.6 (speed ~0.58) on a 512-node grid; the symmetric configuration
uses theta=0.5 (speed 0, where several identities are exact and make the
sharpest regression anchors). Desk-scale artifacts live in
test_acceptance.py, not here.
"""

import numpy as np
import pytest

from frontlab.model import GainParams, KernelParams, GridSpec
from frontlab.noise import NoiseSpec, RngStream, make_noise
from frontlab.sim import SimConfig, make_initial_eta, run_path
from frontlab.spectral import build_spectral
from frontlab.wave import solve_wave


@pytest.fixture(scope="session")
def kernel():
    return KernelParams(sigma=1.0)


@pytest.fixture(scope="session")
def grid512():
    return GridSpec(half_length=30.0, n_points=512)


@pytest.fixture(scope="session")
def gain06():
    return GainParams(gamma=8.0, theta=0.6)


@pytest.fixture(scope="session")
def gain05():
    return GainParams(gamma=8.0, theta=0.5)


@pytest.fixture(scope="session")
def ws06(gain06, kernel, grid512):
    return solve_wave(gain06, kernel, grid512)


@pytest.fixture(scope="session")
def ws05(gain05, kernel, grid512):
    return solve_wave(gain05, kernel, grid512)


@pytest.fixture(scope="session")
def spec06(ws06):
    return build_spectral(ws06)


@pytest.fixture(scope="session")
def spec05(ws05):
    return build_spectral(ws05)


@pytest.fixture(scope="session")
def noise06(grid512, spec06):
    spec = NoiseSpec(rank=16, corr_length=2.0, envelope_width=10.0,
                     amplitude=0.025)
    return make_noise(spec, grid512, spec06.rho)


@pytest.fixture(scope="session")
def noise05(grid512, spec05):
    spec = NoiseSpec(rank=16, corr_length=2.0, envelope_width=10.0,
                     amplitude=0.025)
    return make_noise(spec, grid512, spec05.rho)


@pytest.fixture(scope="session")
def eta06(noise06, spec06):
    return make_initial_eta("mode-mix", noise06, spec06)


@pytest.fixture(scope="session")
def path06(ws06, spec06, noise06, eta06):
    """The pinned moving-front path for the expansion tests: T=1, dt=1e-3,
    every-2nd-step snapshots, seed 3 (see the tuning notes for why this
    seed and horizon)."""
    cfg = SimConfig(epsilon=0.01, horizon=1.0, dt=1e-3, record_stride=2)
    return run_path(cfg, ws06, spec06, noise06, RngStream(seed=3, path_index=0))
