"""Finite-rank spatially smooth stochastic forcing.

The noise is a rank-K Q-Wiener process: independent scalar Brownian
motions driving fixed spatial modes.  Modes are Gaussian-enveloped
harmonics orthonormalized in the grid's quadrature inner product, so the
covariance is diagonal with weights lambda_k^2 by construction and every
pairing the theory needs reduces to small dense dot products.

Streams are counter-based (Philox) and keyed by (seed, path index):
path i of a run is bit-identical no matter how paths are batched or
re-executed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Field, GridSpec, ddx_values, quad_weights


class NoiseError(RuntimeError):
    """Raised when the requested mode set cannot be orthonormalized."""


@dataclass(frozen=True)
class NoiseSpec:
    """Shape of the forcing covariance.

    rank            number of modes K
    corr_length     shortest resolved wavelength scale; top angular
                    frequency is pi / corr_length
    envelope_width  std of the Gaussian envelope confining the modes
    amplitude       lambda_0; subsequent weights fall off as 2^(-k/4)
    """

    rank: int = 16
    corr_length: float = 2.0
    envelope_width: float = 10.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be at least 1, got {self.rank}")
        if min(self.corr_length, self.envelope_width, self.amplitude) <= 0:
            raise ValueError("corr_length, envelope_width, amplitude must be positive")


@dataclass
class RngStream:
    """Counter-based generator keyed by (seed, path_index)."""

    seed: int
    path_index: int = 0

    def __post_init__(self):
        key = np.array([self.seed, self.path_index], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def normals(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    @property
    def counter_state(self):
        return self.generator.bit_generator.state["state"]


@dataclass
class NoiseModel:
    lambdas: np.ndarray       # (K,) mode weights
    modes: np.ndarray         # (K, N), orthonormal under quadrature
    grid: GridSpec
    trace_q: float            # sum lambda_k^2 ||e_k||^2, plain L2
    trace_q_rho: float        # same in the rho-weighted norm
    trace_q_h1rho: float      # same in H1 with weight (1 + rho)
    pair_cache: dict = field(default_factory=dict, repr=False)

    def mode_list(self) -> list[tuple[float, Field]]:
        return [(float(l), Field(m.copy(), self.grid))
                for l, m in zip(self.lambdas, self.modes)]

    def pair(self, g_values: np.ndarray) -> np.ndarray:
        """Quadrature pairings <g, e_k> for all modes at once; g_values may
        be batched with the node axis last."""
        w = quad_weights(self.grid)
        return (g_values * w) @ self.modes.T


def make_noise(spec: NoiseSpec, grid: GridSpec, rho: Field) -> NoiseModel:
    """Build the forcing model on a grid, with norms taken against the
    weight rho of the front the noise will perturb."""
    x = grid.nodes()
    envelope = np.exp(-x ** 2 / (2.0 * spec.envelope_width ** 2))
    n_pairs = spec.rank // 2
    raw = [envelope]
    for j in range(1, n_pairs + 1):
        omega = j * np.pi / (spec.corr_length * max(n_pairs, 1))
        raw.append(envelope * np.cos(omega * x))
        raw.append(envelope * np.sin(omega * x))
    raw = np.array(raw[:spec.rank])

    w = quad_weights(grid)
    basis = (raw * np.sqrt(w)).T  # (N, K)
    q, r = np.linalg.qr(basis)
    diag = np.abs(np.diag(r))
    if diag.min() < 1e-10 * diag.max():
        raise NoiseError("mode set degenerate")
    q = q * np.sign(np.diag(r))  # fixed sign convention for determinism
    modes = (q / np.sqrt(w)[:, None]).T

    lambdas = spec.amplitude * 2.0 ** (-np.arange(spec.rank) / 4.0)
    dmodes = ddx_values(modes, grid.spacing)
    rho_v = rho.values
    mass = (w * modes ** 2).sum(axis=1)
    mass_rho = (w * rho_v * modes ** 2).sum(axis=1)
    mass_h1 = (w * (1.0 + rho_v) * (modes ** 2 + dmodes ** 2)).sum(axis=1)
    lam2 = lambdas ** 2
    return NoiseModel(
        lambdas=lambdas,
        modes=modes,
        grid=grid,
        trace_q=float(lam2 @ mass),
        trace_q_rho=float(lam2 @ mass_rho),
        trace_q_h1rho=float(lam2 @ mass_h1),
    )


def sample_increment(noise: NoiseModel, dt: float, rng: RngStream) -> Field:
    """One Wiener increment dW over a step of length dt."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    xi = rng.normals(noise.lambdas.shape)
    return Field(np.sqrt(dt) * (noise.lambdas * xi) @ noise.modes, noise.grid)


def pair_quadratic(noise: NoiseModel, g: Field) -> float:
    """The covariance quadratic form <g, Q g> = sum lambda_k^2 <g, e_k>^2."""
    p = noise.pair(g.values)
    return float((noise.lambdas ** 2) @ (p ** 2))
