"""Time stepping for the forced field equation, written in the frame of a
reference front.

The evolved state is the deviation v(t) = u(t) - u_hat(. - c t) from the
unperturbed traveling front, which keeps the interesting dynamics O(eps)
instead of O(1).  One step applies the exact exponential factor of the
linear decay, an explicit evaluation of the kernel coupling difference,
and the Wiener increment:

    v  <-  exp(-dt) v + (1 - exp(-dt)) w * (F(u_hat_t + v) - F(u_hat_t))
           + eps dW.

The same exponential-Euler rule without the front decomposition
(`deterministic_step`) drives the level-set speed measurement used to
cross-check the Newton solver's wave speed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .model import Field, GainParams, GridSpec, KernelParams, conv_exp_values, \
    ddx_values, quad_weights

if TYPE_CHECKING:
    from .noise import NoiseModel, RngStream
    from .spectral import SpectralData
    from .wave import WaveSolution

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """Raised when a trajectory leaves the representable range."""


@dataclass(frozen=True)
class SimConfig:
    epsilon: float            # noise strength
    horizon: float            # final time T
    dt: float                 # step size
    q_exponent: float = 0.05  # exit threshold is eps^(1 - q)
    initial_eta: str = "mode-mix"   # zero | lead-mode | mode-mix
    record_stride: int = 10   # snapshots every this many steps

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.horizon <= 0 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        if not 0.0 <= self.q_exponent < 1.0:
            raise ValueError(f"q_exponent must lie in [0, 1), got {self.q_exponent}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ValueError("horizon must be an integer number of steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class SimPath:
    """One realized trajectory of the deviation field.

    w_increments keeps every Wiener increment (n_steps x N); the phase and
    expansion routines integrate against the same increments the field saw.
    At the default scale that is ~80 MB per path, which is why ensemble
    experiments stream instead of stacking SimPath objects.
    """

    times: np.ndarray         # recorded times, (R,)
    v_snapshots: np.ndarray   # (R, N)
    w_increments: np.ndarray  # (n_steps, N)
    norms: np.ndarray         # (R, 3): plain L2, rho-weighted L2, H1(1+rho)
    tau: float                # first time the H1(1+rho) norm hit eps^(1-q),
                              # horizon if never triggered
    grid: GridSpec
    config: SimConfig


def deterministic_step(u: np.ndarray, dt: float, gain: GainParams,
                       kernel: KernelParams, grid: GridSpec) -> np.ndarray:
    """Exponential-Euler step of the unforced equation on raw values."""
    decay = math.exp(-dt)
    coupling = conv_exp_values(gain.rate(u), grid.spacing, kernel.sigma)
    return decay * u + (1.0 - decay) * coupling


def step_snfe(v: Field, t: float, dt: float, dW: Field, ws: "WaveSolution",
              eps: float) -> Field:
    """One step of the deviation field; dW is a realized Wiener increment
    (pass a zero field for the deterministic flow)."""
    front = ws.profile.sample_shifted(ws.speed * t)
    gain = ws.gain
    coupling = conv_exp_values(gain.rate(front + v.values) - gain.rate(front),
                               v.grid.spacing, ws.kernel.sigma)
    decay = math.exp(-dt)
    out = decay * v.values + (1.0 - decay) * coupling + eps * dW.values
    if not np.all(np.isfinite(out)):
        raise SimulationError("blow-up")
    return Field(out, v.grid)


def weighted_norms(h: Field, t: float, spectral: "SpectralData") -> tuple[float, float, float]:
    """(plain L2, rho_t-weighted L2, H1 with weight 1 + rho_t) at time t;
    the weight rides along with the front."""
    w = quad_weights(h.grid)
    rho_t = spectral.rho.sample_shifted(spectral.wave.speed * t)
    hv = h.values
    hx = ddx_values(hv, h.grid.spacing)
    l2 = math.sqrt(float(w @ hv ** 2))
    l2_rho = math.sqrt(float(w @ (rho_t * hv ** 2)))
    h1 = math.sqrt(float(w @ ((1.0 + rho_t) * (hv ** 2 + hx ** 2))))
    return l2, l2_rho, h1


def make_initial_eta(name: str, noise: "NoiseModel", spectral: "SpectralData") -> Field:
    """Deterministic unit-size initial perturbations, normalized in the
    H1(1 + rho) norm at t = 0."""
    grid = noise.grid
    if name == "zero":
        return Field(np.zeros(grid.n_points), grid)
    if name == "lead-mode":
        values = noise.modes[0].copy()
    elif name == "mode-mix":
        k = min(6, len(noise.lambdas))
        weights = 2.0 ** (-0.5 * np.arange(k))
        values = weights @ noise.modes[:k]
    else:
        raise ValueError(f"unknown initial perturbation {name!r}")
    h = Field(values, grid)
    scale = weighted_norms(h, 0.0, spectral)[2]
    return Field(values / scale, grid)


def run_path(config: SimConfig, ws: "WaveSolution", spectral: "SpectralData",
             noise: "NoiseModel", rng: "RngStream") -> SimPath:
    """Integrate one trajectory, retaining increments and snapshots.

    The exit trigger is evaluated every step; snapshots and norm triples
    are stored every record_stride steps (t = 0 included).
    """
    from .noise import sample_increment

    grid = ws.grid
    n_steps = config.n_steps
    stride = config.record_stride
    eta = make_initial_eta(config.initial_eta, noise, spectral)
    v = Field(config.epsilon * eta.values, grid)

    threshold = config.epsilon ** (1.0 - config.q_exponent) if config.epsilon > 0 else np.inf
    rec_times = [0.0]
    snapshots = [v.values.copy()]
    norm_rows = [weighted_norms(v, 0.0, spectral)]
    increments = np.empty((n_steps, grid.n_points))
    tau = None
    if norm_rows[0][2] >= threshold:
        tau = 0.0

    t = 0.0
    for k in range(n_steps):
        dW = sample_increment(noise, config.dt, rng)
        increments[k] = dW.values
        v = step_snfe(v, t, config.dt, dW, ws, config.epsilon)
        t = (k + 1) * config.dt
        triple = weighted_norms(v, t, spectral)
        if tau is None and triple[2] >= threshold:
            tau = t
        if (k + 1) % stride == 0:
            rec_times.append(t)
            snapshots.append(v.values.copy())
            norm_rows.append(triple)

    return SimPath(
        times=np.array(rec_times),
        v_snapshots=np.array(snapshots),
        w_increments=increments,
        norms=np.array(norm_rows),
        tau=config.horizon if tau is None else tau,
        grid=grid,
        config=config,
    )
