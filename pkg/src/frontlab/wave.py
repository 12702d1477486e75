"""Traveling-front profiles: Newton solver and a level-set speed check.

The front and its speed solve the nonlinear system

    -c u' + u - w * F(u) = 0,      u(0) pinned to the unstable gain level,

discretized with the package's fourth-order derivative and the exact
piecewise-cubic kernel convolution.  The pin removes the translation
family; the bordered Jacobian treats (profile, speed) as one unknown.

`wave_speed_oracle` measures the same speed a completely different way:
it time-steps the equation from a step initial condition and fits the
drift of the mid-level crossing, giving an independent check on the
Newton result.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import (Field, GainParams, GridSpec, KernelParams, conv_matrix,
                    ddx_matrix, ddx_values, validate_gain)

log = logging.getLogger(__name__)


class WaveSolveError(RuntimeError):
    """Raised when Newton iteration fails or produces an invalid front."""


@dataclass
class WaveSolution:
    """A discrete front: profile, first three derivatives, speed, and the
    gain fixed points (a1, a, a2) it connects.

    d1 is the raw finite-difference derivative; below roughly 1e-7 of its
    maximum the values are dominated by the domain-truncation response of
    the quadrature (and, further out, by stencil rounding), so only their
    smallness is meaningful there, not their sign.
    """

    profile: Field
    d1: Field
    d2: Field
    d3: Field
    speed: float
    fixed_points: tuple[float, float, float]
    gain: GainParams
    kernel: KernelParams

    @property
    def grid(self) -> GridSpec:
        return self.profile.grid


def _pin_row(n: int) -> np.ndarray:
    """Evaluate-at-origin row; the origin falls between nodes for even n."""
    row = np.zeros(n)
    if n % 2:
        row[(n - 1) // 2] = 1.0
    else:
        row[n // 2 - 1] = 0.5
        row[n // 2] = 0.5
    return row


def solve_wave(gain: GainParams, kernel: KernelParams, grid: GridSpec,
               tol: float = 1e-12, max_iter: int = 40) -> WaveSolution:
    """Newton iteration for the pinned front system.

    Raises WaveSolveError("wave solve diverged") when the residual stops
    improving or iterations run out, and ("nonmonotone profile") when the
    converged profile's slope changes sign anywhere above the rounding
    floor.
    """
    a1, a, a2 = validate_gain(gain)
    x = grid.nodes()
    n = grid.n_points
    diff = ddx_matrix(grid)
    conv = conv_matrix(grid, kernel.sigma)
    pin = _pin_row(n)
    eye = np.eye(n)

    u = a1 + (a2 - a1) * expit(x / kernel.sigma)
    c = 0.0
    system = np.zeros((n + 1, n + 1))
    rhs = np.zeros(n + 1)
    best = np.inf
    stall = 0
    for iteration in range(max_iter):
        du = diff @ u
        residual = -c * du + u - conv @ gain.rate(u)
        pin_err = float(pin @ u - a)
        res = max(float(np.max(np.abs(residual))), abs(pin_err))
        if not np.isfinite(res):
            raise WaveSolveError("wave solve diverged")
        log.debug("newton %d: residual %.3e speed %.6f", iteration, res, c)
        if res <= tol:
            break
        if res < best:
            best, stall = res, 0
        else:
            stall += 1
            if stall >= 3:
                raise WaveSolveError("wave solve diverged")
        system[:n, :n] = -c * diff + eye - conv * gain.rate_deriv(u)[None, :]
        system[:n, n] = -du
        system[n, :n] = pin
        system[n, n] = 0.0
        rhs[:n] = -residual
        rhs[n] = -pin_err
        step = np.linalg.solve(system, rhs)
        u = u + step[:n]
        c = c + float(step[n])
    else:
        raise WaveSolveError("wave solve diverged")

    d1 = ddx_values(u, grid.spacing)
    peak = float(d1.max())
    if peak <= 0.0:
        raise WaveSolveError("nonmonotone profile")
    meaningful = np.abs(d1) > 1e-7 * peak
    if np.any(d1[meaningful] < 0.0):
        raise WaveSolveError("nonmonotone profile")
    if c < 0:
        log.warning("front recedes (speed %.6f); downstream spectral "
                    "routines assume an advancing front", c)

    d2 = ddx_values(d1, grid.spacing)
    d3 = ddx_values(d2, grid.spacing)
    return WaveSolution(
        profile=Field(u, grid),
        d1=Field(d1, grid),
        d2=Field(d2, grid),
        d3=Field(d3, grid),
        speed=c,
        fixed_points=(a1, a, a2),
        gain=gain,
        kernel=kernel,
    )


def wave_speed_oracle(gain: GainParams, kernel: KernelParams, grid: GridSpec,
                      horizon: float = 10.0, dt: float = 1e-3) -> float:
    """Front speed measured from direct time integration.

    Starts from a step between the stable gain levels, tracks the position
    where the solution crosses the unstable level by linear interpolation,
    and least-squares fits the positions over the second half of the
    horizon.  Raises WaveSolveError("domain too small") when the crossing
    approaches the boundary.
    """
    from .sim import deterministic_step

    a1, a, a2 = validate_gain(gain)
    x = grid.nodes()
    u = np.where(x < 0.0, a1, a2)
    n_steps = int(round(horizon / dt))
    margin = 5.0 * kernel.sigma

    times = np.empty(n_steps)
    positions = np.empty(n_steps)
    for k in range(n_steps):
        u = deterministic_step(u, dt, gain, kernel, grid)
        sign = np.sign(u - a)
        crossings = np.flatnonzero(sign[:-1] * sign[1:] <= 0)
        if len(crossings) == 0:
            raise WaveSolveError("domain too small")
        i = int(crossings[0])
        frac = (a - u[i]) / (u[i + 1] - u[i])
        pos = x[i] + frac * grid.spacing
        if not (-grid.half_length + margin < pos < grid.half_length - margin):
            raise WaveSolveError("domain too small")
        times[k] = (k + 1) * dt
        positions[k] = pos

    half = n_steps // 2
    slope = np.polyfit(times[half:], positions[half:], 1)[0]
    return float(slope)
