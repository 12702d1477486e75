"""Pathwise phase tracking and the two-term small-noise expansion.

Given a stored trajectory of the deviation field, this module extracts

  * the phase tracked at a finite relaxation speed m (an ODE driven by the
    realized field, integrated with RK4),
  * the immediate-relaxation limit of the phase: the diffusion C0 and its
    second-order correction C1,
  * the fluctuation fields v0 (kept orthogonal to the front slope in the
    moving weighted pairing) and v1 (forced by the quadratic response),
  * the finite-m linear relaxation ladder, integrated with an exact
    conditionally-Gaussian one-step update so that the stiff top of the
    ladder (m*dt ~ 1) needs no step-size reduction.

Everything is a pure function of the stored path; randomness beyond the
stored increments enters only through the explicitly seeded refinement
stream of the relaxation ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .model import Field, ddx_values, conv_exp_values, quad_weights
from .noise import NoiseModel
from .sim import SimPath, SimulationError
from .spectral import SpectralData, coupling_diag
from .wave import WaveSolution

__all__ = [
    "PhaseError",
    "PhaseTrace",
    "ExpansionCoefficients",
    "FrameSampler",
    "project_orth",
    "track_phase_m",
    "compute_C0",
    "evolve_v0",
    "compute_C1",
    "evolve_v1",
    "expand_path",
    "relax_c0_ladder",
    "evolve_v0_m",
]

# block size for vectorized spline evaluation along the time axis
_BLOCK = 256


class PhaseError(RuntimeError):
    """Raised when a phase-tracking routine is asked to run outside its
    stability region."""


@dataclass(frozen=True)
class PhaseTrace:
    """Phase tracked at one relaxation speed.

    For track_phase_m the speed adaptation c_m carries the full noise
    amplitude (it is read off the stored deviation field). For the linear
    relaxation ladder the trace is the order-zero object: multiply by the
    noise amplitude to compare against a tracked phase.
    """

    times: np.ndarray         # (n_steps + 1,)
    c_m: np.ndarray           # speed adaptation at each step time
    C_m: np.ndarray           # accumulated phase, C_m(0) = 0 resp. ladder C
    relaxation_m: float


@dataclass(frozen=True)
class ExpansionCoefficients:
    """Two-term expansion data along one path, on the recorded time grid."""

    times: np.ndarray
    C0: np.ndarray            # limit phase at the recorded times
    C1: np.ndarray            # second-order phase correction
    v0_snapshots: list[Field]
    v1_snapshots: list[Field]


class FrameSampler:
    """Samples the frozen front-frame fields at x - c t.

    One cubic spline per field, shared by every consumer of the moving
    frame, so that all pairings see identical samples. `sample_many`
    evaluates a whole block of times in one spline call.
    """

    def __init__(self, ws: WaveSolution, spectral: SpectralData | None = None):
        grid = ws.grid
        self.speed = ws.speed
        self._x = grid.nodes()
        self._fields: dict[str, Field] = {
            "front": ws.profile,
            "slope": ws.d1,
            "curv": ws.d2,
            "couple": coupling_diag(ws),
        }
        if spectral is not None:
            self._fields["psi"] = spectral.psi
            self._fields["phi"] = spectral.phi
            self._fields["psi_x"] = Field(
                ddx_values(spectral.psi.values, grid.spacing), grid)

    def sample(self, name: str, t: float) -> np.ndarray:
        return self._fields[name].sample_shifted(self.speed * t)

    def sample_many(self, name: str, times: np.ndarray) -> np.ndarray:
        """Field values at x - c t for every t in `times`; shape (T, N)."""
        pts = self._x[None, :] - self.speed * np.asarray(times)[:, None]
        return self._fields[name].sample_shifted(0.0, x=pts)


def _project(values: np.ndarray, psi_t: np.ndarray, slope_t: np.ndarray,
             w: np.ndarray) -> np.ndarray:
    """Remove the slope component from `values` (node axis last).

    The shifted samples pair to 1 only up to interpolation error, so the
    realized pairing is divided out; the projector is then exactly
    idempotent on the grid.
    """
    wpsi = w * psi_t
    coef = (values @ wpsi) / (wpsi @ slope_t)
    return values - np.asarray(coef)[..., None] * slope_t


def project_orth(h: Field, t: float, ws: WaveSolution,
                 spectral: SpectralData) -> Field:
    """h minus its front-slope component in the moving weighted pairing."""
    sampler = FrameSampler(ws, spectral)
    w = quad_weights(h.grid)
    out = _project(h.values, sampler.sample("psi", t),
                   sampler.sample("slope", t), w)
    return Field(out, h.grid)


def _check_step_arrays(path: SimPath, name: str, arr: np.ndarray) -> None:
    if arr.shape[0] != path.config.n_steps + 1:
        raise ValueError(
            f"{name} must have one entry per step time "
            f"({path.config.n_steps + 1}), got {arr.shape[0]}")


def _recorded_indices(path: SimPath) -> np.ndarray:
    """Step indices of the recorded snapshot times."""
    idx = np.rint(path.times / path.config.dt).astype(int)
    return idx


# ---------------------------------------------------------------------------
# tracked phase at finite relaxation speed


def track_phase_m(path: SimPath, m: float, ws: WaveSolution,
                  spectral: SpectralData) -> PhaseTrace:
    """Integrate the tracked-phase ODE at relaxation speed m.

    The phase C solves dC/dt = -m <u(t) - front(. - ct - C),
    psi(. - ct - C)> with u(t) rebuilt from the recorded snapshots (cubic
    interpolation in time between records). Classical RK4 at the path's own
    step size; the explicit scheme needs m*dt <= 0.5.
    """
    if m <= 0:
        raise ValueError(f"relaxation speed must be positive, got {m}")
    dt = path.config.dt
    if m * dt > 0.5:
        raise PhaseError("phase ODE unstable")

    grid = path.grid
    w = quad_weights(grid)
    c = ws.speed
    profile = ws.profile
    psi = spectral.psi
    v_of_t = CubicSpline(path.times, path.v_snapshots, axis=0)
    t_end = float(path.times[-1])

    def rate(t: float, C: float, v_t: np.ndarray) -> float:
        shift = c * t + C
        mism = v_t + profile.sample_shifted(c * t) - profile.sample_shifted(shift)
        return -m * float((w * psi.sample_shifted(shift)) @ mism)

    n = int(round(t_end / dt))
    times = np.arange(n + 1) * dt
    c_vals = np.empty(n + 1)
    C_vals = np.empty(n + 1)
    C = 0.0
    v_t = v_of_t(0.0)
    for j in range(n):
        t = times[j]
        v_half = v_of_t(t + 0.5 * dt)
        v_next = v_of_t(t + dt)
        k1 = rate(t, C, v_t)
        k2 = rate(t + 0.5 * dt, C + 0.5 * dt * k1, v_half)
        k3 = rate(t + 0.5 * dt, C + 0.5 * dt * k2, v_half)
        k4 = rate(t + dt, C + dt * k3, v_next)
        c_vals[j] = k1
        C_vals[j] = C
        C += dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        v_t = v_next
    C_vals[n] = C
    c_vals[n] = rate(t_end, C, v_t)
    return PhaseTrace(times=times, c_m=c_vals, C_m=C_vals, relaxation_m=float(m))


# ---------------------------------------------------------------------------
# immediate-relaxation limits


def _beta_increments(path: SimPath, spectral: SpectralData) -> np.ndarray:
    """Left-point pairings <psi(.-c t_j), dW_j> for every step."""
    sampler = FrameSampler(spectral.wave, spectral)
    w = quad_weights(path.grid)
    dt = path.config.dt
    n = path.config.n_steps
    out = np.empty(n)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        psi_rows = sampler.sample_many("psi", np.arange(start, stop) * dt)
        out[start:stop] = ((psi_rows * w) * path.w_increments[start:stop]).sum(axis=1)
    return out


def compute_C0(path: SimPath, spectral: SpectralData, eta: Field) -> np.ndarray:
    """Limit phase by left-point Ito sums of the stored increments.

    Entry n is the phase at t = n dt; the initial jump to -<eta, psi> is
    built into entry 0.
    """
    w = quad_weights(path.grid)
    out = np.empty(path.config.n_steps + 1)
    out[0] = -float((w * spectral.psi.values) @ eta.values)
    out[1:] = out[0] - np.cumsum(_beta_increments(path, spectral))
    return out


def evolve_v0(path: SimPath, spectral: SpectralData, ws: WaveSolution,
              eta: Field, drift_log: list[float] | None = None) -> list[Field]:
    """Step the orthogonal fluctuation field along the stored increments.

    dv0 = L_t v0 dt + (projected noise), v0(0) = projected eta, with the
    same exponential-Euler splitting as the nonlinear stepper. The coupling
    samples the operator-consistent linearization diagonal, not pointwise
    F'(front): the two differ at quadrature level and only the former keeps
    the adjoint pairing exactly conserved per step. The state is
    re-projected after every step; if `drift_log` is given, the slope
    coefficient removed by each re-projection is appended to it (this is
    the orthogonality drift the discrete evolution would accumulate).
    """
    grid = path.grid
    w = quad_weights(grid)
    dt = path.config.dt
    n = path.config.n_steps
    stride = path.config.record_stride
    sampler = FrameSampler(ws, spectral)
    decay = math.exp(-dt)
    sigma = ws.kernel.sigma

    psi_next = sampler.sample("psi", 0.0)
    slope_next = sampler.sample("slope", 0.0)
    v = _project(eta.values.copy(), psi_next, slope_next, w)
    out = [Field(v.copy(), grid)]

    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        t_rows = np.arange(start + 1, stop + 1) * dt
        couple_rows = sampler.sample_many("couple", np.arange(start, stop) * dt)
        psi_rows = sampler.sample_many("psi", t_rows)
        slope_rows = sampler.sample_many("slope", t_rows)
        for j in range(start, stop):
            psi_t, slope_t = psi_next, slope_next
            psi_next = psi_rows[j - start]
            slope_next = slope_rows[j - start]
            coupling = conv_exp_values(
                couple_rows[j - start] * v, grid.spacing, sigma)
            kick = _project(path.w_increments[j], psi_t, slope_t, w)
            v = decay * v + (1.0 - decay) * coupling + kick
            if drift_log is not None:
                wpsi = w * psi_next
                drift_log.append(float(v @ wpsi) / float(wpsi @ slope_next))
            v = _project(v, psi_next, slope_next, w)
            if not np.all(np.isfinite(v)):
                raise SimulationError("blow-up")
            if (j + 1) % stride == 0:
                out.append(Field(v.copy(), grid))
    return out


def compute_C1(path: SimPath, C0: np.ndarray, v0: list[Field],
               spectral: SpectralData, ws: WaveSolution) -> np.ndarray:
    """Second-order phase correction on the recorded time grid.

    Trapezoidal quadrature of the quadratic-response pairing plus the two
    boundary terms. The integrand pairs the convolved response with the
    adjoint vector through the same kernel quadrature evolve_v1 applies,
    so the pair of discrete accumulations cancels exactly.
    """
    _check_step_arrays(path, "C0", C0)
    grid = path.grid
    w = quad_weights(grid)
    gain = ws.gain
    sampler = FrameSampler(ws, spectral)
    rec = _recorded_indices(path)
    C0_k = C0[rec]
    times = path.times
    n_rec = len(times)

    # <slope, psi_x> in the front frame, frozen in t
    psi_x0 = ddx_values(spectral.psi.values, grid.spacing)
    ip_slope_psix = float((w * ws.d1.values) @ psi_x0)

    integrand = np.empty(n_rec)
    boundary = np.empty(n_rec)
    sigma = ws.kernel.sigma
    for k, t in enumerate(times):
        front = sampler.sample("front", t)
        slope = sampler.sample("slope", t)
        psi_t = sampler.sample("psi", t)
        psix_t = sampler.sample("psi_x", t)
        v = v0[k].values
        g = gain.rate_deriv2(front) * (0.5 * v * v - C0_k[k] * slope * v)
        integrand[k] = float((w * psi_t) @ conv_exp_values(
            g, grid.spacing, sigma))
        boundary[k] = C0_k[k] * float((w * psix_t) @ v) \
            - 0.5 * C0_k[k] ** 2 * ip_slope_psix
    steps = np.diff(times)
    cum = np.concatenate(
        ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * steps)))
    return -cum + boundary


def _ito_squared_increments(path: SimPath, C0: np.ndarray,
                            spectral: SpectralData,
                            noise: NoiseModel | None) -> np.ndarray:
    """Increments of C0^2 between recorded times, by the Ito rule when the
    covariance model is available (2 C0 dC0 + <psi_t, Q psi_t> dt at full
    step resolution), else by telescoped pathwise squares."""
    rec = _recorded_indices(path)
    if noise is None:
        sq = C0[rec] ** 2
        return np.diff(sq)
    dt = path.config.dt
    # the compensator <psi_t, Q psi_t> is smooth in t: knot values + spline
    sampler = FrameSampler(spectral.wave, spectral)
    lam2 = noise.lambdas ** 2
    q_knots = np.empty(len(path.times))
    for k, t in enumerate(path.times):
        p = noise.pair(sampler.sample("psi", t))
        q_knots[k] = float(lam2 @ (p * p))
    q_of_t = CubicSpline(path.times, q_knots)
    n = path.config.n_steps
    t_steps = np.arange(n) * dt
    ito = 2.0 * C0[:-1] * np.diff(C0) + q_of_t(t_steps) * dt
    cum = np.concatenate(([0.0], np.cumsum(ito)))
    return np.diff(cum[rec])


def evolve_v1(path: SimPath, C0: np.ndarray, C1: np.ndarray, v0: list[Field],
              spectral: SpectralData, ws: WaveSolution,
              noise: NoiseModel | None = None) -> list[Field]:
    """Step the second-order fluctuation field on the recorded time grid.

    dv1 = L_t v1 dt + w*(F''(front)(v0^2/2 - C0 slope v0)) dt
          + slope dC1 - curv dC0^2 / 2.

    The quadratic forcing is applied by the trapezoid rule, the same
    quadrature compute_C1 uses, so the two discrete accumulations cancel
    exactly in the adjoint pairing instead of leaving an O(dt) wobble.
    The initial state is the post-jump value C1(0) slope - C0(0)^2 curv / 2:
    the instantaneous relaxation of the initial perturbation jumps the phase
    to -<eta, psi> at t = 0+, and the second-order field inherits the
    corresponding Taylor terms (with eta = 0 this is the zero field). The
    phase terms enter through exact increments of the supplied C1 and of the
    Ito-rule accumulation of C0^2 (pass the noise model to get the
    quadratic-variation compensator; without it the telescoped pathwise
    squares are used).
    """
    _check_step_arrays(path, "C0", C0)
    if len(C1) != len(path.times):
        raise ValueError("C1 must be aligned with the recorded times")
    grid = path.grid
    gain = ws.gain
    sampler = FrameSampler(ws, spectral)
    sigma = ws.kernel.sigma
    rec = _recorded_indices(path)
    C0_k = C0[rec]
    dC1 = np.diff(np.asarray(C1, dtype=float))
    dC0sq = _ito_squared_increments(path, C0, spectral, noise)
    times = path.times

    def quad_forcing(k: int) -> np.ndarray:
        front = sampler.sample("front", times[k])
        slope = sampler.sample("slope", times[k])
        v = v0[k].values
        g = gain.rate_deriv2(front) * (0.5 * v * v - C0_k[k] * slope * v)
        return conv_exp_values(g, grid.spacing, sigma)

    v1 = C1[0] * ws.d1.values - 0.5 * C0_k[0] ** 2 * ws.d2.values
    out = [Field(v1.copy(), grid)]
    forcing = quad_forcing(0)
    for k in range(len(times) - 1):
        t = times[k]
        step = times[k + 1] - t
        slope = sampler.sample("slope", t)
        curv = sampler.sample("curv", t)
        couple = sampler.sample("couple", t)
        forcing_next = quad_forcing(k + 1)
        decay = math.exp(-step)
        v1 = decay * v1 + (1.0 - decay) * conv_exp_values(
            couple * v1, grid.spacing, sigma)
        v1 = v1 + 0.5 * step * (forcing + forcing_next) \
            + dC1[k] * slope - 0.5 * dC0sq[k] * curv
        forcing = forcing_next
        if not np.all(np.isfinite(v1)):
            raise SimulationError("blow-up")
        out.append(Field(v1.copy(), grid))
    return out


def expand_path(path: SimPath, eta: Field, spectral: SpectralData,
                ws: WaveSolution,
                noise: NoiseModel | None = None) -> ExpansionCoefficients:
    """Full two-term expansion of one stored path."""
    C0_full = compute_C0(path, spectral, eta)
    v0 = evolve_v0(path, spectral, ws, eta)
    C1 = compute_C1(path, C0_full, v0, spectral, ws)
    v1 = evolve_v1(path, C0_full, C1, v0, spectral, ws, noise=noise)
    rec = _recorded_indices(path)
    return ExpansionCoefficients(
        times=path.times.copy(),
        C0=C0_full[rec],
        C1=np.asarray(C1, dtype=float),
        v0_snapshots=v0,
        v1_snapshots=v1,
    )


# ---------------------------------------------------------------------------
# finite-m linear relaxation ladder


def relax_c0_ladder(path: SimPath, m_values: list[float], eta: Field,
                    spectral: SpectralData, noise: NoiseModel,
                    seed: int = 0) -> list[PhaseTrace]:
    """Order-zero phase relaxation at each speed in `m_values`, common noise.

    Each member solves dc = -m c dt - m d(beta) with beta the projected
    noise path, via the exact conditionally-Gaussian one-step update: given
    the realized increment of beta over a step, the stochastic convolution
    integral is conditionally Gaussian, and one shared auxiliary normal per
    step supplies the missing sub-step information for every ladder member.
    Stable for any m*dt; the m -> infinity limit reproduces the Ito sums of
    compute_C0 exactly.
    """
    for m in m_values:
        if m <= 0:
            raise ValueError(f"relaxation speed must be positive, got {m}")
    dt = path.config.dt
    n = path.config.n_steps
    w = quad_weights(path.grid)
    beta = _beta_increments(path, spectral)

    # per-step variance rate of beta under the covariance model
    sampler = FrameSampler(spectral.wave, spectral)
    lam2 = noise.lambdas ** 2
    q = np.empty(n)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        rows = sampler.sample_many("psi", np.arange(start, stop) * dt)
        p = noise.pair(rows)
        q[start:stop] = p ** 2 @ lam2

    zeta = np.random.default_rng(seed).standard_normal(n)
    pair0 = -float((w * spectral.psi.values) @ eta.values)
    times = np.arange(n + 1) * dt

    traces = []
    for m in m_values:
        decay = math.exp(-m * dt)
        gain_beta = (1.0 - decay) / (m * dt)
        var_j = q * max((1.0 - decay ** 2) / (2.0 * m)
                        - (1.0 - decay) ** 2 / (m * m * dt), 0.0)
        s_j = np.sqrt(var_j)
        c = np.empty(n + 1)
        C = np.empty(n + 1)
        c[0] = m * pair0
        C[0] = 0.0
        for j in range(n):
            J = gain_beta * beta[j] + s_j[j] * zeta[j]
            C[j + 1] = C[j] + c[j] * (1.0 - decay) / m + (J - beta[j])
            c[j + 1] = decay * c[j] - m * J
        traces.append(PhaseTrace(times=times, c_m=c, C_m=C,
                                 relaxation_m=float(m)))
    return traces


def relax_second_order(path: SimPath, m: float, trace: PhaseTrace,
                       eta: Field, spectral: SpectralData,
                       ws: WaveSolution) -> tuple[PhaseTrace, list[Field]]:
    """Second-order pair (C1^m, v1^m) at finite relaxation speed m.

    The stiff phase equation

    dc1 = (-m c1 - m <w*(F''(front) v^2), psi>/2 + m c0 <v, psi_x>) dt
          + m C0 <psi_x, dW>,  c1(0) = 0,

    is integrated through its closed pathwise form: expanding the product
    c0 <v, psi_x> by the Ito rule turns the accumulated phase into three
    history integrals against exp(-m(t-s)),

    C1(t) = int (1 - e^{-m(t-s)}) G ds + int m e^{-m(t-s)} C0 <v, psi_x> ds
            - int m e^{-m(t-s)} C0^2 ds <slope, psi_x> / 2,

    with G = -<w*(F''(half v^2 - C0 slope v)), psi>, each steppable as a
    non-stiff auxiliary relaxation. Stepping the SDE directly instead
    freezes the fast variable c0 inside the forcing over each step, which
    biases the result by O(m dt); the representation has no fast variable
    left. The field then solves

    dv1 = (L_t v1 + w*(F''(front)(v^2/2 - C0 slope v))
          - c0 C0 curv + c1 slope) dt,  v1(0) = 0,

    with the two phase-coupled terms accumulated pathwise-exactly as
    -d(C0^2)/2 and dC1 (C0^m is differentiable), and v = v0^m re-stepped
    internally at full resolution (the recorded snapshots are too sparse
    for the quadratic forcing). Both returned series live on the recorded
    grid; the trace's c_m rows hold c1^m at every step time.
    """
    if trace.relaxation_m != m:
        raise ValueError("trace was built for a different relaxation speed")
    grid = path.grid
    w = quad_weights(grid)
    dt = path.config.dt
    n = path.config.n_steps
    stride = path.config.record_stride
    gain = ws.gain
    sigma = ws.kernel.sigma
    sampler = FrameSampler(ws, spectral)
    decay_l = math.exp(-dt)
    decay = math.exp(-m * dt)
    dC0 = np.diff(trace.C_m)
    C0_sq = trace.C_m ** 2
    ip_slope_psix = float((w * ws.d1.values) @ ddx_values(
        spectral.psi.values, grid.spacing))

    def forcing_at(j: int, front: np.ndarray, slope: np.ndarray,
                   v_now: np.ndarray) -> np.ndarray:
        quad = gain.rate_deriv2(front) * (
            0.5 * v_now * v_now - trace.C_m[j] * slope * v_now)
        return conv_exp_values(quad, grid.spacing, sigma)

    v = eta.values.copy()
    v1 = np.zeros(grid.n_points)
    c1 = np.empty(n + 1)
    C1 = np.empty(n + 1)
    c1[0] = 0.0
    C1[0] = 0.0
    # history-integral state: quad_sum = int G ds (trapezoid, mirroring the
    # m -> infinity route), relax_g = int e^{-m(t-s)} G ds, relax_h and
    # relax_sq the m e^{-m(t-s)}-weighted averages of C0 <v, psi_x> and C0^2
    quad_sum = 0.0
    relax_g = 0.0
    relax_h = 0.0
    relax_sq = 0.0
    out = [Field(v1.copy(), grid)]
    forcing = forcing_at(0, sampler.sample("front", 0.0),
                         sampler.sample("slope", 0.0), v)
    g_now = -float((w * spectral.psi.values) @ forcing)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        t_rows = np.arange(start, stop + 1) * dt
        front_rows = sampler.sample_many("front", t_rows)
        couple_rows = sampler.sample_many("couple", t_rows)
        slope_rows = sampler.sample_many("slope", t_rows)
        curv_rows = sampler.sample_many("curv", t_rows)
        psi_rows = sampler.sample_many("psi", t_rows)
        psix_rows = sampler.sample_many("psi_x", t_rows)
        for j in range(start, stop):
            r = j - start
            v = decay_l * v + (1.0 - decay_l) * conv_exp_values(
                couple_rows[r] * v, grid.spacing, sigma) \
                + dC0[j] * slope_rows[r] + path.w_increments[j]
            forcing_next = forcing_at(j + 1, front_rows[r + 1],
                                      slope_rows[r + 1], v)
            g_next = -float((w * psi_rows[r + 1]) @ forcing_next)
            h_next = trace.C_m[j + 1] * float((w * psix_rows[r + 1]) @ v)
            quad_sum += 0.5 * dt * (g_now + g_next)
            relax_g = decay * relax_g + (1.0 - decay) / m * g_now
            relax_h = decay * relax_h + (1.0 - decay) * h_next
            relax_sq = decay * relax_sq + (1.0 - decay) * C0_sq[j + 1]
            C1[j + 1] = quad_sum - relax_g + relax_h \
                - 0.5 * relax_sq * ip_slope_psix
            c1[j + 1] = m * relax_g + m * (h_next - relax_h) \
                - 0.5 * m * (C0_sq[j + 1] - relax_sq) * ip_slope_psix
            v1 = decay_l * v1 + (1.0 - decay_l) * conv_exp_values(
                couple_rows[r] * v1, grid.spacing, sigma)
            v1 = v1 + 0.5 * dt * (forcing + forcing_next) \
                - 0.5 * (C0_sq[j + 1] - C0_sq[j]) * curv_rows[r] \
                + (C1[j + 1] - C1[j]) * slope_rows[r]
            forcing = forcing_next
            g_now = g_next
            if not np.all(np.isfinite(v1)):
                raise SimulationError("blow-up")
            if (j + 1) % stride == 0:
                out.append(Field(v1.copy(), grid))
    trace1 = PhaseTrace(times=trace.times.copy(), c_m=c1, C_m=C1,
                        relaxation_m=float(m))
    return trace1, out


def evolve_v0_m(path: SimPath, m: float, trace: PhaseTrace, eta: Field,
                spectral: SpectralData, ws: WaveSolution) -> list[Field]:
    """Order-zero fluctuation field at finite relaxation speed m.

    dv = L_t v dt + slope(. - ct) dC^m + dW, v(0) = eta. The phase forcing
    uses the exact per-step increments of the trace's accumulated phase, so
    the stiff ladder top needs no sub-stepping. Unprojected by construction.
    """
    if trace.relaxation_m != m:
        raise ValueError("trace was built for a different relaxation speed")
    grid = path.grid
    dt = path.config.dt
    n = path.config.n_steps
    stride = path.config.record_stride
    sigma = ws.kernel.sigma
    sampler = FrameSampler(ws, spectral)
    decay = math.exp(-dt)
    dC = np.diff(trace.C_m)

    v = eta.values.copy()
    out = [Field(v.copy(), grid)]
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        couple_rows = sampler.sample_many("couple", np.arange(start, stop) * dt)
        slope_rows = sampler.sample_many("slope", np.arange(start, stop) * dt)
        for j in range(start, stop):
            coupling = conv_exp_values(
                couple_rows[j - start] * v, grid.spacing, sigma)
            v = decay * v + (1.0 - decay) * coupling \
                + dC[j] * slope_rows[j - start] + path.w_increments[j]
            if not np.all(np.isfinite(v)):
                raise SimulationError("blow-up")
            if (j + 1) % stride == 0:
                out.append(Field(v.copy(), grid))
    return out
