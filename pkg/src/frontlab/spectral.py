"""Adjoint eigenfunction, weighted density, spectral-gap estimate, and the
regularity constants of the weighted phase geometry.

Two discretization choices here carry most of the weight:

* The linearization multiplier is the ratio diagonal dF(u)/du taken as
  D(F(u))/D(u) of grid data (exact F'(u) where the slope is too small to
  divide by).  With it, the discrete frozen-front operator annihilates the
  discrete front slope to the same accuracy as the commutator of the
  derivative and convolution matrices, orders below what the exact-F'
  diagonal would give.

* The gap estimate restricts the weighted quadratic form to a band-limited
  subspace (sine modes of wavelength >= 8 dx on a boundary-trimmed window).
  Under a weight that grows exponentially, the symmetrized centered
  difference misrepresents the transport term near the node-scale Nyquist
  frequency (its symbol flips sign beyond ~0.57 pi), so the unrestricted
  form is flooded by sawtooth packets with spurious near-zero values; the
  resolved-mode estimate is stable to ~1e-5 under grid halving.

Both tails of the adjoint eigenfunction and of the front slope are grafted
onto their analytic exponential rates below a floor that clears the
measured domain-truncation response; the density rho = psi/u_x inherits
clean exponential tails from the graft.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import (Field, conv_exp, conv_matrix, ddx_matrix, ddx_values,
                    decay_rate, front_decay_rates, quad_weights,
                    trailing_decay_rate)
from .wave import WaveSolution

log = logging.getLogger(__name__)

# Graft floors, relative to each field's maximum.  The front slope carries
# a boundary-truncation response of ~2e-8 of its peak (see WaveSolution),
# the raw adjoint null vector one of ~3e-9; each floor clears its response
# by a factor of a few and sits far above rounding.
SLOPE_GRAFT_FLOOR = 1e-7
PSI_GRAFT_FLOOR = 1e-8

# Ratio-diagonal guard: below this fraction of the peak slope the ratio
# D(F(u))/D(u) would divide truncation response by truncation response.
RATIO_GUARD = 1e-6


class SpectralError(RuntimeError):
    """Raised for a defective null space, positivity failure, or a grid
    that violates the weighted-density regularity bounds."""


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense discretization of the frozen-front operator or its adjoint."""

    entries: np.ndarray
    kind: str  # "L_sharp" or "L_sharp_adjoint"


@dataclass
class SpectralData:
    """Adjoint eigenfunction psi (normalized against the front slope),
    phi = w * psi, density rho = psi/u_x, gap estimate, and the density
    regularity constants (shift bound l_rho, convolution bound k_rho,
    log-derivative bound m_bound)."""

    psi: Field
    phi: Field
    rho: Field
    gap: float
    l_rho: float
    k_rho: float
    m_bound: float
    wave: WaveSolution


def _ratio_diag(ws: WaveSolution) -> np.ndarray:
    """Discrete linearization multiplier: D(F(u))/D(u) where the slope is
    trustworthy, exact F'(u) elsewhere."""
    gain = ws.gain
    u = ws.profile.values
    d1 = ws.d1.values
    df = ddx_values(gain.rate(u), ws.grid.spacing)
    ok = np.abs(d1) > RATIO_GUARD * np.max(np.abs(d1))
    return np.where(ok, np.divide(df, d1, out=np.ones_like(d1), where=ok),
                    gain.rate_deriv(u))


def coupling_diag(ws: WaveSolution) -> Field:
    """The linearization multiplier of `assemble_operator`, as a field.

    Propagators that must conserve the adjoint pairing discretely (the
    slope direction is a null direction of the assembled matrices, not of
    the pointwise-F' operator) sample this on the moving frame instead of
    evaluating F'(u) directly.
    """
    return Field(_ratio_diag(ws), ws.grid)


def assemble_operator(ws: WaveSolution, kind: str) -> OperatorMatrix:
    """Dense matrix of the frozen-front operator (kind "L_sharp",
    -v + c v' + w*(F'(u)v)) or its adjoint (kind "L_sharp_adjoint",
    -v - c v' + F'(u) w*v), with the same derivative stencil, kernel
    quadrature, and constant-extension boundary handling as the solver."""
    grid = ws.grid
    n = grid.n_points
    ft = _ratio_diag(ws)
    conv = conv_matrix(grid, ws.kernel.sigma)
    deriv = ddx_matrix(grid)
    if kind == "L_sharp":
        entries = -np.eye(n) + ws.speed * deriv + conv * ft[None, :]
    elif kind == "L_sharp_adjoint":
        entries = -np.eye(n) - ws.speed * deriv + ft[:, None] * conv
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    return OperatorMatrix(entries=entries, kind=kind)


def _graft_tails(values: np.ndarray, x: np.ndarray, rate_left: float,
                 rate_right: float, floor: float) -> np.ndarray:
    """Replace both sub-floor tails by exponentials with the analytic
    rates, anchored at the outermost trusted nodes."""
    vmax = float(values.max())
    ok = values > floor * vmax
    if not ok.any():
        raise SpectralError("positivity violated")
    i0 = int(np.argmax(ok))
    i1 = len(values) - 1 - int(np.argmax(ok[::-1]))
    out = values.copy()
    out[:i0] = values[i0] * np.exp(-rate_left * (x[i0] - x[:i0]))
    out[i1 + 1:] = values[i1] * np.exp(-rate_right * (x[i1 + 1:] - x[i1]))
    return out


def _tail_rates(ws: WaveSolution) -> tuple[tuple[float, float], tuple[float, float]]:
    """Analytic (left, right) tail rates for the front slope and for the
    adjoint eigenfunction.  The slope decays at the trailing rate behind
    the front and the advancing rate ahead of it; the adjoint eigenfunction
    swaps the two branches.  A receding front mirrors both pairs."""
    dr = front_decay_rates(ws.gain, ws.kernel, ws.fixed_points, ws.speed)
    c = abs(ws.speed)
    sigma = ws.kernel.sigma
    adv1 = decay_rate(c, sigma, dr.delta1) / sigma
    adv2 = dr.tilde_delta2 / sigma
    tr1 = dr.tilde_delta1 / sigma
    tr2 = trailing_decay_rate(c, sigma, dr.delta2) / sigma
    if ws.speed >= 0:
        return (tr1, adv2), (adv1, tr2)
    return (adv1, tr2), (tr1, adv2)


def _grafted_slope(ws: WaveSolution) -> np.ndarray:
    (rl, rr), _ = _tail_rates(ws)
    return _graft_tails(ws.d1.values, ws.profile.x, rl, rr, SLOPE_GRAFT_FLOOR)


def solve_adjoint(ws: WaveSolution) -> tuple[Field, Field]:
    """Null vector of the discrete adjoint, as the right singular vector of
    its smallest singular value, grafted and normalized.

    Raises "null space not simple" when the second singular value is within
    a factor 10 of the smallest, and "positivity violated" when the raw
    null vector has sign changes above the graft floor.  The returned psi
    is strictly positive with <u_x, psi> = 1; the companion field is its
    kernel convolution.
    """
    adj = assemble_operator(ws, "L_sharp_adjoint")
    _, svals, vt = np.linalg.svd(adj.entries)
    if svals[-2] < 10.0 * svals[-1]:
        raise SpectralError("null space not simple")
    psi = vt[-1]
    if psi[np.argmax(np.abs(psi))] < 0:
        psi = -psi
    if np.any(psi < -PSI_GRAFT_FLOOR * psi.max()):
        raise SpectralError("positivity violated")
    x = ws.profile.x
    _, (rl, rr) = _tail_rates(ws)
    grafted = _graft_tails(psi, x, rl, rr, PSI_GRAFT_FLOOR)
    w = quad_weights(ws.grid)
    grafted /= np.sum(w * ws.d1.values * grafted)
    psi_field = Field(grafted, ws.grid)
    return psi_field, conv_exp(psi_field, ws.kernel.sigma)


def estimate_gap(op: OperatorMatrix, ws: WaveSolution, psi: Field,
                 rho: Field | None = None, edge_margin: int = 8,
                 wavelength_cut: int = 4) -> float:
    """Spectral-gap estimate: minus the largest eigenvalue of the
    rho-weighted symmetrized form, restricted to the complement of the
    front-slope direction.

    The form is evaluated on sine modes of wavelength >= 2*wavelength_cut
    grid spacings, supported on the grid minus edge_margin nodes per side;
    see the module docstring for why the unrestricted form cannot be used.
    The estimate is insensitive to both parameters (measured ~1e-6
    relative against doubling either one).
    """
    if op.kind != "L_sharp":
        raise ValueError("gap estimate needs the forward operator")
    if rho is None:
        rho_vals = psi.values / _grafted_slope(ws)
    else:
        rho_vals = rho.values
    n = ws.grid.n_points
    w = quad_weights(ws.grid)
    b = np.sqrt(w * rho_vals)
    sym = b[:, None] * op.entries / b[None, :]
    sym = 0.5 * (sym + sym.T)
    ne = edge_margin
    sym = sym[ne:n - ne, ne:n - ne]
    m = n - 2 * ne
    k = m // wavelength_cut
    j = np.arange(1, m + 1)[:, None]
    basis = np.sin(np.pi * j * np.arange(1, k + 1)[None, :] / (m + 1))
    q, _ = np.linalg.qr(b[ne:n - ne, None] * basis)
    form = q.T @ sym @ q
    # rotate the slope direction onto the first coordinate and drop it
    g = q.T @ (b * ws.d1.values)[ne:n - ne]
    g /= np.linalg.norm(g)
    v = g.copy()
    v[0] -= 1.0
    v /= np.linalg.norm(v)
    form -= 2.0 * np.outer(v, v @ form)
    form -= 2.0 * np.outer(form @ v, v)
    gap = -float(np.linalg.eigvalsh(form[1:, 1:])[-1])
    if gap <= 0:
        log.warning("spectral gap not observed (estimate %.3e)", gap)
    return gap


def assumption_constants(rho: Field, ws: WaveSolution) -> tuple[float, float, float]:
    """Regularity constants of the weighted density.

    l_rho bounds rho(x-y)/rho(x) over grid-representable leftward shifts,
    k_rho bounds (w*rho)/rho nodewise, m_bound is the analytic bound
    |F''(u)u_x/F'(u)|_sup + 2/sigma on |rho_x/rho|.  The log-derivative
    bound is verified nodewise; any failure or non-finite ratio raises
    "assumption violated on grid".
    """
    vals = rho.values
    if not np.all(np.isfinite(vals)) or vals.min() <= 0.0:
        raise SpectralError("assumption violated on grid")
    l_rho = float(np.max(np.maximum.accumulate(vals) / vals))
    conv = conv_exp(rho, ws.kernel.sigma)
    k_rho = float(np.max(conv.values / vals))
    gain = ws.gain
    u = ws.profile.values
    m_bound = float(np.max(np.abs(gain.gamma * (1.0 - 2.0 * gain.rate(u))
                                  * ws.d1.values))) + 2.0 / ws.kernel.sigma
    if not (np.isfinite(l_rho) and np.isfinite(k_rho)):
        raise SpectralError("assumption violated on grid")
    drho = ddx_values(vals, ws.grid.spacing)
    if np.any(np.abs(drho) > m_bound * vals):
        raise SpectralError("assumption violated on grid")
    return l_rho, k_rho, m_bound


@dataclass(frozen=True)
class SignReport:
    """Sign-structure summary of the front geometry: crossover locations
    of the slope derivative, of the convolved adjoint's derivative, and of
    the gain inflection along the front, plus the monotonicity verdicts."""

    u_xx_crossover: float
    phi_x_crossover: float
    gain_inflection: float
    left_threshold: float
    right_threshold: float
    u_xx_single_change: bool
    phi_x_single_change: bool
    psi_monotone_flanks: bool


def _single_change(values: np.ndarray, floor: float) -> tuple[bool, int]:
    """Whether the meaningful entries form one +block then one -block;
    returns the first index of the negative block."""
    sig = np.sign(values[np.abs(values) > floor * np.max(np.abs(values))])
    flips = np.count_nonzero(np.diff(sig) != 0)
    idx = np.flatnonzero(values < -floor * np.max(np.abs(values)))
    cross = int(idx[0]) if idx.size else len(values) - 1
    return bool(flips == 1 and sig.size and sig[0] > 0), cross


def check_sign_structure(ws: WaveSolution, psi: Field, phi: Field,
                         tol: float = 1e-7) -> SignReport:
    """Report-only check of the one-bump geometry: the slope's derivative
    and the convolved adjoint's derivative each change sign once (+ to -),
    and the adjoint eigenfunction is nondecreasing left of the earliest
    crossover and nonincreasing right of the latest."""
    x = ws.profile.x
    d2 = ws.d2.values
    ok_uxx, i_uxx = _single_change(d2, tol)
    phi_x = ddx_values(phi.values, ws.grid.spacing)
    ok_phi, i_phi = _single_change(phi_x, tol)
    # gain inflection: where the profile crosses the sigmoid threshold
    cross = np.flatnonzero(np.diff(np.sign(ws.profile.values - ws.gain.theta)))
    i_gain = int(cross[0]) + 1 if cross.size else ws.grid.n_points // 2
    lo = min(x[i_uxx], x[i_phi], x[i_gain])
    hi = max(x[i_uxx], x[i_phi], x[i_gain])
    psi_x = ddx_values(psi.values, ws.grid.spacing)
    bound = tol * np.max(np.abs(psi_x))
    flanks = bool(np.all(psi_x[x < lo] >= -bound)
                  and np.all(psi_x[x > hi] <= bound))
    return SignReport(
        u_xx_crossover=float(x[i_uxx]),
        phi_x_crossover=float(x[i_phi]),
        gain_inflection=float(x[i_gain]),
        left_threshold=float(lo),
        right_threshold=float(hi),
        u_xx_single_change=ok_uxx,
        phi_x_single_change=ok_phi,
        psi_monotone_flanks=flanks,
    )


def tail_rate_fit(f: Field, window: tuple[float, float]) -> float:
    """Least-squares slope of log f over the nodes inside the window."""
    lo, hi = window
    x = f.grid.nodes()
    if lo < x[0] or hi > x[-1] or lo >= hi:
        raise ValueError("window outside grid")
    mask = (x >= lo) & (x <= hi)
    if np.count_nonzero(mask) < 2:
        raise ValueError("window outside grid")
    vals = f.values[mask]
    if np.any(vals <= 0):
        raise ValueError("field not positive on window")
    return float(np.polyfit(x[mask], np.log(vals), 1)[0])


def build_spectral(ws: WaveSolution) -> SpectralData:
    """Full spectral pipeline: adjoint solve, density, gap estimate, and
    regularity constants, packaged for the simulation and phase layers."""
    psi, phi = solve_adjoint(ws)
    rho = Field(psi.values / _grafted_slope(ws), ws.grid)
    fwd = assemble_operator(ws, "L_sharp")
    gap = estimate_gap(fwd, ws, psi, rho=rho)
    l_rho, k_rho, m_bound = assumption_constants(rho, ws)
    return SpectralData(psi=psi, phi=phi, rho=rho, gap=gap, l_rho=l_rho,
                        k_rho=k_rho, m_bound=m_bound, wave=ws)
