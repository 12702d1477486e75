"""Frozen-front operator assembly, adjoint eigenfunction, weighted density,
and the gap estimate.

Pairing and projection identities are exercised with random fields; fields
feeding the pairing identity vanish identically outside |x| <= 0.8 L, where
the derivative stencil is exactly antisymmetric and the convolution matrix
exactly symmetric under the quadrature weights.  The c=0 closed form is
resolution-limited (the assembled diagonal deviates from F'(u) at O(dx^4)),
so its pointwise check asserts this grid's floor plus the refinement ratio.
"""
import numpy as np
import pytest

from frontlab.model import (Field, GridSpec, decay_rate, ddx_values,
                            front_decay_rates, quad_weights,
                            trailing_decay_rate)
from frontlab.spectral import (assemble_operator, assumption_constants,
                               build_spectral, check_sign_structure,
                               estimate_gap, tail_rate_fit)
from frontlab.wave import solve_wave

# Frozen regression values at theta=0.6 / 0.5, L=30, N=512 (and the N=640,
# L=37.5 window extension).  Derivations: tests/oracles.py for the decay
# deltas; the gap and density constants are pinned from the first accepted
# run and guarded by the refinement-stability assertions below.
GAP_06 = 0.593973158039263
GAP_05 = 0.634875848779647
K_RHO_06 = 7.68157045869414
M_BOUND_06 = 3.30069554480257
SPEED_06 = 0.576191579141153


@pytest.fixture(scope="module")
def spec06_fine(gain06, kernel):
    ws = solve_wave(gain06, kernel, GridSpec(30.0, 1024))
    return build_spectral(ws)


@pytest.fixture(scope="module")
def spec06_long(gain06, kernel):
    ws = solve_wave(gain06, kernel, GridSpec(37.5, 640))
    return build_spectral(ws)


def rho_ip(w, rho, f, g):
    return float((w * rho * f) @ g)


def test_forward_annihilates_slope(ws06, ws05):
    for ws in (ws06, ws05):
        op = assemble_operator(ws, "L_sharp")
        defect = op.entries @ ws.d1.values
        assert np.max(np.abs(defect)) <= 1e-8 * np.max(np.abs(ws.d1.values))
        assert np.all(op.entries @ np.zeros(ws.grid.n_points) == 0.0)


def test_operator_kind_validation(ws06):
    with pytest.raises(ValueError):
        assemble_operator(ws06, "L_flat")


def test_adjoint_pairing_windowed(ws06, grid512):
    op = assemble_operator(ws06, "L_sharp")
    adj = assemble_operator(ws06, "L_sharp_adjoint")
    w = quad_weights(grid512)
    x = grid512.nodes()
    window = (np.abs(x) <= 0.8 * grid512.half_length).astype(float)
    rng = np.random.default_rng(11)
    for _ in range(10):
        g = window * rng.standard_normal(grid512.n_points)
        h = window * rng.standard_normal(grid512.n_points)
        lhs = float((w * (op.entries @ g)) @ h)
        rhs = float((w * g) @ (adj.entries @ h))
        scale = np.sqrt(float((w * g) @ g) * float((w * h) @ h))
        assert abs(lhs - rhs) <= 1e-8 * scale


def test_adjoint_null_residual(ws06, spec06, ws05, spec05):
    for ws, sp in ((ws06, spec06), (ws05, spec05)):
        adj = assemble_operator(ws, "L_sharp_adjoint")
        res = np.linalg.norm(adj.entries @ sp.psi.values)
        assert res <= 1e-8 * np.linalg.norm(sp.psi.values)


def test_null_space_simplicity(ws06):
    adj = assemble_operator(ws06, "L_sharp_adjoint")
    svals = np.linalg.svd(adj.entries, compute_uv=False)
    assert svals[-2] >= 10.0 * svals[-1]


def test_normalization_and_positivity(ws06, spec06, ws05, spec05):
    for ws, sp in ((ws06, spec06), (ws05, spec05)):
        w = quad_weights(ws.grid)
        assert abs(float((w * ws.d1.values) @ sp.psi.values) - 1.0) <= 1e-10
        assert np.all(sp.psi.values > 0.0)
        assert np.all(sp.phi.values > 0.0)
        assert np.all(np.isfinite(sp.rho.values)) and np.all(sp.rho.values > 0)


def test_c0_closed_form(gain05, kernel, ws05, spec05, grid512):
    # continuum identity: at c=0 the adjoint null vector is F'(u) u_x;
    # discretely the match floors at the O(dx^4) diagonal deviation
    def mismatch(ws, sp):
        w = quad_weights(ws.grid)
        ref = ws.gain.rate_deriv(ws.profile.values) * ws.d1.values
        ref = ref / float((w * ws.d1.values) @ ref)
        return np.max(np.abs(sp.psi.values - ref)) / np.max(np.abs(ref))

    coarse = mismatch(ws05, spec05)
    assert coarse <= 5e-4  # measured 3.0e-4 at N=512
    ws_f = solve_wave(gain05, kernel, GridSpec(30.0, 1024))
    fine = mismatch(ws_f, build_spectral(ws_f))
    assert coarse / fine >= 8.0  # fourth-order: measured ratio 14.7


def test_gap_regression_and_refinement(spec06, spec05, spec06_fine):
    assert spec06.gap > 0.0
    assert abs(spec06.gap - GAP_06) <= 1e-8 * GAP_06
    assert abs(spec05.gap - GAP_05) <= 1e-8 * GAP_05
    assert abs(spec06_fine.gap - spec06.gap) <= 0.02 * spec06.gap


def test_gap_rejects_adjoint_kind(ws06, spec06):
    adj = assemble_operator(ws06, "L_sharp_adjoint")
    with pytest.raises(ValueError):
        estimate_gap(adj, ws06, spec06.psi, rho=spec06.rho)


def test_slope_direction_is_neutral(ws06, spec06, grid512):
    op = assemble_operator(ws06, "L_sharp")
    w = quad_weights(grid512)
    d1 = ws06.d1.values
    ray = rho_ip(w, spec06.rho.values, op.entries @ d1, d1)
    ray /= rho_ip(w, spec06.rho.values, d1, d1)
    assert abs(ray) <= 1e-8


def test_gap_bounds_projected_form(ws06, spec06, grid512):
    """Dissipativity on the resolved band: random combinations of the
    estimate's trial modes, slope component removed, evaluated directly."""
    op = assemble_operator(ws06, "L_sharp")
    w = quad_weights(grid512)
    rho = spec06.rho.values
    margin, cut = 8, 4
    interior = grid512.n_points - 2 * margin
    j = np.arange(1, interior + 1)[:, None]
    k = np.arange(1, interior // cut + 1)[None, :]
    modes = np.sin(np.pi * j * k / (interior + 1))
    rng = np.random.default_rng(23)
    for _ in range(20):
        h = np.zeros(grid512.n_points)
        h[margin:-margin] = modes @ rng.standard_normal(modes.shape[1])
        h = h - float((w * spec06.psi.values) @ h) * ws06.d1.values
        h /= np.sqrt(rho_ip(w, rho, h, h))
        form = rho_ip(w, rho, op.entries @ h, h)
        assert form <= -spec06.gap + 1e-8


def test_projection_property(ws06, spec06, grid512):
    op = assemble_operator(ws06, "L_sharp")
    w = quad_weights(grid512)
    rho = spec06.rho.values
    d1 = ws06.d1.values
    rng = np.random.default_rng(7)
    for _ in range(20):
        h = rng.standard_normal(grid512.n_points)
        lhs = abs(rho_ip(w, rho, op.entries @ h, d1))
        bound = np.sqrt(rho_ip(w, rho, h, h) * rho_ip(w, rho, d1, d1))
        assert lhs <= 1e-6 * bound


def test_assumption_constants_frozen(spec06):
    assert spec06.l_rho == 1.0
    assert abs(spec06.k_rho - K_RHO_06) <= 1e-8 * K_RHO_06
    assert abs(spec06.m_bound - M_BOUND_06) <= 1e-8 * M_BOUND_06


def test_assumption_constants_finite_at_c0(ws05, spec05):
    l_rho, k_rho, m_bound = assumption_constants(spec05.rho, ws05)
    assert np.isfinite(l_rho) and np.isfinite(k_rho) and np.isfinite(m_bound)
    assert l_rho >= 1.0 and k_rho > 0.0


def test_density_log_derivative_bound(ws06, spec06, ws05, spec05):
    for ws, sp in ((ws06, spec06), (ws05, spec05)):
        drho = ddx_values(sp.rho.values, ws.grid.spacing)
        assert np.all(np.abs(drho) <= sp.m_bound * sp.rho.values)


def test_constants_stable_under_refinement(spec06, spec06_fine, spec06_long):
    for other in (spec06_fine, spec06_long):
        assert other.l_rho == spec06.l_rho == 1.0
        assert abs(other.k_rho - spec06.k_rho) <= 0.05 * spec06.k_rho
        assert abs(other.m_bound - spec06.m_bound) <= 0.05 * spec06.m_bound
        assert abs(other.gap - spec06.gap) <= 0.05 * spec06.gap


def test_sign_structure(ws06, spec06, ws05, spec05, grid512):
    rep6 = check_sign_structure(ws06, spec06.psi, spec06.phi)
    rep5 = check_sign_structure(ws05, spec05.psi, spec05.phi)
    for rep in (rep6, rep5):
        assert rep.u_xx_single_change
        assert rep.phi_x_single_change
        assert rep.psi_monotone_flanks
        assert rep.left_threshold <= rep.right_threshold
    # c=0: every crossover sits at the sigmoid inflection along the front
    dx = grid512.spacing
    assert abs(rep5.u_xx_crossover - rep5.gain_inflection) <= dx
    assert abs(rep5.phi_x_crossover - rep5.gain_inflection) <= dx


def test_c0_psi_slope_crossover_matches_oracle(ws05, spec05, grid512):
    # direct differentiation oracle: d/dx of F'(u) u_x changes sign where
    # the adjoint eigenfunction's derivative does
    psi_x = ddx_values(spec05.psi.values, grid512.spacing)
    ref = ws05.gain.rate_deriv(ws05.profile.values) * ws05.d1.values
    ref_x = ddx_values(ref, grid512.spacing)

    def first_negative(vals):
        return int(np.flatnonzero(vals < -1e-7 * np.max(np.abs(vals)))[0])

    assert abs(first_negative(psi_x) - first_negative(ref_x)) <= 1


def test_tail_rate_fit_exact(grid512):
    f = Field(np.exp(-0.7 * grid512.nodes()), grid512)
    assert abs(tail_rate_fit(f, (-20.0, 20.0)) + 0.7) <= 1e-10
    with pytest.raises(ValueError):
        tail_rate_fit(f, (-40.0, 0.0))
    with pytest.raises(ValueError):
        tail_rate_fit(f, (5.0, 5.0))


def test_eigenfunction_tail_rates(ws06, spec06):
    dr = front_decay_rates(ws06.gain, ws06.kernel, ws06.fixed_points,
                           ws06.speed)
    sigma = ws06.kernel.sigma
    left = decay_rate(ws06.speed, sigma, dr.delta1) / sigma
    right = trailing_decay_rate(ws06.speed, sigma, dr.delta2) / sigma
    for f in (spec06.psi, spec06.phi):
        assert abs(tail_rate_fit(f, (-22.5, -15.0)) - left) <= 0.05 * left
        assert abs(tail_rate_fit(f, (15.0, 22.5)) + right) <= 0.05 * right


def test_psi_phi_ratio_bounded(spec06, spec06_fine):
    def spread(sp):
        ratio = sp.psi.values / sp.phi.values
        return float(ratio.max() / ratio.min())

    coarse = spread(spec06)
    assert 1.0 < coarse < 100.0
    assert abs(spread(spec06_fine) - coarse) <= 0.01 * coarse
