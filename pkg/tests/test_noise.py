"""Finite-rank forcing: mode construction, covariance pairings, sampling."""
import numpy as np
import pytest

from frontlab.model import Field, quad_weights
from frontlab.noise import (NoiseError, NoiseModel, NoiseSpec, RngStream,
                            make_noise, pair_quadratic, sample_increment)


def test_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(rank=0)
    with pytest.raises(ValueError):
        NoiseSpec(amplitude=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(corr_length=0.0)


def test_rank_one_quadratic_form(grid512, spec06):
    noise = make_noise(NoiseSpec(rank=1, amplitude=0.7), grid512, spec06.rho)
    g = Field(noise.modes[0].copy(), grid512)
    assert abs(pair_quadratic(noise, g) - 0.7 ** 2) <= 1e-12


def test_orthogonal_field_sees_nothing(grid512, spec06, noise06):
    rng = np.random.default_rng(2)
    w = quad_weights(grid512)
    g = rng.standard_normal(grid512.n_points)
    for lam, mode in zip(noise06.lambdas, noise06.modes):
        g = g - ((w * mode) @ g) * mode
    scale = noise06.lambdas[0] ** 2 * float((w * g) @ g)
    assert pair_quadratic(noise06, Field(g, grid512)) <= 1e-16 * scale


def test_default_spec_gram_and_traces(grid512, spec06):
    noise = make_noise(NoiseSpec(), grid512, spec06.rho)
    w = quad_weights(grid512)
    gram = (noise.modes * w) @ noise.modes.T
    assert np.max(np.abs(gram - np.eye(noise.lambdas.size))) <= 1e-8
    for tr in (noise.trace_q, noise.trace_q_rho, noise.trace_q_h1rho):
        assert np.isfinite(tr) and tr > 0.0


def test_degenerate_mode_set_raises(grid512, spec06):
    with pytest.raises(NoiseError):
        make_noise(NoiseSpec(corr_length=1e12), grid512, spec06.rho)


def test_increment_scales_as_sqrt_dt(grid512, noise06):
    rng = RngStream(seed=17)
    w = quad_weights(grid512)
    dts = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    mean_norms = []
    for dt in dts:
        norms = [np.sqrt(float((w * inc.values) @ inc.values))
                 for inc in (sample_increment(noise06, dt, rng)
                             for _ in range(1000))]
        mean_norms.append(np.mean(norms))
    slope = np.polyfit(np.log(dts), np.log(mean_norms), 1)[0]
    assert abs(slope - 0.5) <= 0.02


def test_increment_rejects_bad_dt(noise06):
    with pytest.raises(ValueError):
        sample_increment(noise06, 0.0, RngStream(seed=1))


def test_bit_identical_replay(noise06):
    a = RngStream(seed=5, path_index=2)
    b = RngStream(seed=5, path_index=2)
    for _ in range(5):
        inc_a = sample_increment(noise06, 1e-3, a)
        inc_b = sample_increment(noise06, 1e-3, b)
        assert np.array_equal(inc_a.values, inc_b.values)
    c = RngStream(seed=5, path_index=3)
    assert not np.array_equal(sample_increment(noise06, 1e-3, c).values,
                              sample_increment(noise06, 1e-3, b).values)


def test_shifted_adjoint_variance_matches_quadratic_form(ws06, spec06,
                                                         noise06, grid512):
    # the phase-diffusion integrand: Var(<psi(.-cs), dW>) over one step
    # against dt * <psi_s, Q psi_s>
    s = 0.7
    psi_s = spec06.psi.sample_shifted(ws06.speed * s)
    dt = 1e-3
    expected = dt * pair_quadratic(noise06, Field(psi_s, grid512))
    p = noise06.pair(psi_s)
    rng = RngStream(seed=29)
    draws = rng.normals((10_000, noise06.lambdas.size)) @ (noise06.lambdas * p)
    var = float(np.var(np.sqrt(dt) * draws))
    assert abs(var - expected) <= 0.05 * expected


def test_pair_quadratic_trivials(grid512, noise06):
    zero = Field(np.zeros(grid512.n_points), grid512)
    assert pair_quadratic(noise06, zero) == 0.0
    for j in (0, 5, 15):
        g = Field(noise06.modes[j].copy(), grid512)
        lam2 = noise06.lambdas[j] ** 2
        assert abs(pair_quadratic(noise06, g) - lam2) <= 1e-12 * lam2
    rng = np.random.default_rng(3)
    for _ in range(5):
        g = Field(rng.standard_normal(grid512.n_points), grid512)
        assert pair_quadratic(noise06, g) >= 0.0


def test_pair_quadratic_against_sampled_covariance(grid512, noise06):
    rng = np.random.default_rng(31)
    g = Field(rng.standard_normal(grid512.n_points), grid512)
    expected = pair_quadratic(noise06, g)
    n = 100_000
    stream = RngStream(seed=41)
    draws = stream.normals((n, noise06.lambdas.size)) \
        @ (noise06.lambdas * noise06.pair(g.values))
    var = float(np.var(draws))
    se = expected * np.sqrt(2.0 / n)
    assert abs(var - expected) <= 3.0 * se


def test_step_to_step_independence(grid512, spec06, noise06):
    w = quad_weights(grid512)
    g = spec06.psi.values
    stream = RngStream(seed=53)
    n = 10_000
    z = np.empty(n + 1)
    for i in range(n + 1):
        inc = sample_increment(noise06, 1e-3, stream)
        z[i] = float((w * g) @ inc.values)
    corr = np.corrcoef(z[:-1], z[1:])[0, 1]
    assert abs(corr) <= 3.0 / np.sqrt(n)
