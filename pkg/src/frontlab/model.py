"""Model ingredients: sigmoid gain, exponential coupling kernel, grid and
field containers, the fast kernel convolution, and front decay rates.

The convolution is the workhorse of the whole package.  It computes the
two-sided exponential convolution of the piecewise-cubic interpolant of a
sampled field, with constant extension beyond the grid, using a pair of
first-order recursions (one per kernel flank).  Exactness on constants is
built into the segment weights, so applying it to a constant field returns
that constant to rounding; this is what makes the discrete traveling-wave
residual and the operator identities in :mod:`frontlab.spectral` hold at
tolerances far below what generic quadrature would allow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import lfilter
from scipy.special import expit


class ModelError(RuntimeError):
    """Raised for invalid gain structure or a failed decay-rate solve."""


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class GainParams:
    """Sigmoid firing-rate nonlinearity 1 / (1 + exp(-gamma (x - theta)))."""

    gamma: float = 8.0   # steepness
    theta: float = 0.6   # threshold

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")

    def rate(self, x):
        return expit(self.gamma * (np.asarray(x, dtype=float) - self.theta))

    def rate_deriv(self, x):
        f = self.rate(x)
        return self.gamma * f * (1.0 - f)

    def rate_deriv2(self, x):
        f = self.rate(x)
        return self.gamma ** 2 * f * (1.0 - f) * (1.0 - 2.0 * f)


@dataclass(frozen=True)
class KernelParams:
    """Normalized exponential coupling kernel exp(-|x|/sigma) / (2 sigma)."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def kernel(self, x):
        return np.exp(-np.abs(np.asarray(x, dtype=float)) / self.sigma) / (2.0 * self.sigma)

    @property
    def log_slope(self) -> float:
        """Sup of |w'/w|, used in the weight-regularity bound."""
        return 1.0 / self.sigma


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [-half_length, half_length] with n_points nodes.

    Fields sampled on the grid are treated as constant beyond it; that is
    the only extension policy the numerics implement.
    """

    half_length: float
    n_points: int
    spacing: float = 0.0  # derived when omitted
    boundary_policy: str = "constant-extension"

    def __post_init__(self):
        if not self.half_length > 0:
            raise ValueError(f"half_length must be positive, got {self.half_length}")
        if self.n_points < 8:
            raise ValueError(f"n_points must be at least 8, got {self.n_points}")
        if self.boundary_policy != "constant-extension":
            raise ValueError(f"unsupported boundary policy {self.boundary_policy!r}")
        expected = 2.0 * self.half_length / (self.n_points - 1)
        if self.spacing == 0.0:
            object.__setattr__(self, "spacing", expected)
        elif abs(self.spacing - expected) > 1e-9 * expected:
            raise ValueError(
                f"spacing {self.spacing} inconsistent with grid extent "
                f"(expected {expected})")

    def nodes(self) -> np.ndarray:
        return np.linspace(-self.half_length, self.half_length, self.n_points)


@dataclass
class Field:
    """A float64 sample vector bound to its grid."""

    values: np.ndarray
    grid: GridSpec
    _interp: CubicSpline | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError(
                f"field has {self.values.shape} values for a grid of "
                f"{self.grid.n_points} nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes()

    def sample_shifted(self, shift: float, x: np.ndarray | None = None) -> np.ndarray:
        """Values of the field translated by `shift`, i.e. h(x - shift),
        evaluated at the grid nodes (or at `x`), with constant extension."""
        if self._interp is None:
            self._interp = CubicSpline(self.grid.nodes(), self.values)
        pts = self.grid.nodes() if x is None else x
        lim = self.grid.half_length
        return self._interp(np.clip(pts - shift, -lim, lim))


# ---------------------------------------------------------------------------
# exponential convolution


def _conv_weights(spacing: float, sigma: float):
    """Per-segment injection weights for the causal recursion.

    The weights are exponential moments of the cubic Lagrange basis on a
    four-node stencil, computed by an upward recurrence that avoids the
    catastrophic cancellation of the closed forms at small dx/sigma.
    Each weight set sums to (1 - r)/2, which is what makes constants exact.
    """
    d = spacing / sigma
    r = math.exp(-d)
    m0 = -math.expm1(-d)
    m1 = m0 - d * r
    m2 = 2.0 * m1 - d * d * r
    m3 = 3.0 * m2 - d ** 3 * r
    m1 /= d
    m2 /= d * d
    m3 /= d ** 3
    # interior segment between nodes j-1, j: stencil (j+1, j, j-1, j-2)
    interior = np.array([
        -(m3 - 3.0 * m2 + 2.0 * m1) / 6.0,
        (m3 - 2.0 * m2 - m1 + 2.0 * m0) / 2.0,
        -(m3 - m2 - 2.0 * m1) / 2.0,
        (m3 - m1) / 6.0,
    ]) / 2.0
    # first segment: stencil (0, 1, 2, 3) seen from node 1
    first = np.array([
        (m3 + 3.0 * m2 + 2.0 * m1) / 6.0,
        -(m3 + 2.0 * m2 - m1 - 2.0 * m0) / 2.0,
        (m3 + m2 - 2.0 * m1) / 2.0,
        -(m3 - m1) / 6.0,
    ]) / 2.0
    # last segment: stencil (n-1, n-2, n-3, n-4) seen from node n-1
    last = np.array([
        -(m3 - 6.0 * m2 + 11.0 * m1 - 6.0 * m0) / 6.0,
        (m3 - 5.0 * m2 + 6.0 * m1) / 2.0,
        -(m3 - 4.0 * m2 + 3.0 * m1) / 2.0,
        (m3 - 3.0 * m2 + 2.0 * m1) / 6.0,
    ]) / 2.0
    return r, interior, first, last


def _causal_sweep(values: np.ndarray, r: float, interior, first, last) -> np.ndarray:
    """One kernel flank: A_i = r A_{i-1} + (segment i contribution)."""
    v = values
    n = v.shape[-1]
    s = np.empty_like(v)
    s[..., 0] = 0.5 * v[..., 0]  # constant tail beyond the grid
    s[..., 1] = (first[0] * v[..., 0] + first[1] * v[..., 1]
                 + first[2] * v[..., 2] + first[3] * v[..., 3])
    s[..., 2:n - 1] = (interior[0] * v[..., 3:n] + interior[1] * v[..., 2:n - 1]
                       + interior[2] * v[..., 1:n - 2] + interior[3] * v[..., 0:n - 3])
    s[..., n - 1] = (last[0] * v[..., n - 1] + last[1] * v[..., n - 2]
                     + last[2] * v[..., n - 3] + last[3] * v[..., n - 4])
    return lfilter([1.0], [1.0, -r], s, axis=-1)


def conv_exp_values(values: np.ndarray, spacing: float, sigma: float) -> np.ndarray:
    """Exponential-kernel convolution along the last axis of `values`."""
    r, wi, wf, wl = _conv_weights(spacing, sigma)
    causal = _causal_sweep(values, r, wi, wf, wl)
    anti = _causal_sweep(values[..., ::-1], r, wi, wf, wl)[..., ::-1]
    return causal + anti


def conv_exp(h: Field, sigma: float) -> Field:
    """Convolve a field with the normalized exponential kernel."""
    return Field(conv_exp_values(h.values, h.grid.spacing, sigma), h.grid)


_matrix_cache: dict[tuple, np.ndarray] = {}


def conv_matrix(grid: GridSpec, sigma: float) -> np.ndarray:
    """Dense matrix of the convolution, built by transforming the identity.

    Cached (a handful of entries) because operator assembly, the adjoint
    solve, and the gap estimate all want the same matrix.
    """
    key = ("conv", grid.n_points, grid.spacing, sigma)
    if key not in _matrix_cache:
        cols = conv_exp_values(np.eye(grid.n_points), grid.spacing, sigma)
        while len(_matrix_cache) >= 4:
            _matrix_cache.pop(next(iter(_matrix_cache)))
        _matrix_cache[key] = cols.T.copy()
    return _matrix_cache[key]


# ---------------------------------------------------------------------------
# differentiation (fourth order, one-sided at the edges)


def ddx_values(values: np.ndarray, spacing: float) -> np.ndarray:
    """Fourth-order first derivative along the last axis.

    Centered five-point stencil in the interior, one-sided five-point rows
    at the two nodes on each edge.  Every row annihilates constants.
    """
    v = values
    out = np.empty_like(v)
    out[..., 2:-2] = (v[..., :-4] - 8.0 * v[..., 1:-3]
                      + 8.0 * v[..., 3:-1] - v[..., 4:]) / (12.0 * spacing)
    out[..., 0] = (-25.0 * v[..., 0] + 48.0 * v[..., 1] - 36.0 * v[..., 2]
                   + 16.0 * v[..., 3] - 3.0 * v[..., 4]) / (12.0 * spacing)
    out[..., 1] = (-3.0 * v[..., 0] - 10.0 * v[..., 1] + 18.0 * v[..., 2]
                   - 6.0 * v[..., 3] + v[..., 4]) / (12.0 * spacing)
    out[..., -1] = (25.0 * v[..., -1] - 48.0 * v[..., -2] + 36.0 * v[..., -3]
                    - 16.0 * v[..., -4] + 3.0 * v[..., -5]) / (12.0 * spacing)
    out[..., -2] = (3.0 * v[..., -1] + 10.0 * v[..., -2] - 18.0 * v[..., -3]
                    + 6.0 * v[..., -4] - v[..., -5]) / (12.0 * spacing)
    return out


def ddx(h: Field) -> Field:
    return Field(ddx_values(h.values, h.grid.spacing), h.grid)


def ddx_matrix(grid: GridSpec, spacing: float | None = None) -> np.ndarray:
    n = grid.n_points
    key = ("ddx", n, grid.spacing)
    if key not in _matrix_cache:
        while len(_matrix_cache) >= 4:
            _matrix_cache.pop(next(iter(_matrix_cache)))
        _matrix_cache[key] = ddx_values(np.eye(n), grid.spacing).T.copy()
    return _matrix_cache[key]


def quad_weights(grid: GridSpec) -> np.ndarray:
    """Trapezoid quadrature weights; the single rule used for all inner
    products and norms in the package."""
    w = np.full(grid.n_points, grid.spacing)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


# ---------------------------------------------------------------------------
# fixed-point structure of the gain


def validate_gain(gain: GainParams) -> tuple[float, float, float]:
    """Locate the three fixed points of the gain and check their slopes.

    Returns (a1, a, a2) with a1 < a < a2.  Raises ModelError("bistability
    violated") unless the gain has exactly three fixed points in (0, 1),
    and ModelError("stability conditions violated") unless the outer slopes
    are below one and the middle slope above one.
    """
    xs = np.linspace(0.0, 1.0, 4097)
    g = gain.rate(xs) - xs
    roots = [float(x) for x, gi in zip(xs, g) if gi == 0.0]
    sign = np.sign(g)
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        lo, hi = xs[i], xs[i + 1]
        flo = gain.rate(lo) - lo
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            fm = gain.rate(mid) - mid
            if fm == 0.0:
                lo = hi = mid
                break
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
            if hi - lo < 1e-14:
                break
        roots.append(0.5 * (lo + hi))
    roots = sorted(roots)
    if len(roots) != 3:
        raise ModelError("bistability violated")
    a1, a, a2 = roots
    s1, s, s2 = (float(gain.rate_deriv(r)) for r in roots)
    if not (s1 < 1.0 and s2 < 1.0 and s > 1.0):
        raise ModelError("stability conditions violated")
    return a1, a, a2


# ---------------------------------------------------------------------------
# decay-rate cubic


@dataclass(frozen=True)
class DecayRates:
    """Linearized tail rates of a front: delta_i = 1 - gain slope at the
    rest state, tilde_delta_i = the corresponding grid-free spatial rate
    (per unit sigma) from the decay cubic."""

    delta1: float
    delta2: float
    tilde_delta1: float
    tilde_delta2: float


def _cubic_bisect(f, lo: float, hi: float, df) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise ModelError("cubic solve failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    root = 0.5 * (lo + hi)
    for _ in range(3):  # Newton polish inside the bracket
        step = f(root) / df(root)
        cand = root - step
        if lo <= cand <= hi:
            root = cand
    return root


def decay_rate(c: float, sigma: float, delta: float) -> float:
    """Advancing-edge root of c x^3 + sigma x^2 - c x - delta sigma = 0
    on the bracket [sqrt(delta), 1]."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if sigma <= 0 or c < 0:
        raise ValueError("need sigma > 0 and c >= 0")
    if c == 0.0:
        return math.sqrt(delta)  # the bracket endpoint is the root

    def f(x):
        return c * x ** 3 + sigma * x ** 2 - c * x - delta * sigma

    def df(x):
        return 3.0 * c * x ** 2 + 2.0 * sigma * x - c

    root = _cubic_bisect(f, math.sqrt(delta), 1.0, df)
    if abs(f(root)) > 1e-10:
        raise ModelError("cubic solve failed")
    return root


def trailing_decay_rate(c: float, sigma: float, delta: float) -> float:
    """Trailing-edge rate: the same cubic with the speed sign reversed,
    rooted on (0, sqrt(delta)].  Equals sqrt(delta) when c = 0."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if sigma <= 0 or c < 0:
        raise ValueError("need sigma > 0 and c >= 0")
    if c == 0.0:
        return math.sqrt(delta)

    def f(x):
        return -c * x ** 3 + sigma * x ** 2 + c * x - delta * sigma

    def df(x):
        return -3.0 * c * x ** 2 + 2.0 * sigma * x + c

    root = _cubic_bisect(f, 1e-30, math.sqrt(delta), df)
    if abs(f(root)) > 1e-10:
        raise ModelError("cubic solve failed")
    return root


def front_decay_rates(gain: GainParams, kernel: KernelParams,
                      fixed_points: tuple[float, float, float],
                      speed: float) -> DecayRates:
    a1, _, a2 = fixed_points
    delta1 = 1.0 - float(gain.rate_deriv(a1))
    delta2 = 1.0 - float(gain.rate_deriv(a2))
    c = abs(speed)
    return DecayRates(
        delta1=delta1,
        delta2=delta2,
        tilde_delta1=trailing_decay_rate(c, kernel.sigma, delta1),
        tilde_delta2=decay_rate(c, kernel.sigma, delta2),
    )
