"""Closed-form solitary profiles and their norm/multiplier scaling."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .grid_core import grid_with_spacing

NORM_SLOPE = 6.0 - 12.0 * np.log(2.0)
SQRT_MU_SLOPE = (6.0 - np.log(12.0)) / 16.0 + np.log(2.0)

MU_BRACKET = (1e-6, 1e3)
MU_MAX_ITER = 200


@dataclass(frozen=True)
class ExpansionCoefficients:
    norm_slope: float = NORM_SLOPE
    sqrt_mu_slope: float = SQRT_MU_SLOPE


@dataclass(frozen=True)
class SolitonSpec:
    p: float
    mu: float

    def __post_init__(self):
        _check_p(self.p)
        if not self.mu < 0:
            raise InvalidArgumentError(f"mu must be negative, got {self.mu}")


def _check_p(p):
    if not 1.0 < p < 3.0:
        raise InvalidArgumentError(f"exponent p must lie in (1, 3), got {p}")


def w_base(x):
    """Positive solution of u'' - u + u^3 = 0 centred at 0, i.e. sqrt(2) sech x."""
    a = np.abs(np.asarray(x, dtype=float))
    e = np.exp(-a)
    return 2.0 * np.sqrt(2.0) * e / (1.0 + e * e)


def w_star(x):
    """Unit-norm profile solving -u'' + u/16 - u^3 = 0."""
    a = np.abs(np.asarray(x, dtype=float)) / 4.0
    e = np.exp(-a)
    return (np.sqrt(2.0) / 2.0) * e / (1.0 + e * e)


def w_star_prime(x):
    x = np.asarray(x, dtype=float)
    return -0.25 * np.tanh(x / 4.0) * w_star(x)


def w_tilde(p, x):
    """Positive solution of w'' - w + w^(2p-1) = 0.

    Evaluated in log form with exp(-|(p-1)x|) so large |x| underflows to 0
    instead of overflowing.
    """
    _check_p(p)
    a = (p - 1.0) * np.abs(np.asarray(x, dtype=float))
    log_w = (np.log(2.0 * np.sqrt(p)) - a - np.log1p(np.exp(-2.0 * a))) / (p - 1.0)
    return np.exp(log_w)


def w_tilde_scaled(spec, x):
    """Profile solving w'' + mu w + w^(2p-1) = 0: |mu|^(1/(2(p-1))) w_tilde_p(sqrt|mu| x)."""
    s = np.sqrt(-spec.mu)
    return (-spec.mu) ** (0.5 / (spec.p - 1.0)) * w_tilde(spec.p, s * np.asarray(x, dtype=float))


def w_tilde_scaled_prime(spec, x):
    x = np.asarray(x, dtype=float)
    s = np.sqrt(-spec.mu)
    return -s * np.tanh((spec.p - 1.0) * s * x) * w_tilde_scaled(spec, x)


def _grid_norm_sq(values, grid):
    return float(np.sum(grid.weights * values * values))


@lru_cache(maxsize=256)
def w_tilde_norm_sq(p):
    """||w_tilde_p||^2 by trapezoid quadrature on a grid wide enough for exp(-2|x|) decay."""
    _check_p(p)
    grid = grid_with_spacing(60.0, 0.01)
    return _grid_norm_sq(w_tilde(p, grid.x), grid)


def norm_exponent(p):
    return (3.0 - p) / (2.0 * (p - 1.0))


@lru_cache(maxsize=256)
def _default_mu_grid():
    return grid_with_spacing(400.0, 0.025)


def mu_from_norm(p, target_norm_sq, grid=None, norm_sq=None):
    """Multiplier mu < 0 such that ||w_tilde(p, mu)||^2 equals the target.

    With ``norm_sq`` (= ||w_tilde_p||^2) the closed-form scaling is inverted
    directly; otherwise |mu| is bisected against the quadrature norm on ``grid``
    (a wide default grid if omitted).
    """
    _check_p(p)
    if not target_norm_sq > 0:
        raise InvalidArgumentError("target norm must be positive")
    alpha = norm_exponent(p)
    if norm_sq is not None:
        return -((target_norm_sq / norm_sq) ** (1.0 / alpha))
    if grid is None:
        grid = _default_mu_grid()

    def gap(abs_mu):
        return _grid_norm_sq(w_tilde_scaled(SolitonSpec(p, -abs_mu), grid.x), grid) - target_norm_sq

    lo, hi = MU_BRACKET
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise NumericalFailureError("bisection bracket does not enclose the target",
                                    {"p": p, "gap_lo": g_lo, "gap_hi": g_hi})
    for _ in range(MU_MAX_ITER):
        mid = np.sqrt(lo * hi)
        g_mid = gap(mid)
        if g_mid == 0.0 or hi / lo - 1.0 < 1e-15:
            break
        if (g_mid < 0) == (g_lo < 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    else:
        raise NumericalFailureError("mu bisection did not converge", {"p": p, "lo": lo, "hi": hi})
    return -mid


@lru_cache(maxsize=256)
def unit_norm_mu(p):
    """Cached mu_from_norm(p, 1) on the default grid."""
    return mu_from_norm(p, 1.0)


def sqrt_mu_linearization(p):
    """First-order expansion of sqrt|mu| around p = 2 for unit-norm profiles."""
    return 0.25 - SQRT_MU_SLOPE * (p - 2.0)
