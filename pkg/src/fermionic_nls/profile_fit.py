"""Two-soliton decomposition of a two-bump state.

A state is written as

    u1 = sqrt(1-b^2) W1 + a W2 + phi
    u2 = b W1 + sqrt(1-a^2) W2 + psi

with W1 = w(p, mu1)(x - x0 - delta) and W2 = w(p, mu2)(x - x0 - xn + eta),
where x0 and x0 + xn are the two density bumps. (a, b, delta, eta) minimize
||phi||^2 + ||psi||^2.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import BumpCountError, FitDivergedError, InvalidArgumentError, WindowError
from .solitons import SolitonSpec, w_star, w_star_prime, w_tilde_scaled, w_tilde_scaled_prime

BOX = 0.8
START = (np.sqrt(2) / 2, -np.sqrt(2) / 2, 0.0, 0.0)
NM_OPTIONS = {"xatol": 1e-12, "fatol": 1e-22, "maxiter": 2000}


@dataclass(frozen=True)
class BumpInfo:
    locations: tuple
    heights: tuple
    xn: float


def _local_maxima(rho, threshold):
    interior = (rho[1:-1] > rho[:-2]) & (rho[1:-1] >= rho[2:])
    idx = np.nonzero(interior)[0] + 1
    return [i for i in idx if rho[i] > threshold * rho.max()]


def _refine(rho, i, h, x):
    """Vertex of the parabola through three samples around index i."""
    ym, y0, yp = rho[i - 1], rho[i], rho[i + 1]
    denom = ym - 2 * y0 + yp
    if denom == 0:
        return x[i], y0
    t = 0.5 * (ym - yp) / denom
    return x[i] + t * h, y0 - 0.25 * (ym - yp) * t


def detect_bumps(rho, grid, threshold=0.1):
    """The two local maxima of a density above ``threshold`` times its maximum."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.n_points,):
        raise InvalidArgumentError("density length does not match grid")
    if np.any(rho < 0):
        raise InvalidArgumentError("density must be non-negative")
    peaks = [_refine(rho, i, grid.h, grid.x) for i in _local_maxima(rho, threshold)]
    if len(peaks) != 2:
        raise BumpCountError(f"expected two bumps, found {len(peaks)}", peaks)
    (x1, h1), (x2, h2) = peaks
    return BumpInfo((x1, x2), (h1, h2), x2 - x1)


@dataclass(frozen=True)
class FitResult:
    a: float
    b: float
    delta: float
    eta: float
    xn: float
    origin: float
    p: float
    mu1: float
    mu2: float
    F_value: float
    phi: np.ndarray
    psi: np.ndarray
    phi_hat: np.ndarray
    psi_hat: np.ndarray
    iterations: int = 0

    @property
    def Kn(self):
        return self.a * np.sqrt(1 - self.b ** 2) + self.b * np.sqrt(1 - self.a ** 2)

    @property
    def phi_sup(self):
        return float(np.max(np.abs(self.phi)))

    @property
    def psi_sup(self):
        return float(np.max(np.abs(self.psi)))

    @property
    def phi_hat_sup(self):
        return float(np.max(np.abs(self.phi_hat)))

    @property
    def psi_hat_sup(self):
        return float(np.max(np.abs(self.psi_hat)))

    @property
    def params(self):
        return np.array([self.a, self.b, self.delta, self.eta])


def _basis(grid, p, mu1, mu2, origin, xn, delta, eta, derivative=False):
    s1, s2 = SolitonSpec(p, mu1), SolitonSpec(p, mu2)
    y1 = grid.x - origin - delta
    y2 = grid.x - origin - xn + eta
    if derivative:
        return w_tilde_scaled_prime(s1, y1), w_tilde_scaled_prime(s2, y2)
    return w_tilde_scaled(s1, y1), w_tilde_scaled(s2, y2)


def _residuals(U, grid, p, mu1, mu2, origin, xn, params):
    a, b, delta, eta = params
    W1, W2 = _basis(grid, p, mu1, mu2, origin, xn, delta, eta)
    ca, cb = np.sqrt(1 - a * a), np.sqrt(1 - b * b)
    return U[0] - cb * W1 - a * W2, U[1] - b * W1 - ca * W2


def evaluate_decomposition(gs, params, origin, xn, iterations=0):
    """FitResult for given parameters (no optimization)."""
    a, b, delta, eta = (float(v) for v in params)
    mu1, mu2 = gs.mu1, gs.mu2
    phi, psi = _residuals(gs.U, gs.grid, gs.p, mu1, mu2, origin, xn, (a, b, delta, eta))
    F = float(np.sum(gs.grid.weights * (phi * phi + psi * psi)))
    phi_hat = np.sqrt(1 - b * b) * phi + b * psi
    psi_hat = a * phi + np.sqrt(1 - a * a) * psi
    return FitResult(a, b, delta, eta, float(xn), float(origin), gs.p, mu1, mu2, F,
                     phi, psi, phi_hat, psi_hat, iterations)


def fit_decomposition(gs, origin=None, xn=None, restarts=3, seed=0):
    """Least-squares decomposition by Nelder-Mead inside the box (-0.8, 0.8)^4.

    Bump positions come from the density unless ``origin`` and ``xn`` are given.
    Restarts begin from randomly perturbed copies of the best point so far.
    """
    if gs.orbitals != 2:
        raise InvalidArgumentError("decomposition needs a two-orbital state")
    if origin is None or xn is None:
        bumps = detect_bumps(gs.rho, gs.grid)
        origin = bumps.locations[0] if origin is None else origin
        xn = bumps.xn if xn is None else xn
    grid, w = gs.grid, gs.grid.weights

    def objective(params):
        if np.any(np.abs(params) >= 1.0):
            return np.inf
        phi, psi = _residuals(gs.U, grid, gs.p, gs.mu1, gs.mu2, origin, xn, params)
        return float(np.sum(w * (phi * phi + psi * psi)))

    bounds = [(-BOX, BOX)] * 4
    best = minimize(objective, np.array(START), method="Nelder-Mead", bounds=bounds,
                    options=NM_OPTIONS)
    iterations = best.nit
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        start = np.clip(best.x + rng.normal(scale=0.02, size=4), -BOX + 1e-3, BOX - 1e-3)
        trial = minimize(objective, start, method="Nelder-Mead", bounds=bounds,
                         options=NM_OPTIONS)
        iterations += trial.nit
        if trial.fun < best.fun:
            best = trial
    if np.any(np.abs(best.x) >= BOX - 1e-9):
        raise FitDivergedError(f"fit reached the box boundary at {best.x}")
    return evaluate_decomposition(gs, best.x, origin, xn, iterations)


@dataclass(frozen=True)
class FirstOrderConditions:
    a: float
    b: float
    delta: float
    eta: float

    def as_tuple(self):
        return (self.a, self.b, self.delta, self.eta)


def first_order_conditions(fit, gs):
    """Stationarity integrals of the objective in a, b, delta and eta."""
    grid = gs.grid
    a, b = fit.a, fit.b
    ca, cb = np.sqrt(1 - a * a), np.sqrt(1 - b * b)
    W1, W2 = _basis(grid, fit.p, fit.mu1, fit.mu2, fit.origin, fit.xn, fit.delta, fit.eta)
    D1, D2 = _basis(grid, fit.p, fit.mu1, fit.mu2, fit.origin, fit.xn, fit.delta, fit.eta,
                    derivative=True)
    phi, psi = fit.phi, fit.psi
    w = grid.weights
    return FirstOrderConditions(
        a=float(np.sum(w * (ca * phi - a * psi) * W2)),
        b=float(np.sum(w * (-b * phi + cb * psi) * W1)),
        delta=float(np.sum(w * (cb * phi + b * psi) * D1)),
        eta=float(np.sum(w * (a * phi + ca * psi) * D2)),
    )


@dataclass(frozen=True)
class CorrectorReport:
    corr_phi: float
    corr_psi: float
    amplitude_phi: float
    amplitude_psi: float
    scale: float
    odd_fraction_psi: float
    corr_phi_far: float
    corr_psi_far: float

    @property
    def ratio_phi(self):
        return self.amplitude_phi / self.scale

    @property
    def ratio_psi(self):
        return self.amplitude_psi / self.scale


def _window(values, grid, center, half):
    k = int(np.floor(half / grid.h))
    if k < 2:
        raise WindowError(f"window of half width {half:.3g} holds fewer than 5 points")
    y = np.arange(-k, k + 1) * grid.h
    return y, np.interp(center + y, grid.x, values)


def _corr(f, g):
    return float(np.dot(f, g) / np.sqrt(np.dot(f, f) * np.dot(g, g)))


def _amplitude(f, shape):
    return float(np.dot(f, shape) / np.dot(shape, shape))


def corrector_shapes(fit, gs):
    """Compare the rotated residuals near each bump with the leading corrector shapes.

    Near the first bump phi_hat ~ -2(y w*' + w*) A and psi_hat ~ (y/2) w* A,
    near the second phi_hat ~ -(y/2) w* A and psi_hat ~ 2(y w*' + w*) A, with
    A = exp(-sqrt|mu2| xn), on windows |y| < xn/4. The odd shapes solve
    (-D_xx + 1/16 - w*^2) f = -w*', the forcing produced by the neighbouring bump.
    """
    if not gs.p < 2:
        raise InvalidArgumentError("corrector shapes are defined for p < 2")
    half = fit.xn / 4
    y, ph = _window(fit.phi_hat, gs.grid, fit.origin, half)
    _, ps = _window(fit.psi_hat, gs.grid, fit.origin, half)
    even = -2 * (y * w_star_prime(y) + w_star(y))
    odd = (y / 2) * w_star(y)
    _, ph2 = _window(fit.phi_hat, gs.grid, fit.origin + fit.xn, half)
    _, ps2 = _window(fit.psi_hat, gs.grid, fit.origin + fit.xn, half)
    odd_part = 0.5 * (ps - ps[::-1])
    return CorrectorReport(
        corr_phi=_corr(ph, even),
        corr_psi=_corr(ps, odd),
        amplitude_phi=_amplitude(ph, even),
        amplitude_psi=_amplitude(ps, odd),
        scale=float(np.exp(-np.sqrt(-fit.mu2) * fit.xn)),
        odd_fraction_psi=float(np.dot(odd_part, odd_part) / np.dot(ps, ps)),
        corr_phi_far=_corr(ph2, -odd),
        corr_psi_far=_corr(ps2, -even),
    )
