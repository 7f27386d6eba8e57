"""Minimizers of the two-orbital energy under L2 orthonormality.

The default scheme is preconditioned nonlinear conjugate gradients on the
Grassmann manifold: gradients are preconditioned by (-D_xx + c)^(-1) (the
implicit part of the semi-implicit flow), projected onto the horizontal
space, and iterates are retracted with Lowdin orthonormalization. The plain
semi-implicit and explicit flows are kept as alternative schemes.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .energy_model import (
    OrbitalPair,
    constrained_residual,
    energy_of_samples,
    kinetic,
)
from .errors import (
    BumpCountError,
    DegeneratePairError,
    DomainTooSmallError,
    InvalidArgumentError,
    NonConvergenceError,
    StagnationError,
)
from .grid_core import (
    build_schrodinger,
    gram,
    grid_with_spacing,
    laplacian,
    lowest_eigenpairs,
    build_grid,
    solve_shifted,
)
from .profile_fit import detect_bumps
from .solitons import SolitonSpec, unit_norm_mu, w_tilde_scaled

SCHEMES = ("pcg", "semi_implicit", "explicit")
MODES = ("solve", "probe")
XN_AMPLITUDE = 4.0 * np.sqrt(3.0)
TAIL_TOL = 1e-8
ENERGY_SLACK = 1e-13
MAX_HALVINGS = 60

FLAG_UNRESOLVED = "x_n unresolved below force scale"
FLAG_DOMAIN = "domain too small"
FLAG_DEGENERATE = "numerically degenerate"


def separation_law(p):
    """4 sqrt(3) |2 - p|^(-1/2); the bump-distance law for p < 2."""
    if p == 2.0:
        raise InvalidArgumentError("separation law is singular at p = 2")
    return XN_AMPLITUDE / np.sqrt(abs(2.0 - p))


@dataclass(frozen=True)
class SolverConfig:
    p: float
    L: float = None
    h: float = 0.05
    n_points: int = None
    tau: float = 0.5
    shift: float = 1.0
    tol: float = 1e-8
    max_iterations: int = 200000
    xn_seed: float = None
    mixing_angle: float = np.pi / 4
    scheme: str = "pcg"
    backtracking: bool = True
    mode: str = "solve"
    orbitals: int = 2
    tau_min: float = 1e-6
    center_ansatz: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}")
        if self.orbitals not in (1, 2):
            raise InvalidArgumentError("orbitals must be 1 or 2")
        hi = 2.0 if self.mode == "solve" else 2.5
        if not 1.5 < self.p <= hi or (self.mode == "probe" and self.p == 2.5):
            allowed = "(1.5, 2]" if self.mode == "solve" else "(1.5, 2.5)"
            raise InvalidArgumentError(f"p={self.p} outside {allowed} for {self.mode} mode")
        if not self.tau > 0 or not self.tol > 0 or not self.h > 0:
            raise InvalidArgumentError("tau, tol and h must be positive")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be positive")
        if self.L is not None and not self.L > 0:
            raise InvalidArgumentError("L must be positive")
        if self.xn_seed is not None and not self.xn_seed > 0:
            raise InvalidArgumentError("xn_seed must be positive")

    def seed(self):
        if self.xn_seed is not None:
            return float(self.xn_seed)
        if self.p < 2.0:
            return separation_law(self.p)
        if self.L is not None:
            return self.L / 4.0
        raise InvalidArgumentError("xn_seed or L is required for p >= 2")

    def grid(self):
        if self.L is not None and self.n_points is not None:
            return build_grid(self.L, self.n_points)
        if self.L is not None:
            return grid_with_spacing(self.L, self.h)
        if self.orbitals == 1:
            return grid_with_spacing(60.0, self.h)
        return grid_with_spacing(max(60.0, 2.0 * self.seed() + 60.0), self.h)


@dataclass(frozen=True)
class GroundState:
    grid: object
    U: np.ndarray
    p: float
    split: object
    multipliers: np.ndarray
    mu: np.ndarray
    residual_sup: float
    iterations: int
    converged: bool = True
    gauge_fixed: bool = False
    flags: tuple = ()
    energy_history: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def orbitals(self):
        return self.U.shape[0]

    @property
    def pair(self):
        if self.orbitals != 2:
            raise InvalidArgumentError("single-orbital state has no pair")
        return OrbitalPair.from_array(self.grid, self.U, orthonormalized=True)

    @property
    def mu1(self):
        return float(self.mu[0])

    @property
    def mu2(self):
        return float(self.mu[1]) if self.orbitals == 2 else None

    @property
    def rho(self):
        return np.sum(self.U ** 2, axis=0)


def _lowdin(U, grid):
    S = gram(U, U, grid)
    if np.linalg.det(S) <= 1e-14 * max(1.0, np.prod(np.diag(S))):
        raise DegeneratePairError("Gram matrix is singular; orbitals are linearly dependent")
    e, V = np.linalg.eigh(S)
    return (V * e ** -0.5) @ V.T @ U


def lowdin_orthonormalize(pair):
    """Symmetric orthonormalization U -> S^(-1/2) U."""
    U = _lowdin(pair.U, pair.grid)
    return OrbitalPair.from_array(pair.grid, U, orthonormalized=True)


def initial_ansatz(p, grid, xn_seed, mixing_angle=np.pi / 4, center=0.0):
    """Rotated pair of unit-norm solitons at ``center`` and ``center + xn_seed``."""
    if not xn_seed > 0:
        raise InvalidArgumentError("xn_seed must be positive")
    if xn_seed >= grid.L or center < -grid.L or center + xn_seed > grid.L:
        raise DomainTooSmallError(f"xn_seed={xn_seed} does not fit in [-{grid.L}, {grid.L}]")
    spec = SolitonSpec(p, unit_norm_mu(p))
    w1 = w_tilde_scaled(spec, grid.x - center)
    w2 = w_tilde_scaled(spec, grid.x - center - xn_seed)
    c, s = np.cos(mixing_angle), np.sin(mixing_angle)
    U = np.vstack([c * w1 + s * w2, -s * w1 + c * w2])
    return OrbitalPair.from_array(grid, _lowdin(U, grid), orthonormalized=True)


def random_pair(p, grid, seed=0, n_blobs=6, spread=None):
    """Orthonormal pair made of randomly weighted, randomly placed smooth blobs."""
    rng = np.random.default_rng(seed)
    spread = spread if spread is not None else min(grid.L / 2, 20.0)
    centers = rng.uniform(-spread, spread, n_blobs)
    widths = rng.uniform(2.0, 6.0, n_blobs)
    blobs = np.exp(-((grid.x[None, :] - centers[:, None]) / widths[:, None]) ** 2)
    U = rng.normal(size=(2, n_blobs)) @ blobs
    return OrbitalPair.from_array(grid, _lowdin(U, grid), orthonormalized=True)


def _single_start(p, grid):
    u = w_tilde_scaled(SolitonSpec(p, unit_norm_mu(p)), grid.x)
    return u[None, :] / np.sqrt(gram(u, u, grid)[0, 0])


def _trace_ip(A, B, grid):
    return float(np.sum((A * B) @ grid.weights))


def _pcg(U, grid, cfg):
    p, tol = cfg.p, cfg.tol
    lap = laplacian(grid)

    def precondition(G):
        return solve_shifted(lap, cfg.shift, G)

    def horizontal(U, Z):
        return Z - gram(Z, U, grid) @ U

    def E_of(U):
        return energy_of_samples(U, grid, p).E

    E = E_of(U)
    history = [E]
    G, _ = constrained_residual(U, grid, p)
    Z = horizontal(U, precondition(G))
    D = -Z
    gz_old = _trace_ip(G, Z, grid)
    alpha = 1.0
    it = 0
    residual = float(np.max(np.abs(G)))
    while residual > tol:
        if it >= cfg.max_iterations:
            return U, it, residual, False, np.array(history)
        g0 = _trace_ip(G, D, grid)
        if g0 >= 0:
            D = -Z
            g0 = _trace_ip(G, D, grid)
        # secant step on the directional derivative
        Ut = _lowdin(U + alpha * D, grid)
        Gt, _ = constrained_residual(Ut, grid, p)
        gt = _trace_ip(Gt, horizontal(Ut, D), grid)
        step = min(alpha * g0 / (g0 - gt), 20 * alpha) if gt > g0 else 20 * alpha
        steepest = False
        while True:
            for _ in range(MAX_HALVINGS):
                Un = _lowdin(U + step * D, grid)
                En = E_of(Un)
                if En <= E + ENERGY_SLACK * abs(E):
                    break
                step /= 2
            else:
                if steepest:
                    raise StagnationError("no energy decrease along steepest descent", residual,
                                          _bare_state(U, grid, cfg, it, residual, history))
                D, steepest, step = -Z, True, alpha
                continue
            break
        alpha = step
        Dt = horizontal(Un, D)
        Gn, _ = constrained_residual(Un, grid, p)
        Zn = horizontal(Un, precondition(Gn))
        gz = _trace_ip(Gn, Zn, grid)
        beta = max(0.0, (gz - _trace_ip(Gn, horizontal(Un, Z), grid)) / gz_old)
        D = -Zn + beta * Dt
        U, G, Z, gz_old, E = Un, Gn, Zn, gz, En
        history.append(E)
        residual = float(np.max(np.abs(G)))
        it += 1
    return U, it, residual, True, np.array(history)


def _flow(U, grid, cfg):
    p, tol = cfg.p, cfg.tol
    lap = laplacian(grid)
    tau = cfg.tau
    E = energy_of_samples(U, grid, p).E
    history = [E]
    accepted = 0
    G, _ = constrained_residual(U, grid, p)
    residual = float(np.max(np.abs(G)))
    it = 0
    while residual > tol:
        if it >= cfg.max_iterations:
            return U, it, residual, False, np.array(history)
        rho = np.sum(U * U, axis=0)
        if cfg.scheme == "semi_implicit":
            rhs = (1.0 / tau + cfg.shift + rho ** (p - 1.0)) * U
            V = solve_shifted(lap, cfg.shift + 1.0 / tau, rhs)
        else:
            V = U - tau * G
        Un = _lowdin(V, grid)
        En = energy_of_samples(Un, grid, p).E
        it += 1
        if cfg.backtracking and En > E + ENERGY_SLACK * abs(E):
            tau /= 2
            accepted = 0
            if tau < cfg.tau_min:
                raise StagnationError(f"energy increase at tau={tau:.3g}", residual,
                                      _bare_state(U, grid, cfg, it, residual, history))
            continue
        U, E = Un, En
        history.append(E)
        accepted += 1
        if accepted % 50 == 0:
            tau = min(tau * 1.2, cfg.tau)
        G, _ = constrained_residual(U, grid, p)
        residual = float(np.max(np.abs(G)))
    return U, it, residual, True, np.array(history)


def _bare_state(U, grid, cfg, iterations, residual, history, converged=False):
    M = constrained_residual(U, grid, cfg.p)[1]
    return GroundState(grid, U, cfg.p, energy_of_samples(U, grid, cfg.p), M,
                       np.linalg.eigvalsh(M), residual, iterations, converged,
                       energy_history=np.asarray(history))


def _initial_samples(cfg, grid, initial):
    if initial is None:
        if cfg.orbitals == 1:
            return _single_start(cfg.p, grid)
        xn = cfg.seed()
        center = -xn / 2 if cfg.center_ansatz else 0.0
        return initial_ansatz(cfg.p, grid, xn, cfg.mixing_angle, center).U
    U = initial.U if hasattr(initial, "U") else np.atleast_2d(np.asarray(initial, dtype=float))
    if U.shape != (cfg.orbitals, grid.n_points):
        raise InvalidArgumentError(f"initial orbitals must have shape {(cfg.orbitals, grid.n_points)}")
    return _lowdin(U, grid)


def relax(config, initial=None):
    """Minimize the energy from an ansatz (or ``initial``) and return a gauge-fixed state.

    Raises NonConvergenceError (carrying the last iterate) when the iteration
    cap is hit before ``residual_sup <= tol``.
    """
    grid = initial.grid if initial is not None and hasattr(initial, "grid") else config.grid()
    U = _initial_samples(config, grid, initial)
    if config.scheme == "pcg":
        U, it, res, ok, hist = _pcg(U, grid, config)
    else:
        U, it, res, ok, hist = _flow(U, grid, config)
    state = _bare_state(U, grid, config, it, res, hist, converged=ok)
    if not ok:
        raise NonConvergenceError(
            f"no convergence after {it} iterations (residual {res:.3e})", res, state)
    return gauge_fix(state, tol=config.tol)


def _interp_at(values, grid, x0):
    return float(np.interp(x0, grid.x, values))


def _status_flags(U, grid, mu, tol, bumps):
    flags = []
    edge = np.max(np.abs(np.concatenate([U[:, :2], U[:, -2:]], axis=1)))
    if edge > TAIL_TOL:
        warnings.warn(f"orbital tails reach {edge:.2e} at the boundary; enlarge L", stacklevel=3)
        flags.append(FLAG_DOMAIN)
    if len(mu) == 2:
        if mu[1] - mu[0] < 1e-13:
            flags.append(FLAG_DEGENERATE)
        if bumps is not None and mu[1] < 0:
            # the separation force enters at second order in the tail overlap
            force = bumps.xn ** 2 / 32.0 * np.exp(-2.0 * np.sqrt(-mu[1]) * bumps.xn)
            if force < 10 * tol:
                flags.append(FLAG_UNRESOLVED)
    return tuple(flags)


def gauge_fix(gs, tol=None):
    """Representative of the state under rotations, signs and reflection.

    Rotate to the multiplier eigenbasis (ascending), make u1 positive, put the
    bump where u1 is larger on the left and the other bump to its right, and
    make u2 positive at the right bump.
    """
    grid = gs.grid
    U = np.array(gs.U)
    M = np.array(gs.multipliers)
    mu, V = np.linalg.eigh(M)
    U = V.T @ U
    M = V.T @ M @ V
    M = 0.5 * (M + M.T)
    if np.sum(grid.weights * U[0]) < 0:
        U[0] = -U[0]
    bumps = None
    if U.shape[0] == 2:
        try:
            bumps = detect_bumps(np.sum(U * U, axis=0), grid)
        except BumpCountError:
            bumps = None
        if bumps is not None:
            left, right = bumps.locations
            hl, hr = _interp_at(U[0], grid, left), _interp_at(U[0], grid, right)
            first_is_right = hr > hl and (hr - hl) > 1e-6 * max(abs(hl), abs(hr))
            if first_is_right:
                U = U[:, ::-1].copy()
                bumps = detect_bumps(np.sum(U * U, axis=0), grid)
            if _interp_at(U[1], grid, bumps.locations[1]) < 0:
                U[1] = -U[1]
                M[0, 1] = M[1, 0] = -M[0, 1]
        elif np.sum(grid.weights * grid.x * U[1]) < 0:
            U[1] = -U[1]
            M[0, 1] = M[1, 0] = -M[0, 1]
    tol = tol if tol is not None else 1e-8
    flags = tuple(f for f in gs.flags if f not in (FLAG_DOMAIN, FLAG_DEGENERATE, FLAG_UNRESOLVED))
    flags += _status_flags(U, grid, mu, tol, bumps)
    return replace(gs, U=U, multipliers=M, mu=mu, gauge_fixed=True, flags=flags)


@dataclass(frozen=True)
class EigenCrosscheck:
    eig1: float
    eig2: float
    gap1: float
    gap2: float


def eigen_crosscheck(gs):
    """Two lowest eigenvalues of -D_xx - rho^(p-1) compared with the multipliers."""
    op = build_schrodinger(-gs.rho ** (gs.p - 1.0), gs.grid)
    e1, e2 = lowest_eigenpairs(op, 2, gs.grid)
    mu2 = gs.mu2 if gs.mu2 is not None else np.nan
    return EigenCrosscheck(e1.eigenvalue, e2.eigenvalue,
                           abs(e1.eigenvalue - gs.mu1), abs(e2.eigenvalue - mu2))


def kinetic_energy(gs):
    return kinetic(gs.U, gs.grid)


def resample(gs, grid):
    """Orbitals of ``gs`` interpolated onto another grid (zero outside the old domain)."""
    return np.vstack([np.interp(grid.x, gs.grid.x, u, left=0.0, right=0.0) for u in gs.U])


@dataclass
class SweepRun:
    states: list
    failures: list

    def by_p(self):
        return {gs.p: gs for gs in self.states}


def _solve_fresh(cfg):
    try:
        return relax(cfg), None
    except (NonConvergenceError, StagnationError, DegeneratePairError, DomainTooSmallError) as exc:
        return None, str(exc)


def continue_sweep(p_values, config, warm_start=True, parallel=False, max_workers=None):
    """Solve along p values ordered toward 2.

    With ``warm_start`` each solve starts from the previous state resampled
    onto the new grid and falls back to a fresh ansatz on failure. With
    ``parallel`` the solves are independent fresh starts run on threads and
    merged in p order. Failures are collected, never raised.
    """
    ps = sorted(float(p) for p in p_values)
    if not ps:
        raise InvalidArgumentError("empty list of p values")
    configs = [replace(config, p=p, xn_seed=None if config.L is None else config.xn_seed)
               for p in ps]
    states, failures = [], []
    if parallel or not warm_start:
        if parallel:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(_solve_fresh, configs))
        else:
            results = [_solve_fresh(c) for c in configs]
        for cfg, (gs, err) in zip(configs, results):
            (states.append(gs) if gs is not None else failures.append((cfg.p, err)))
        return SweepRun(states, failures)
    prev = None
    for cfg in configs:
        gs, err = None, None
        if prev is not None:
            try:
                gs = relax(cfg, initial=resample(prev, cfg.grid()))
            except (NonConvergenceError, StagnationError, DegeneratePairError) as exc:
                err = str(exc)
        if gs is None:
            gs, err = _solve_fresh(cfg)
        if gs is None:
            failures.append((cfg.p, err))
        else:
            states.append(gs)
            prev = gs
    return SweepRun(states, failures)


def single_orbital_reference(p, L=40.0, h=0.05, tol=1e-10, mode="solve"):
    """Ground state of the one-orbital problem (J1) on [-L, L]."""
    cfg = SolverConfig(p=p, L=L, h=h, tol=tol, orbitals=1, mode=mode)
    return relax(cfg)
