"""Energy functional, Hamiltonian and Lagrange multipliers for orbital pairs."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .grid_core import apply, build_schrodinger, gram

ORTH_TOL = 1e-9


@dataclass(frozen=True)
class OrbitalPair:
    grid: object
    u1: np.ndarray
    u2: np.ndarray
    orthonormalized: bool = False

    def __post_init__(self):
        for name in ("u1", "u2"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (self.grid.n_points,):
                raise InvalidArgumentError(f"{name} must have {self.grid.n_points} samples")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_array(cls, grid, U, orthonormalized=False):
        return cls(grid, U[0], U[1], orthonormalized)

    @property
    def U(self):
        return np.vstack([self.u1, self.u2])


@dataclass(frozen=True)
class EnergySplit:
    E: float
    T: float
    P: float
    p: float


@dataclass(frozen=True)
class MultiplierMatrix:
    matrix: np.ndarray

    def eigh(self):
        """Eigenvalues ascending and eigenvectors as columns."""
        return np.linalg.eigh(self.matrix)


@dataclass(frozen=True)
class IdentityReport:
    musum_gap: float
    ratio_gap: float
    virial_gap: float


def density(pair):
    return pair.u1 ** 2 + pair.u2 ** 2


def kinetic(U, grid):
    """Sum over rows of the forward-difference Dirichlet form sum (du)^2 / h."""
    U = np.atleast_2d(U)
    d = np.diff(np.pad(U, ((0, 0), (1, 1))), axis=1)
    return float(np.sum(d * d) / grid.h)


def energy_of_samples(U, grid, p):
    """EnergySplit of stacked orbitals (one row for the single-orbital problem)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if not np.all(np.isfinite(U)):
        raise InvalidArgumentError("orbital samples must be finite")
    rho = np.sum(U * U, axis=0)
    T = kinetic(U, grid)
    P = float(np.sum(grid.weights * rho ** p))
    return EnergySplit(T - P / p, T, P, p)


def energy(pair, p):
    S = gram(pair.U, pair.U, pair.grid)
    if np.max(np.abs(S - np.eye(2))) > ORTH_TOL:
        warnings.warn("energy evaluated on a pair that is not orthonormal", stacklevel=2)
    return energy_of_samples(pair.U, pair.grid, p)


def hamiltonian_apply(u, rho, p, grid):
    """(-D_xx - rho^(p-1)) u; ``u`` may stack several orbitals."""
    op = build_schrodinger(-np.asarray(rho, dtype=float) ** (p - 1.0), grid)
    return apply(op, u)


def multiplier_matrix_of_samples(U, grid, p):
    rho = np.sum(U * U, axis=0)
    HU = hamiltonian_apply(U, rho, p, grid)
    G = gram(HU, U, grid)
    return 0.5 * (G + G.T), HU


def multiplier_matrix(pair, p):
    M, _ = multiplier_matrix_of_samples(pair.U, pair.grid, p)
    return MultiplierMatrix(M)


def constrained_residual(U, grid, p):
    """Projected gradient HU - Lambda U and the symmetric multiplier matrix."""
    M, HU = multiplier_matrix_of_samples(U, grid, p)
    return HU - M @ U, M


def identity_report(gs):
    """Gaps of the multiplier-sum, (p+1)/(3-p) and virial relations (absolute values)."""
    s = gs.split
    p = s.p
    total = float(np.sum(gs.mu))
    return IdentityReport(
        musum_gap=abs(total - (p * s.E + (1.0 - p) * s.T)),
        ratio_gap=abs(total - s.E * (p + 1.0) / (3.0 - p)),
        virial_gap=abs(2.0 * s.T - (p - 1.0) / p * s.P),
    )
