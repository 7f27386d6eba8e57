"""Uniform 1D grid, trapezoid quadrature and tridiagonal Schrodinger operators.

The real line is replaced by [-L, L] with an odd number of points so that
x = 0 is a node. Functions vanish one cell beyond each endpoint (Dirichlet).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.linalg.lapack import dgtsv

from .errors import InvalidArgumentError, NumericalFailureError, SingularSystemError

EIG_TOL = 1e-9
BISECTION_WIDTH = 1e-12


@dataclass(frozen=True)
class Grid:
    L: float
    n_points: int
    x: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.linspace(-self.L, self.L, self.n_points)
        x[self.n_points // 2] = 0.0
        w = np.full(self.n_points, self.h)
        w[0] = w[-1] = self.h / 2
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "weights", w)

    @property
    def h(self):
        return 2.0 * self.L / (self.n_points - 1)


def build_grid(L, n_points):
    L = float(L)
    if not np.isfinite(L) or L <= 0:
        raise InvalidArgumentError(f"half width must be positive, got {L}")
    if int(n_points) != n_points or n_points < 3 or n_points % 2 == 0:
        raise InvalidArgumentError(f"n_points must be an odd integer >= 3, got {n_points}")
    return Grid(L, int(n_points))


def grid_with_spacing(L, h):
    """Grid on [-L, L] with spacing as close to ``h`` as an odd node count allows."""
    half = max(1, int(round(L / h)))
    return build_grid(L, 2 * half + 1)


def _check_len(a, grid, name="samples"):
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != grid.n_points:
        raise InvalidArgumentError(
            f"{name} length {a.shape[-1]} does not match grid ({grid.n_points})")
    return a


def inner_product(f, g, grid):
    """Trapezoid-rule L2 pairing sum_k w_k f_k g_k."""
    f = _check_len(f, grid, "f")
    g = _check_len(g, grid, "g")
    return float(np.sum(grid.weights * f * g))


def gram(U, V, grid):
    """Matrix of pairings <U_i, V_j> for stacked sample rows."""
    U = _check_len(np.atleast_2d(U), grid)
    V = _check_len(np.atleast_2d(V), grid)
    return (U * grid.weights) @ V.T


@dataclass(frozen=True)
class TriDiagOperator:
    diagonal: np.ndarray
    off_diagonal: np.ndarray
    symmetric: bool = True
    sub_diagonal: np.ndarray = None

    def __post_init__(self):
        d = np.asarray(self.diagonal, dtype=float)
        e = np.asarray(self.off_diagonal, dtype=float)
        if e.shape != (d.size - 1,):
            raise InvalidArgumentError("off_diagonal must have length n-1")
        sub = e if self.sub_diagonal is None else np.asarray(self.sub_diagonal, dtype=float)
        if sub.shape != e.shape:
            raise InvalidArgumentError("sub_diagonal must have length n-1")
        object.__setattr__(self, "diagonal", d)
        object.__setattr__(self, "off_diagonal", e)
        object.__setattr__(self, "sub_diagonal", sub)
        object.__setattr__(self, "symmetric", bool(np.array_equal(sub, e)))

    @property
    def size(self):
        return self.diagonal.size

    def dense(self):
        return (np.diag(self.diagonal) + np.diag(self.off_diagonal, 1)
                + np.diag(self.sub_diagonal, -1))


def build_schrodinger(potential, grid):
    """Central-difference matrix of -d^2/dx^2 + V with zero Dirichlet data."""
    V = _check_len(potential, grid, "potential")
    h2 = grid.h ** 2
    return TriDiagOperator(2.0 / h2 + V, np.full(grid.n_points - 1, -1.0 / h2))


def laplacian(grid):
    return build_schrodinger(np.zeros(grid.n_points), grid)


def apply(op, u):
    """Matrix-vector product; ``u`` may stack several vectors along axis 0."""
    u = np.asarray(u, dtype=float)
    y = op.diagonal * u
    y[..., :-1] += op.off_diagonal * u[..., 1:]
    y[..., 1:] += op.sub_diagonal * u[..., :-1]
    return y


def solve_shifted(op, shift, rhs):
    """Solve (op + shift I) y = rhs by tridiagonal elimination.

    ``rhs`` may be one vector or rows of several.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[-1] != op.size:
        raise InvalidArgumentError("rhs length does not match operator")
    b = np.atleast_2d(rhs).T.copy()
    _, _, _, y, info = dgtsv(op.sub_diagonal, op.diagonal + shift, op.off_diagonal, b,
                             overwrite_b=True)
    if info > 0:
        raise SingularSystemError(f"zero pivot at row {info - 1}")
    if info < 0:
        raise InvalidArgumentError(f"illegal argument {-info} to tridiagonal solver")
    y = y.T
    return y.reshape(rhs.shape)


def sturm_count(op, level):
    """Number of eigenvalues strictly below ``level`` (symmetric op only)."""
    if not op.symmetric:
        raise InvalidArgumentError("Sturm count needs a symmetric operator")
    d = op.diagonal.tolist()
    e2 = (op.off_diagonal ** 2).tolist()
    tiny = np.finfo(float).tiny
    count = 0
    q = d[0] - level
    if q < 0:
        count += 1
    for k in range(1, len(d)):
        if q == 0.0:
            q = tiny
        q = d[k] - level - e2[k - 1] / q
        if q < 0:
            count += 1
    return count


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    eigenvector: np.ndarray
    residual: float
    degenerate: bool = False


def lowest_eigenpairs(op, k, grid, eig_tol=EIG_TOL):
    """k smallest eigenpairs by bisection (LAPACK stebz) and inverse iteration (stein).

    Eigenvectors are normalized in the grid quadrature and signed so that their
    largest-magnitude entry is positive.
    """
    if not op.symmetric:
        raise InvalidArgumentError("eigen-solver needs a symmetric operator")
    if k not in (1, 2, 3):
        raise InvalidArgumentError(f"k must be 1, 2 or 3, got {k}")
    _check_len(op.diagonal, grid, "operator")
    try:
        vals, vecs = eigh_tridiagonal(op.diagonal, op.off_diagonal, select="i",
                                      select_range=(0, k - 1), lapack_driver="stebz",
                                      tol=BISECTION_WIDTH)
    except LinAlgError as exc:
        raise NumericalFailureError(
            "eigenvalue bisection failed",
            {"reason": str(exc), "count_below_zero": sturm_count(op, 0.0)}) from exc

    degenerate = np.zeros(k, dtype=bool)
    V = vecs.T.copy()
    for i in range(1, k):
        if abs(vals[i] - vals[i - 1]) < 1e-13:
            degenerate[i] = degenerate[i - 1] = True
    pairs = []
    for i in range(k):
        v = V[i]
        for j in range(i):
            v = v - inner_product(v, V[j], grid) * V[j]
        for _ in range(3):
            v = v / np.sqrt(inner_product(v, v, grid))
            res = float(np.max(np.abs(apply(op, v) - vals[i] * v)))
            if res <= eig_tol:
                break
            # one extra inverse-iteration pass, shifted just off the eigenvalue
            v = solve_shifted(op, -vals[i] * (1 + 1e-14) - 1e-14, v)
        else:
            raise NumericalFailureError(
                "inverse iteration did not reach eig_tol",
                {"index": i, "eigenvalue": vals[i], "residual": res})
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        V[i] = v
        pairs.append(EigenPair(float(vals[i]), v, res, bool(degenerate[i])))
    return pairs
