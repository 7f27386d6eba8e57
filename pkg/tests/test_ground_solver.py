import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermionic_nls.energy_model import OrbitalPair, constrained_residual, energy_of_samples
from fermionic_nls.errors import (
    DegeneratePairError,
    DomainTooSmallError,
    InvalidArgumentError,
    NonConvergenceError,
)
from fermionic_nls.ground_solver import (
    GroundState,
    SolverConfig,
    continue_sweep,
    eigen_crosscheck,
    gauge_fix,
    initial_ansatz,
    lowdin_orthonormalize,
    random_pair,
    relax,
    resample,
    separation_law,
)
from fermionic_nls.grid_core import gram, grid_with_spacing, inner_product
from fermionic_nls.profile_fit import detect_bumps
from fermionic_nls.solitons import mu_from_norm, w_star


def _rot(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


@pytest.mark.parametrize("kwargs", [
    dict(p=1.5), dict(p=2.1), dict(p=3.5), dict(p=1.9, tau=0), dict(p=1.9, tol=-1),
    dict(p=1.9, scheme="newton"), dict(p=1.9, orbitals=3), dict(p=2.5, mode="probe"),
])
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        SolverConfig(**kwargs)


def test_probe_mode_allows_supercritical():
    assert SolverConfig(p=2.05, mode="probe", L=100).seed() == 25.0


def test_separation_law():
    assert separation_law(1.9) == pytest.approx(4 * math.sqrt(3) / math.sqrt(0.1))
    with pytest.raises(InvalidArgumentError):
        separation_law(2.0)


def test_lowdin_keeps_orthonormal_pair():
    g = grid_with_spacing(40, 0.05)
    pair = random_pair(1.9, g, seed=4)
    again = lowdin_orthonormalize(pair)
    assert np.max(np.abs(again.U - pair.U)) <= 1e-12


def test_lowdin_rejects_degenerate():
    g = grid_with_spacing(10, 0.1)
    f = w_star(g.x)
    with pytest.raises(DegeneratePairError):
        lowdin_orthonormalize(OrbitalPair(g, f, f))


def test_lowdin_small_overlap():
    g = grid_with_spacing(100, 0.05)
    a, b = w_star(g.x), w_star(g.x - 60)
    overlap = abs(inner_product(a, b, g))
    out = lowdin_orthonormalize(OrbitalPair(g, a, b))
    S = gram(out.U, out.U, g)
    assert abs(S[0, 1]) <= 1e-12
    assert S[0, 0] == pytest.approx(1, abs=1e-12) and S[1, 1] == pytest.approx(1, abs=1e-12)
    assert np.max(np.abs(out.u1 - a)) <= 2 * overlap
    assert np.max(np.abs(out.u2 - b)) <= 2 * overlap


@pytest.fixture(scope="module")
def ansatz60():
    g = grid_with_spacing(100, 0.05)
    return initial_ansatz(2.0, g, 60.0)


def test_ansatz_energy_at_two(ansatz60):
    assert energy_of_samples(ansatz60.U, ansatz60.grid, 2.0).E == pytest.approx(-1 / 24, abs=1e-3)


def test_ansatz_is_orthonormal(ansatz60):
    S = gram(ansatz60.U, ansatz60.U, ansatz60.grid)
    assert np.max(np.abs(S - np.eye(2))) <= 1e-12


def test_ansatz_has_two_bumps(ansatz60):
    g = ansatz60.grid
    b = detect_bumps(ansatz60.u1 ** 2 + ansatz60.u2 ** 2, g)
    assert abs(b.locations[0]) <= g.h
    assert abs(b.locations[1] - 60) <= g.h


def test_ansatz_domain_too_small():
    with pytest.raises(DomainTooSmallError):
        initial_ansatz(1.9, grid_with_spacing(30, 0.1), 30.0)


def test_single_orbital_reference(j1_state):
    assert j1_state.split.E == pytest.approx(-1 / 48, abs=5e-4)
    assert j1_state.mu1 == pytest.approx(-1 / 16, abs=1e-3)
    assert j1_state.orbitals == 1


def test_two_bump_solve(state19):
    assert state19.converged and state19.residual_sup <= 1e-8
    target = mu_from_norm(1.9, 1.0)
    assert state19.mu1 == pytest.approx(target, rel=0.1)
    assert state19.mu2 == pytest.approx(target, rel=0.1)
    detect_bumps(state19.rho, state19.grid)


def test_state_invariants(state19):
    assert state19.mu1 <= state19.mu2 < 0
    assert state19.U[0].min() > -1e-10
    G, _ = constrained_residual(state19.U, state19.grid, 1.9)
    assert np.max(np.abs(G)) <= 1e-8
    S = gram(state19.U, state19.U, state19.grid)
    assert np.max(np.abs(S - np.eye(2))) <= 1e-9
    assert state19.flags == ()


def test_random_start_reaches_same_energy(state19):
    cfg = SolverConfig(p=1.9)
    other = relax(cfg, initial=random_pair(1.9, cfg.grid(), seed=0))
    assert other.split.E == pytest.approx(state19.split.E, abs=1e-7)


def test_energy_history_is_monotone(state19):
    hist = state19.energy_history
    assert np.all(np.diff(hist) <= 1e-13 * abs(hist[-1]))


def test_non_convergence_carries_state():
    with pytest.raises(NonConvergenceError) as info:
        relax(SolverConfig(p=1.9, max_iterations=3))
    assert info.value.state is not None and info.value.residual > 1e-8


def test_semi_implicit_scheme_agrees(state19):
    gs = relax(SolverConfig(p=1.9, scheme="semi_implicit", tol=1e-7, max_iterations=200000),
               initial=state19)
    assert gs.split.E == pytest.approx(state19.split.E, abs=1e-9)


def test_gauge_fix_idempotent(state19):
    again = gauge_fix(state19)
    assert np.max(np.abs(again.U - state19.U)) <= 1e-12


def test_gauge_fix_invariant_under_mixing(state19):
    U = _rot(1.234) @ state19.U
    M = constrained_residual(U, state19.grid, 1.9)[1]
    mixed = replace(state19, U=U, multipliers=M, gauge_fixed=False)
    assert np.max(np.abs(gauge_fix(mixed).U - state19.U)) <= 1e-8


def test_gauge_fix_invariant_under_reflection(state19):
    U = -state19.U[:, ::-1]
    M = constrained_residual(U, state19.grid, 1.9)[1]
    mixed = replace(state19, U=U, multipliers=M, gauge_fixed=False)
    assert np.max(np.abs(gauge_fix(mixed).U - state19.U)) <= 1e-8


def test_gauge_sign_conventions(state19):
    b = detect_bumps(state19.rho, state19.grid)
    x, u2 = state19.grid.x, state19.U[1]
    assert np.interp(b.locations[0], x, u2) <= 0
    assert np.interp(b.locations[1], x, u2) > 0


def test_eigen_crosscheck_converged(state19):
    c = eigen_crosscheck(state19)
    bound = 10 * 1e-8 + 0.01 * state19.grid.h ** 2
    assert c.gap1 <= bound and c.gap2 <= bound
    assert c.eig1 <= c.eig2


def test_eigen_crosscheck_analytic_ansatz():
    g = grid_with_spacing(100, 0.05)
    pair = initial_ansatz(2.0, g, 40.0, center=-20.0)
    G, M = constrained_residual(pair.U, g, 2.0)
    mu = np.linalg.eigvalsh(M)
    gs = GroundState(g, pair.U, 2.0, energy_of_samples(pair.U, g, 2.0), M, mu,
                     float(np.max(np.abs(G))), 0)
    c = eigen_crosscheck(gs)
    scale = math.exp(-math.sqrt(-mu[1]) * 40.0)
    assert c.gap1 <= 10 * scale and c.gap2 <= 10 * scale
    assert c.eig1 <= c.eig2


def test_resample_round_trip(state19):
    U = resample(state19, state19.grid)
    assert np.max(np.abs(U - state19.U)) == 0


@pytest.fixture(scope="module")
def small_sweep():
    return continue_sweep([1.80, 1.85, 1.90], SolverConfig(p=1.8))


def test_sweep_converges(small_sweep):
    assert not small_sweep.failures
    assert all(gs.residual_sup <= 1e-8 for gs in small_sweep.states)


def test_sweep_bump_distance_increases(small_sweep):
    xn = [detect_bumps(gs.rho, gs.grid).xn for gs in small_sweep.states]
    assert all(b > a for a, b in zip(xn, xn[1:]))


def test_sweep_energy_increases(small_sweep):
    E = [gs.split.E for gs in small_sweep.states]
    assert all(b > a for a, b in zip(E, E[1:]))


def test_sweep_energy_above_limit(small_sweep):
    E = [gs.split.E for gs in small_sweep.states]
    assert all(e > -1 / 24 for e in E), f"energies {E} vs -1/24"


def test_sweep_failure_is_collected():
    run = continue_sweep([1.9], SolverConfig(p=1.9, max_iterations=2), warm_start=False)
    assert run.states == [] and run.failures[0][0] == 1.9


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2 * math.pi), st.booleans())
def test_gauge_orbit_property(state19, t, reflect):
    U = _rot(t) @ state19.U
    if reflect:
        U = U[:, ::-1].copy()
    M = constrained_residual(U, state19.grid, 1.9)[1]
    out = gauge_fix(replace(state19, U=U, multipliers=M))
    assert np.max(np.abs(out.U - state19.U)) <= 1e-8


def test_unresolved_separation_is_flagged():
    gs = relax(SolverConfig(p=1.98))
    assert "x_n unresolved below force scale" in gs.flags
