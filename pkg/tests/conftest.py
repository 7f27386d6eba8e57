import time
import warnings

import pytest

from fermionic_nls.ground_solver import SolverConfig, continue_sweep, relax, single_orbital_reference
from fermionic_nls.profile_fit import fit_decomposition

SWEEP_P = (1.80, 1.84, 1.88, 1.92, 1.96)


@pytest.fixture(scope="session")
def state19():
    return relax(SolverConfig(p=1.9))


@pytest.fixture(scope="session")
def fit19(state19):
    return fit_decomposition(state19)


@pytest.fixture(scope="session")
def j1_state():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return single_orbital_reference(2.0, L=40.0, h=0.05)


@pytest.fixture(scope="session")
def sweep_states():
    start = time.perf_counter()
    run = continue_sweep(SWEEP_P, SolverConfig(p=SWEEP_P[0]), warm_start=True)
    run.elapsed = time.perf_counter() - start
    return run


@pytest.fixture(scope="session")
def sweep_fits(sweep_states):
    start = time.perf_counter()
    fits = {gs.p: fit_decomposition(gs) for gs in sweep_states.states}
    sweep_states.elapsed += time.perf_counter() - start
    return fits


PROBE_L = (100.0, 200.0, 400.0)


@pytest.fixture(scope="session")
def probe_escape():
    from fermionic_nls.asymptotics import escape_probe
    return escape_probe(2.05, PROBE_L)


@pytest.fixture(scope="session")
def probe_control():
    from fermionic_nls.asymptotics import escape_probe
    return escape_probe(1.9, PROBE_L)
