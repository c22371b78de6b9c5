import numpy as np
import pytest


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def record_criterion(request):
    """Store one acceptance line; printed in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, ok, detail):
        lines.append((number, ok, detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure steady-state runtime."""
    from projmeas import estimate_spectrum, cesaro_measure, MatrixEnsemble
    E = MatrixEnsemble.create([np.eye(2) * 2, np.diag([1.0, 3.0])])
    estimate_spectrum(E, n_steps=200, n_trials=2)
    cesaro_measure(E, n=10)
    from projmeas.stationary import backward_limit_measure
    from projmeas.lyapunov import per_vector_exponent, recurrence_ratio_probe, BlockSpec
    from projmeas.ensemble import Subspace
    backward_limit_measure(E, 5)
    per_vector_exponent(E, [1.0, 1.0], n_steps=200, n_trials=2)
    F = MatrixEnsemble.create([np.eye(2), np.diag([1.0, -1.0])])
    full = BlockSpec(Subspace(np.eye(2)), "full")
    recurrence_ratio_probe(F, full, full, n_steps=10, lyapunov_steps=200)
