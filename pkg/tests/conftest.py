import numpy as np
import pytest

from gaudin_forge.model import ClassicalSpinState, EnergySpectrum

CRITERIA = {
    1: "Richardson roots agree with exact diagonalization",
    2: "closed-form pair energies for n=1 and n=2",
    3: "operator decomposition and commuting Gaudin magnets",
    4: "classical conservation laws over t in [0, 50]",
    5: "spectral curve and genus-1 period oracle",
    6: "theta parity, quasi-periodicity and brute-force sum",
    7: "dynamics triangle: spin ODE, Dubrovin, theta inversion",
    8: "monodromy matrices: symplectic, transvection, composition",
    9: "admissible level sequence in exact arithmetic",
    10: "Pfaffian identities and amplitude symmetries",
    11: "byte-identical CLI outputs",
}

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): test backs acceptance criterion n")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for n in getattr(report, "criteria", ()):
        ok = report.outcome == "passed"
        _outcomes[n] = _outcomes.get(n, True) and ok


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.criteria = tuple(m.args[0] for m in item.iter_markers("criterion"))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        if n in _outcomes:
            status = "PASS" if _outcomes[n] else "FAIL"
        else:
            status = "NOT RUN"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_spectrum(rng, n, g=1.0, N=0, spacing=0.1):
    """Sorted levels in [0, 2] with a minimum spacing."""
    while True:
        eps = np.sort(rng.uniform(0.0, 2.0, n))
        if n == 1 or np.min(np.diff(eps)) > spacing:
            return EnergySpectrum(eps, g, N)


def random_state(rng, n):
    return ClassicalSpinState.random(n, rng)
