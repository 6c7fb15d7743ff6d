import numpy as np
import pytest

from charwave.initialdata import InitialData, Profile
from charwave.wavespeed import make_wavespeed


@pytest.fixture(scope="session")
def p2():
    return make_wavespeed("power_sqrt", {"A": 1.0, "p": 2.0}, 0.9)


@pytest.fixture(scope="session")
def p3():
    return make_wavespeed("power_sqrt", {"A": 1.0, "p": 3.0}, 0.9)


@pytest.fixture(scope="session")
def const():
    return make_wavespeed("constant", {}, 1.0)


@pytest.fixture(scope="session")
def gevrey():
    return make_wavespeed("gevrey_flat", {"C1": 1.0, "C2": 1.0, "s": 2.0, "alpha": 0.0}, 0.5)


def pulse(eps):
    """phi = 0, psi = gaussian: the standard blowup data."""
    return InitialData(Profile("zero"), Profile("gaussian", 0.0, 1.0, 1.0), eps)


def rel(a, b):
    return np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(b), 1e-300)


# -- acceptance summary --------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def note(request):
    """Attach a one-line measurement summary to the running criterion."""
    m = request.node.get_closest_marker("criterion")

    def _note(text):
        if m is not None:
            _CRITERIA.setdefault(m.args[0], {})["detail"] = text
            print(f"criterion {m.args[0]}: {text}")
    return _note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    entry = _CRITERIA.setdefault(m.args[0], {})
    entry["title"] = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry["passed"] = rep.passed
        if rep.failed:
            entry["error"] = str(rep.longrepr.reprcrash.message) if hasattr(rep.longrepr, "reprcrash") \
                else str(rep.longrepr).splitlines()[-1]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        if "passed" not in e:
            continue
        status = "PASS" if e["passed"] else "FAIL"
        line = f"criterion {n:2d} {status}: {e.get('title', '')}"
        if e.get("detail"):
            line += f" [{e['detail']}]"
        if not e["passed"] and e.get("error"):
            line += f" :: {e['error'].splitlines()[0][:160]}"
        tr.write_line(line)
