import pytest

from decmc._accel import COMPILED, _pure

BACKENDS = [pytest.param(_pure, id="pure")]
if COMPILED:
    from decmc._accel import _kernels

    BACKENDS.append(pytest.param(_kernels, id="compiled"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def fig1():
    from decmc.models import builtin_model

    return builtin_model("fig1")


@pytest.fixture(scope="session")
def pta():
    from decmc.ppda import load_bundled

    return load_bundled("pta")


@pytest.fixture(scope="session")
def pta7():
    from decmc.ppda import load_bundled

    return load_bundled("pta7")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
