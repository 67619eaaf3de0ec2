import numpy as np
import pytest

from bayesmia import _kernels_py

try:
    from bayesmia import _kernels as _compiled
except ImportError:  # pragma: no cover - build without a compiler
    _compiled = None

KERNEL_BACKENDS = [pytest.param(_kernels_py, id="numpy")]
if _compiled is not None:
    KERNEL_BACKENDS.append(pytest.param(_compiled, id="cython"))


@pytest.fixture(params=KERNEL_BACKENDS)
def kernel_impl(request, monkeypatch):
    """Run a test once per kernel backend by patching the dispatch module."""
    from bayesmia import kernels

    impl = request.param
    for name in ("best_cut", "best_cuts_rows", "average_precision_desc"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return impl


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
