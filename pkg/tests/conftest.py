import numpy as np
import pytest

from deimlab import kernels

KERNEL_NAMES = ("advection_points", "jacobi_orthogonalize", "arakawa", "laplacian5", "fft_lastaxis", "lu_inplace", "lu_substitute")
BACKENDS = ["numpy", "numba"] if kernels.NUMBA_AVAILABLE else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Rebind every kernel to one flavour for the duration of a test."""
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(kernels, f"_{name}_{request.param}"))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record ``(criterion, ok, detail)``; the terminal summary prints one line per criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[number]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
