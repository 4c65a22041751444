from pathlib import Path

import numpy as np
import pytest

from wgcdr.mesh import FAMILIES, MeshFamily, generate_mesh

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def meshes():
    """Level-2 and level-3 meshes of every family, built once."""
    cache = {}

    def get(family, level=2):
        key = (family, level)
        if key not in cache:
            cache[key] = generate_mesh(MeshFamily(family, level))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=FAMILIES)
def family(request):
    return request.param


ACCEPTANCE = []


def record(number, title, passed, detail=""):
    """Register one acceptance verdict for the end-of-run summary."""
    ACCEPTANCE.append((number, title, bool(passed), detail))
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
    print(line + (f" | {detail}" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        flag = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{flag}] criterion {number}: {title}"
                                    + (f" | {detail}" if detail else ""))
