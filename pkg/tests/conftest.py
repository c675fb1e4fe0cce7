import numpy as np
import pytest

from embscene import _kernels
from embscene.gridscene import Scene, SceneObject, SceneGenConfig, generate_scene
from embscene.lexicon import build_lexicon


@pytest.fixture(scope="session")
def lex():
    return build_lexicon(0)


def make_scene(width, height, blocked=(), objects=(), room_type="living_room", seed=0):
    """Build a scene from blocked cells and (category, footprint) pairs."""
    grid = np.zeros((height, width), dtype=bool)
    for x, y in blocked:
        grid[y, x] = True
    objs = []
    for k, (cat, cells) in enumerate(objects):
        for x, y in cells:
            grid[y, x] = True
        objs.append(SceneObject(k, cat, tuple(cells), 1.0))
    return Scene(width, height, grid, tuple(objs), room_type, seed)


@pytest.fixture(scope="session")
def small_scenes():
    out = []
    for i in range(6):
        room = ("living_room", "kitchen", "bedroom", "bathroom")[i % 4]
        out.append(generate_scene(SceneGenConfig(room, 6, 8, 2, 4), 100 + i))
    return out


@pytest.fixture(params=["numba", "numpy"])
def kernel_path(request, monkeypatch):
    """Run a test once with the compiled kernels and once with the fallbacks."""
    if request.param == "numba" and not _kernels.HAS_NUMBA:
        pytest.skip("numba not available")
    if request.param == "numpy":
        for name, fn in _kernels.FALLBACKS.items():
            monkeypatch.setattr(_kernels, name, fn)
    return request.param


ACCEPTANCE_LINES = []


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
