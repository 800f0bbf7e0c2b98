import numpy as np
import pytest

from grasorw import synthetic
from grasorw.graph_store import build_sequential

# Seven-vertex example graph with 4-byte offsets and ids; block size 32 bytes
# gives blocks {0,1,2}, {3,4}, {5,6}.
EXAMPLE_EDGES = [(6, 0), (6, 1), (6, 3), (6, 4), (5, 2), (5, 4), (3, 0), (3, 4)]


@pytest.fixture
def example_store(tmp_path):
    src, dst = np.array(EXAMPLE_EDGES).T
    return build_sequential(src, dst, tmp_path / "example", block_size=32, id_width=4,
                            offset_width=4)


def er_store(path, n, avg_degree, blocks, seed=0, id_width=4, offset_width=8):
    """ER graph whose sequential partition has exactly ``blocks`` blocks."""
    src, dst = synthetic.erdos_renyi(n, avg_degree, seed)
    deg = np.bincount(np.concatenate((src, dst)), minlength=n)
    total = n * offset_width + int(deg.sum()) * id_width
    size = -(-total // blocks)
    for slack in range(0, 10 * int(deg.max() + 1) * id_width, max(1, id_width)):
        g = build_sequential(src, dst, path, size + slack, id_width, offset_width, vertex_count=n)
        if g.block_count == blocks:
            return g
    raise RuntimeError("could not hit the requested block count")


@pytest.fixture
def er_factory(tmp_path):
    def make(n, avg_degree, blocks, seed=0, name="er"):
        return er_store(tmp_path / f"{name}_{n}_{blocks}_{seed}", n, avg_degree, blocks, seed)
    return make


# one PASS/FAIL line per acceptance criterion, printed at the end of the run
CRITERIA: dict[int, list[tuple[bool, str]]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    CRITERIA.setdefault(number, []).append((bool(ok), detail))
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        parts = CRITERIA[n]
        good = sum(ok for ok, _ in parts)
        failed = [d for ok, d in parts if not ok]
        shown = failed[0] if failed else parts[-1][1]
        status = "PASS" if not failed else "FAIL"
        count = f"{good}/{len(parts)} checks; " if len(parts) > 1 else ""
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {count}{shown}")
