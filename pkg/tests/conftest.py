import sys
from pathlib import Path

import pytest

from loopnorm import corpus
from loopnorm.frontend import parse, parse_file

FIXTURES = Path(__file__).parent / "fixtures"

GEMM_LOOPS = {"i": "for i in 0..N {", "j": "for j in 0..N {", "k": "for k in 0..N {"}


def gemm(order: str = "ijk", n: int = 4, names=("A", "B", "C")):
    a, b, c = names
    decls = f"param N = {n};\narray {a}[N, N];\narray {b}[N, N];\narray {c}[N, N];\n"
    head = "".join(GEMM_LOOPS[x] for x in order)
    return parse(f"{decls}{head} {c}[i, j] += {a}[i, k] * {b}[k, j]; }}}}}}")


def fixture(name: str):
    return parse_file(FIXTURES / f"{name}.loop")


@pytest.fixture(scope="session")
def kernels():
    return corpus.load_all()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.result_lines():
        terminalreporter.write_line(line)
