import sys
import textwrap

import pytest

from shapfair.game import make_synthetic


@pytest.fixture
def glove():
    return make_synthetic("glove", left=[0, 1], right=[2])


@pytest.fixture
def child_script(tmp_path):
    """Write a tiny utility process and return a command list for it.

    ``body`` is the reply expression for coalition ``c``; it may raise or
    print garbage to exercise the error paths.
    """

    def make(body: str, preamble: str = "") -> list[str]:
        src = textwrap.dedent(
            f"""
            import sys
            {preamble}
            for line in sys.stdin:
                parts = line.split()
                if parts[0] == "QUIT":
                    break
                c = int(parts[1])
                {body}
                sys.stdout.flush()
            """
        )
        path = tmp_path / "child.py"
        path.write_text(src)
        return [sys.executable, str(path)]

    return make


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Print an acceptance verdict line and keep it for the end-of-run summary."""

    def emit(criterion: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion:2d}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
