import sys

import pytest


def pytest_configure(config):
    config._acceptance = []


@pytest.fixture
def criterion(request):
    """record(n, ok, detail): one pass/fail line per acceptance criterion,
    printed immediately and again in the terminal summary."""
    lines = request.config._acceptance

    def record(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        sys.__stdout__.write("\n" + line + "\n")
        sys.__stdout__.flush()
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
