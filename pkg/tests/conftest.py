"""Collects one PASS/FAIL line per acceptance criterion and prints them after the run."""

import pytest

_RESULTS: dict = {}


class _Recorder:
    def __call__(self, criterion: int, part: str, ok: bool, detail: str):
        _RESULTS.setdefault(criterion, []).append((part, bool(ok), detail))
        print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok


@pytest.fixture
def acceptance():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_RESULTS):
        parts = _RESULTS[crit]
        ok = all(p[1] for p in parts)
        failed = [f"{name}: {detail}" for name, good, detail in parts if not good]
        detail = "; ".join(failed) if failed else "; ".join(f"{name}: {d}" for name, _, d in parts)
        tr.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
