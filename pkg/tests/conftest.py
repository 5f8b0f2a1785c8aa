"""Shared test plumbing: the acceptance-criteria scoreboard.

Acceptance tests record one line per criterion; the summary hook prints
them after the run so the verdicts are visible in one place.
"""

from contextlib import contextmanager

import pytest

_LINES: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def criterion():
    """Context manager factory: records PASS on clean exit, FAIL on error."""

    @contextmanager
    def _criterion(num: int, name: str):
        note = {}
        try:
            yield note
        except BaseException:
            _LINES.append((num, name, False, note.get("detail", "")))
            raise
        _LINES.append((num, name, True, note.get("detail", "")))

    return _criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(_LINES):
        line = f"criterion {num} ({name}): {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
