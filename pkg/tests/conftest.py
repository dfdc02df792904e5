"""Shared test plumbing: the acceptance-criteria result table.

test_acceptance.py records one entry per criterion through ``record``;
the terminal-summary hook prints them as a compact pass/fail table at
the end of the run, even under captured stdout.
"""

_ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def record(number: int, name: str, ok: bool, detail: str = "") -> None:
    _ACCEPTANCE_RESULTS.append((number, name, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_ACCEPTANCE_RESULTS):
        verdict = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(
            f"[{verdict}] criterion {number:2d}: {name}{suffix}")
