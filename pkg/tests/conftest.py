from __future__ import annotations

import pytest


@pytest.fixture
def criterion(request):
    """``criterion(label, detail)`` tags an acceptance test for the summary table."""

    def tag(label: str, detail: str = "") -> None:
        request.node.user_properties.append(("criterion", (label, detail)))

    return tag


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome != "error":
                continue
            for key, value in getattr(rep, "user_properties", ()):
                if key == "criterion":
                    rows.append((value[0], "PASS" if outcome == "passed" else "FAIL", value[1]))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in sorted(rows):
        terminalreporter.write_line(f"{status} {label}  {detail}")
