from __future__ import annotations

import pytest

ACCEPTANCE: dict[int, dict[str, tuple[bool, str]]] = {}


@pytest.fixture
def record():
    """Store a criterion verdict (optionally one part of it) for the end-of-run summary."""

    def _record(number: int, ok: bool, detail: str, part: str = "") -> None:
        ACCEPTANCE.setdefault(number, {})[part] = (bool(ok), detail)
        print(f"criterion {number}{part}: {'PASS' if ok else 'FAIL'} | {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(v[0] for v in parts.values())
        detail = " || ".join(v[1] for _, v in sorted(parts.items()))
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
