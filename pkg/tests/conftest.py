import pytest

# (criterion number, passed, detail) lines collected by the acceptance suite.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion(capsys):
    def report(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (passed, detail)
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'}: {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
