import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


class AcceptanceRecorder:
    """Collects one verdict per acceptance criterion and prints it immediately."""

    def record(self, key: str, title: str, passed: bool, detail: str) -> None:
        _RESULTS[key] = (passed, f"{title}: {detail}")
        print(f"\n{key} {'PASS' if passed else 'FAIL'}  {title}: {detail}")


@pytest.fixture
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: int(k[1:])):
        passed, text = _RESULTS[key]
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}  {text}")
