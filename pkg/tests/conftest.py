import pytest

# criterion id -> (passed, detail); filled by the acceptance suite
ACCEPTANCE: dict = {}


@pytest.fixture
def record_criterion():
    def _record(cid: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[cid] = (passed, detail)
        print(f"criterion {cid}: {'PASS' if passed else 'FAIL'} {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if ok else 'FAIL'} {detail}")
