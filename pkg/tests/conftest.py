import pytest

_LOG_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(_LOG_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_LOG_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in rows:
        terminalreporter.write_line(f"{status} {name}: {detail}")
