import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "gibbsmple", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "gibbsmple"))

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.fixture
def detail(request):
    """Attach a one-line summary to the current acceptance test."""

    def put(text):
        request.node.user_properties.append(("detail", text))

    return put


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    n, title = mark.args
    details = [v for k, v in item.user_properties if k == "detail"]
    prev = _ACCEPTANCE.get(n)
    ok = rep.passed and (prev is None or prev[1])
    _ACCEPTANCE[n] = (title, ok, "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, text = _ACCEPTANCE[n]
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if text:
            line += f"  [{text}]"
        terminalreporter.write_line(line)
