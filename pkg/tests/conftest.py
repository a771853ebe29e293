"""Prints one pass/fail line per acceptance criterion at the end of the run."""
import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    n = mark.args[0]
    detail = dict(rep.user_properties).get("detail", "")
    if rep.failed:
        msg = str(rep.longrepr.reprcrash.message).splitlines()[0] if hasattr(rep.longrepr, "reprcrash") else ""
        _OUTCOMES[n] = ("FAIL", detail or msg)
    elif rep.when == "call":
        _OUTCOMES[n] = ("PASS" if rep.passed else rep.outcome.upper(), detail)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        status, detail = _OUTCOMES[n]
        terminalreporter.write_line(f"criterion {n}: {status}" + (f"  ({detail})" if detail else ""))
