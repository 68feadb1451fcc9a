import pytest

_outcomes: dict[int, list[tuple[str, bool]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes.setdefault(mark.args[0], []).append((item.name, rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        runs = _outcomes[n]
        ok = sum(p for _, p in runs)
        status = "PASS" if ok == len(runs) else "FAIL"
        failed = [name for name, p in runs if not p]
        extra = f" failed: {', '.join(failed)}" if failed else ""
        terminalreporter.write_line(f"criterion {n}: {status} ({ok}/{len(runs)} checks){extra}")
