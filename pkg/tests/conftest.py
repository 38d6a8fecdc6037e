_acceptance: dict[str, tuple[str, float]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[report.nodeid] = ("PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance, key=lambda n: int(n.split("test_criterion_")[1].split("_")[0])):
        outcome, secs = _acceptance[nodeid]
        name = nodeid.split("::")[-1].removeprefix("test_criterion_")
        terminalreporter.write_line(f"{outcome}  criterion {name.replace('_', ' ')}  ({secs:.2f} s)")
