import re
from collections import defaultdict

_CRITERIA = defaultdict(list)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        ok = report.passed and not hasattr(report, "wasxfail")
        _CRITERIA[int(m.group(1))].append((report.nodeid.split("::")[-1], ok))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        results = _CRITERIA[k]
        failed = [name for name, ok in results if not ok]
        line = f"criterion {k}: {'PASS' if not failed else 'FAIL'}"
        if failed:
            line += f" ({', '.join(failed)})"
        tr.write_line(line)
