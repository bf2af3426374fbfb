"""Prints one PASS/FAIL line per acceptance criterion after the run."""
import re

CRITERIA = {
    1: "gradient suite",
    2: "grouping equivalence",
    3: "cost-ratio exactness",
    4: "scaling exponents",
    5: "receptive field",
    6: "mask semantics",
    7: "last-shot compression",
    8: "end-to-end learning",
    9: "determinism",
    10: "default-config profile (informational)",
}
_PATTERN = re.compile(r"test_criterion_(\d+)")
_results: dict[int, list] = {}


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    entry = _results.setdefault(int(m.group(1)), [])
    entry.append((report.passed, dict(report.user_properties)))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k, name in CRITERIA.items():
        runs = _results.get(k)
        if runs is None:
            continue
        status = "PASS" if all(ok for ok, _ in runs) else "FAIL"
        details = ", ".join(f"{key}={val}" for _, props in runs for key, val in props.items())
        terminalreporter.write_line(f"{status}  {k:>2}. {name}" + (f"  [{details}]" if details else ""))
