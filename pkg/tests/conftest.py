"""Shared pytest hooks.

The acceptance tests each cover one release criterion; after the run a
summary table prints one PASS/FAIL line per criterion so the verdicts
are readable without digging through the full test listing.
"""


def _criterion_label(nodeid: str) -> str:
    name = nodeid.split("::")[-1]
    if name.startswith("test_"):
        name = name[len("test_") :]
    return name.replace("_", " ")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results: dict[str, str] = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            label = _criterion_label(nodeid)
            if verdict == "FAIL" or label not in results:
                results[label] = verdict
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, verdict in results.items():
        terminalreporter.write_line(f"{verdict}  {label}")
