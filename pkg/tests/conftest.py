"""Shared pytest hooks.

Prints one ``ACCEPTANCE <label>: PASS|FAIL`` line per release criterion at
the end of the run, derived from the ``test_criterion_*`` outcomes.
"""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"),
                             ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            name = report.nodeid.rsplit("::", 1)[-1]
            if name.startswith("test_criterion_"):
                label = name[len("test_criterion_"):].replace("_", " ")
                verdicts[label] = verdict
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for label in sorted(verdicts):
            terminalreporter.write_line(f"ACCEPTANCE {label}: {verdicts[label]}")
