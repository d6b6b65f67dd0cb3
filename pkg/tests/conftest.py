"""Shared pytest hooks: the acceptance suite registers one result per
criterion here so the run summary always lists them explicitly."""

ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def record_criterion(number: int, description: str, passed: bool,
                     detail: str = "") -> None:
    ACCEPTANCE_RESULTS[number] = (description, passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        description, passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number} [{status}] {description}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)
