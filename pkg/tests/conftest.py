from hypothesis import settings

# the first call of a jitted kernel includes compilation, so wall-clock deadlines are meaningless
settings.register_profile("casrel", deadline=None, derandomize=True)
settings.load_profile("casrel")

_CRITERIA = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    n = props["criterion"]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        prev = _CRITERIA.get(n)
        # several tests may back one criterion; any failure fails it
        if prev is None or outcome == "FAIL" or prev[0] == "SKIP":
            _CRITERIA[n] = (outcome, props.get("detail", ""))
        elif props.get("detail"):
            _CRITERIA[n] = (prev[0], "; ".join(x for x in (prev[1], props["detail"]) if x))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcome, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {outcome}" + (f"  ({detail})" if detail else ""))
