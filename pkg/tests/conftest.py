import pytest

ACCEPTANCE_KEY = pytest.StashKey[dict]()
CRITERIA = {
    1: "gradient integrity",
    2: "transform identities",
    3: "anchor loss endpoints",
    4: "unbiased vs biased at alpha=0",
    5: "content-loss growth with style weight",
    6: "anchored alpha curves",
    7: "regression-function contract",
    8: "determinism",
    9: "formats",
}


@pytest.fixture(scope="session")
def acceptance(request):
    """Record a criterion's outcome for the summary, then assert it."""
    results = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number: int, ok: bool, detail: str) -> None:
        results[number] = (bool(ok), detail)
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, None)
    if results is None:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERIA.items():
        ok, detail = results.get(number, (False, "not run"))
        terminalreporter.write_line(f"criterion {number} ({name}): {'PASS' if ok else 'FAIL'} | {detail}")
