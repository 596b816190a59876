from hypothesis import settings

# first calls into compiled kernels include JIT time
settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# (number, title, passed, detail) recorded by tests/test_acceptance.py
CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
