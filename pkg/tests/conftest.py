import os

# keep numba away from the outdated TBB layer in test subprocesses too
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
