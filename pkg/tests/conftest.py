"""Shared fixtures: small deterministic corpora and prebuilt indexes."""

import sys

import pytest

from wmir.storage import index_from_records
from wmir.synth import GeneratorConfig, generate


def pytest_terminal_summary(terminalreporter):
    """Echo acceptance verdicts after capture ends so they reach the log."""
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance verdicts", sep="-")
    for line in verdicts:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_corpus():
    """120 exams, every region embedded, full label coupling."""
    return generate(
        GeneratorConfig(n_exams=120, dim=16, seed=9, region_miss_rate=0.0)
    )


@pytest.fixture(scope="session")
def small_index(small_corpus):
    return index_from_records(record for _, record in small_corpus)


@pytest.fixture(scope="session")
def small_snapshot(small_index):
    return small_index.snapshot()
