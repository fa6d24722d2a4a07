import random
import string
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ctxbias.biasing import PatternCorpus, contact  # noqa: E402
from ctxbias.tokenizer import Vocabulary  # noqa: E402

FIG1_PIECES = ["_John", "_Jo", "n", "_K", "aity", "_Katie", "_call", "_please"]

ACCEPTANCE_LINES: list[str] = []


def fig1_vocab_entries():
    entries = [(p, -2.0) for p in FIG1_PIECES]
    have = set(FIG1_PIECES)
    for ch in "_" + string.ascii_letters:
        if ch not in have:
            entries.append((ch, -6.0))
    return entries


@pytest.fixture(scope="session")
def fig1_vocab():
    return Vocabulary(fig1_vocab_entries())


@pytest.fixture(scope="session")
def fig1_contacts():
    return [contact("John", "John", "Jon"), contact("Kaity", "Kaity", "Katie")]


@pytest.fixture
def call_corpus():
    c = PatternCorpus()
    c.add("call @name")
    c.add("call @name please", 2.0)
    return c


@pytest.fixture
def rng():
    return random.Random(1234)


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
