import sys

import numpy as np
import pytest
import torch

from tgcn.kgdata import add_reciprocals, from_labeled


@pytest.fixture
def toy_triples():
    return [
        ("a", "likes", "b"),
        ("b", "likes", "c"),
        ("c", "knows", "a"),
        ("a", "knows", "d"),
        ("d", "likes", "e"),
        ("e", "knows", "f"),
        ("b", "knows", "f"),
    ]


@pytest.fixture
def toy_kg(toy_triples):
    return from_labeled(toy_triples[:5], toy_triples[5:6], toy_triples[6:], name="toy")


@pytest.fixture
def toy_aug(toy_kg):
    return add_reciprocals(toy_kg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    rows = getattr(mod, "RESULTS", None)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in rows:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
