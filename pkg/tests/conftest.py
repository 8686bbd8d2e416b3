import sys
from pathlib import Path

import pytest

from prenv.argument import construct_arguments
from prenv.network import compile_network
from prenv.schema_kb import activate_backward, activate_forward, load_kb

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"

sys.path.insert(0, str(HERE))


def fixture_kb(name):
    return load_kb(FIXTURES / f"{name}.kb")


def frames_backward(kb, claim):
    return [f for a in activate_backward(kb, claim) for f in construct_arguments(a, kb)]


def frames_forward(kb, grounds):
    return [f for a in activate_forward(kb, grounds) for f in construct_arguments(a, kb)]


def check_golden(name: str, text: str) -> None:
    """Compare ``text`` with tests/golden/<name>; set PRENV_REGOLD=1 to rewrite."""
    import os

    path = GOLDEN / name
    if os.environ.get("PRENV_REGOLD"):
        path.write_text(text)
    assert path.exists(), f"missing golden file {path}"
    assert text == path.read_text()


@pytest.fixture
def necklace_kb():
    return fixture_kb("necklace")


@pytest.fixture
def tweety_kb():
    return fixture_kb("tweety")


@pytest.fixture
def coin_kb():
    return fixture_kb("coin")


@pytest.fixture
def necklace_net(necklace_kb):
    frames = frames_backward(necklace_kb, "necklace-missing")
    return compile_network(frames, necklace_kb)


@pytest.fixture
def coin_model(coin_kb):
    frames = frames_forward(coin_kb, {"coin-weighted"})
    return frames, compile_network(frames, coin_kb)


TOSSES = [f"toss-{i:02d}" for i in range(1, 11)]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(mod.RESULTS.items()):
        terminalreporter.write_line(line)
