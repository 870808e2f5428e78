from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from hiervc.numerics import precision

FIXTURES = Path(__file__).parent / "fixtures"
MODELS = FIXTURES / "models"
GOLDEN = FIXTURES / "golden"


@pytest.fixture
def f64():
    """Run the test body in 64-bit engine mode."""
    with precision(64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def trained_checkpoint(name: str) -> Path:
    """Path of a trained fixture model, training it from its recipe when absent (slow)."""
    path = MODELS / f"{name}.hvck"
    if not path.exists():
        from hiervc.harness.experiments import run_recipe

        recipe = name.split(".")[0]
        run_recipe(recipe, MODELS)
    return path


def load_trained(name: str):
    from hiervc.numerics.checkpoint import load_model

    return load_model(trained_checkpoint(name))


@pytest.fixture(scope="session")
def main_model():
    return load_trained("lambda1024")


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict(request):
    """Record a criterion verdict; the line is printed inline and again in the terminal summary."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
