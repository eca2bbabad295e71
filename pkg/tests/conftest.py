import numpy as np
import pytest

from uqeval.demo import DemoPreset, evaluate_demo

DEMO_SEED = 7


@pytest.fixture(scope="session")
def demo_run():
    """One full default-preset demo evaluation shared across the session."""
    result, comparison = evaluate_demo(DEMO_SEED, DemoPreset())
    return result, comparison


def random_prob_rows(rng: np.random.Generator, n_rows: int, n_classes: int) -> np.ndarray:
    """Exactly normalized random probability rows (Dirichlet-flat)."""
    raw = rng.dirichlet(np.ones(n_classes), size=n_rows)
    return raw / raw.sum(axis=1, keepdims=True)
