import numpy as np
import pytest

from neuralhash.data import mnist_available
from neuralhash.nn import init_model

requires_mnist = pytest.mark.skipif(
    not mnist_available(), reason="MNIST IDX files not found under $NEURALHASH_DATA"
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model():
    model = init_model((6, 8, 5, 3), seed=3)
    # nonzero biases so regions are not all cones at the origin
    gen = np.random.default_rng(9)
    model.biases = [gen.normal(0, 0.3, b.shape) for b in model.biases]
    return model


def random_model(gen, max_depth=3, max_width=50, d_x=None, bn=False):
    depth = int(gen.integers(1, max_depth + 1))
    d_x = int(gen.integers(2, 12)) if d_x is None else d_x
    widths = [int(w) for w in gen.integers(2, max_width + 1, size=depth)]
    model = init_model((d_x, *widths, int(gen.integers(2, 6))), seed=int(gen.integers(1 << 30)))
    model.biases = [gen.normal(0, 0.2, b.shape) for b in model.biases]
    if bn:
        model.enable_batch_norm()
        for p in model.bn:
            p.gamma = gen.uniform(0.5, 1.5, p.gamma.shape)
            p.beta = gen.normal(0, 0.1, p.beta.shape)
            p.running_mean = gen.normal(0, 0.1, p.running_mean.shape)
            p.running_var = gen.uniform(0.5, 2.0, p.running_var.shape)
    return model


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
