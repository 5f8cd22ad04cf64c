import numpy as np
import pytest

from qlab import nn
from qlab.rollout import QFunction


class ConstantStepper:
    """Never terminates; state is frozen and every step pays ``value``."""

    def __init__(self, value=1.0):
        self.value = value

    def step_batch(self, states, actions):
        n = len(states)
        return np.array(states, dtype=float), np.full(n, self.value), np.zeros(n, dtype=bool)


class TerminalStepper:
    def __init__(self, value):
        self.value = value

    def step_batch(self, states, actions):
        n = len(states)
        return np.array(states, dtype=float), np.full(n, self.value), np.ones(n, dtype=bool)


class FrozenStateStepper:
    """State frozen, reward depends smoothly on it."""

    def step_batch(self, states, actions):
        s = np.array(states, dtype=float)
        return s, 1.0 - 0.5 * (s[:, 2] / 0.2095) ** 2, np.zeros(len(s), dtype=bool)


def q_from_values(left, right):
    """A Q-function with the given constant values for Left and Right."""
    w1 = np.zeros((64, 5))
    w2 = np.zeros((1, 64))
    lo = min(left, right)
    # unit 0 fires for Left (input -1), unit 1 for Right (input +1)
    w1[0, 4], w2[0, 0] = -1.0, left - lo
    w1[1, 4], w2[0, 1] = 1.0, right - lo
    return QFunction(nn.MlpParams.from_parts(w1, np.zeros(64), w2, [lo]))


@pytest.fixture
def random_q():
    return QFunction(nn.init(np.random.default_rng(42)))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
