"""Q-functions, policies, one-step simulators and batched discounted rollouts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .cartpole import DEFAULT_PHYSICS, Action, PhysicsParams, reward_batch, step_batch, terminal_batch
from .dynamics_model import DynamicsModel, encode_inputs
from .seeding import substream


def q_input(s, a: Action) -> np.ndarray:
    """``[x, x_dot, theta, theta_dot, -1 | +1]`` for Left | Right."""
    return encode_inputs(np.asarray(s, dtype=np.float64).reshape(1, 4), np.array([int(a)]))[0]


@dataclass
class QFunction:
    params: nn.MlpParams
    history: nn.TrainHistory | None = field(default=None, compare=False, repr=False)

    def values(self, states: np.ndarray) -> np.ndarray:
        """(N, 2) array of Q values, column 0 for Left and column 1 for Right."""
        states = np.asarray(states, dtype=np.float64).reshape(-1, 4)
        n = len(states)
        x = np.empty((2 * n, 5))
        x[:n, :4] = states
        x[n:, :4] = states
        x[:n, 4] = -1.0
        x[n:, 4] = 1.0
        out = nn.forward(self.params, x)
        return np.column_stack([out[:n], out[n:]])

    def __call__(self, s, a: Action) -> float:
        return float(self.values(s)[0, int(a)])


def greedy_actions(q: QFunction, states: np.ndarray) -> np.ndarray:
    v = q.values(states)
    # strict comparison: ties go to Left
    return (v[:, 1] > v[:, 0]).astype(np.int64)


def greedy_action(q: QFunction, s) -> Action:
    return Action(int(greedy_actions(q, np.asarray(s, dtype=np.float64).reshape(1, 4))[0]))


# Policies. Stochastic policies consume two uniforms per decision:
# the first decides whether to explore, the second picks the random action.

@dataclass
class GreedyQ:
    q: QFunction
    stochastic = False

    def actions(self, states, draws=None):
        return greedy_actions(self.q, states)

    def describe(self) -> str:
        return "greedy"


@dataclass
class EpsilonGreedy:
    q: QFunction
    epsilon: float = 0.05
    stochastic = True

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    def actions(self, states, draws):
        greedy = greedy_actions(self.q, states)
        random_action = (draws[:, 1] >= 0.5).astype(np.int64)
        return np.where(draws[:, 0] < self.epsilon, random_action, greedy)

    def describe(self) -> str:
        return f"eps-greedy(epsilon={self.epsilon!r})"


@dataclass
class PushLeft:
    stochastic = False

    def actions(self, states, draws=None):
        return np.zeros(len(states), dtype=np.int64)

    def describe(self) -> str:
        return "push-left"


@dataclass
class AntiAngle:
    """Push towards the side the pole leans to (Right for theta > 0, else Left)."""
    stochastic = False

    def actions(self, states, draws=None):
        return (np.asarray(states)[:, 2] > 0.0).astype(np.int64)

    def describe(self) -> str:
        return "anti-angle"


Policy = GreedyQ | EpsilonGreedy | PushLeft | AntiAngle


def policy_action(p: Policy, s, rng: np.random.Generator | None = None) -> Action:
    row = np.asarray(s, dtype=np.float64).reshape(1, 4)
    draws = rng.random((1, 2)) if p.stochastic else None
    return Action(int(p.actions(row, draws)[0]))


@dataclass(frozen=True)
class RealDynamics:
    physics: PhysicsParams = DEFAULT_PHYSICS

    def step_batch(self, states, actions):
        return step_batch(states, actions, self.physics)


@dataclass
class LearnedModel:
    """Model-predicted successor, scored with the analytic reward and true bounds."""
    model: DynamicsModel
    physics: PhysicsParams = DEFAULT_PHYSICS

    def step_batch(self, states, actions):
        nxt = self.model.predict_batch(states, actions)
        return nxt, reward_batch(nxt, self.physics), terminal_batch(nxt, self.physics)


Stepper = RealDynamics | LearnedModel


@dataclass(frozen=True)
class RolloutConfig:
    horizon: int = 1000
    gamma: float = 0.99

    def __post_init__(self):
        if self.horizon < 1 or not 0.0 < self.gamma < 1.0:
            raise ValueError(f"invalid rollout configuration: {self}")

    @property
    def truncation_bound(self) -> float:
        """Upper bound on the discounted reward mass cut off at the horizon (rewards <= 1)."""
        return self.gamma**self.horizon / (1.0 - self.gamma)


class _UnitDraws:
    """Per-unit uniform streams, buffered in blocks of decisions."""

    def __init__(self, rngs: list[np.random.Generator], block: int = 64):
        self.rngs = rngs
        self.block = block
        self.buf = np.empty((len(rngs), block, 2))
        self.decision = 0

    def next(self, units: np.ndarray) -> np.ndarray:
        j = self.decision % self.block
        if j == 0:
            for u in units:
                self.buf[u] = self.rngs[u].random((self.block, 2))
        self.decision += 1
        return self.buf[units, j]


@dataclass
class SimulationResult:
    returns: np.ndarray
    steps: np.ndarray
    terminated: np.ndarray


def simulate(states, policy: Policy, stepper: Stepper, horizon: int, gamma: float = 1.0,
             first_actions=None, unit_rngs: list[np.random.Generator] | None = None) -> SimulationResult:
    """Run one trajectory per start state for up to ``horizon`` steps.

    Returns the discounted reward sums (the terminating step's reward is
    included, nothing after it), the number of steps taken and whether the
    trajectory terminated. When ``first_actions`` is given the policy is
    consulted from the second step on. Stochastic policies need one rng per
    start state; unit ``i`` consumes only ``unit_rngs[i]``.
    """
    states = np.array(states, dtype=np.float64).reshape(-1, 4)
    n = len(states)
    draws = None
    if policy.stochastic:
        if unit_rngs is None or len(unit_rngs) != n:
            raise ValueError("a stochastic policy needs one rng per rollout")
        draws = _UnitDraws(unit_rngs)
    returns = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=bool)
    alive = np.arange(n)
    disc = 1.0
    for k in range(horizon):
        cur = states[alive]
        if k == 0 and first_actions is not None:
            acts = np.asarray(first_actions, dtype=np.int64).reshape(-1)
        else:
            acts = policy.actions(cur, draws.next(alive) if draws is not None else None)
        nxt, r, term = stepper.step_batch(cur, acts)
        returns[alive] += disc * r
        steps[alive] += 1
        states[alive] = nxt
        terminated[alive[term]] = True
        alive = alive[~term]
        disc *= gamma
        if alive.size == 0:
            break
    return SimulationResult(returns, steps, terminated)


def rollout_returns(states, first_actions, policy: Policy, stepper: Stepper, cfg: RolloutConfig,
                    unit_rngs=None) -> np.ndarray:
    """Truncated discounted return of taking ``first_actions`` then following ``policy``.

    ``first_actions=None`` lets the policy pick the first action too, which
    gives the policy's own value at each state.
    """
    return simulate(states, policy, stepper, cfg.horizon, cfg.gamma, first_actions, unit_rngs).returns


def rollout_return(s, a: Action | None, pi: Policy, st: Stepper, cfg: RolloutConfig = RolloutConfig(),
                   rng: np.random.Generator | None = None) -> float:
    first = None if a is None else [int(a)]
    return float(rollout_returns(np.asarray(s, dtype=np.float64).reshape(1, 4), first, pi, st, cfg,
                                 [rng] if pi.stochastic else None)[0])


def unit_rngs(seed: int, tag: str, indices) -> list[np.random.Generator]:
    return [substream(seed, tag, int(i)) for i in indices]
