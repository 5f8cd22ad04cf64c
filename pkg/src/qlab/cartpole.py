"""Deterministic cart-pole physics (CartPole-v1 reference model) with a shaped reward."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class InvalidStateError(ValueError):
    pass


class Action(enum.IntEnum):
    LEFT = 0
    RIGHT = 1

    def flip(self) -> "Action":
        return Action(1 - int(self))


class State(NamedTuple):
    x: float
    x_dot: float
    theta: float
    theta_dot: float


@dataclass(frozen=True)
class PhysicsParams:
    gravity: float = 9.8
    mass_cart: float = 1.0
    mass_pole: float = 0.1
    pole_half_length: float = 0.5
    force_mag: float = 10.0
    tau: float = 0.02
    x_bound: float = 2.4
    theta_bound: float = 0.2095

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")


class StepResult(NamedTuple):
    next_state: State
    reward: float
    terminal: bool


DEFAULT_PHYSICS = PhysicsParams()


def step_batch(states: np.ndarray, actions: np.ndarray, p: PhysicsParams = DEFAULT_PHYSICS):
    """Advance an (N, 4) batch of states by one Euler step.

    ``actions`` holds 0/1 codes. Returns ``(next_states, rewards, terminals)``.
    Rows are computed independently with elementwise operations only, so the
    result for a row does not depend on the batch it was computed in.
    """
    states = np.asarray(states, dtype=np.float64)
    x, x_dot, theta, theta_dot = states[:, 0], states[:, 1], states[:, 2], states[:, 3]
    force = np.where(np.asarray(actions) == 1, p.force_mag, -p.force_mag)

    total_mass = p.mass_cart + p.mass_pole
    polemass_length = p.mass_pole * p.pole_half_length
    costheta = np.cos(theta)
    sintheta = np.sin(theta)

    temp = (force + polemass_length * theta_dot**2 * sintheta) / total_mass
    thetaacc = (p.gravity * sintheta - costheta * temp) / (
        p.pole_half_length * (4.0 / 3.0 - p.mass_pole * costheta**2 / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * costheta / total_mass

    nxt = np.empty_like(states)
    nxt[:, 0] = x + p.tau * x_dot
    nxt[:, 1] = x_dot + p.tau * xacc
    nxt[:, 2] = theta + p.tau * theta_dot
    nxt[:, 3] = theta_dot + p.tau * thetaacc
    return nxt, reward_batch(nxt, p), terminal_batch(nxt, p)


def reward_batch(states: np.ndarray, p: PhysicsParams = DEFAULT_PHYSICS) -> np.ndarray:
    x_term = (states[:, 0] / p.x_bound) ** 2
    theta_term = (states[:, 2] / p.theta_bound) ** 2
    return (1.0 - x_term + 1.0 - theta_term) / 2.0


def terminal_batch(states: np.ndarray, p: PhysicsParams = DEFAULT_PHYSICS) -> np.ndarray:
    return (np.abs(states[:, 0]) > p.x_bound) | (np.abs(states[:, 2]) > p.theta_bound)


def _as_row(s) -> np.ndarray:
    row = np.asarray(s, dtype=np.float64).reshape(1, 4)
    if not np.all(np.isfinite(row)):
        raise InvalidStateError(f"state must be finite, got {tuple(row[0])}")
    return row


def step(s, a: Action, p: PhysicsParams = DEFAULT_PHYSICS) -> StepResult:
    nxt, r, done = step_batch(_as_row(s), np.array([int(a)]), p)
    return StepResult(State(*map(float, nxt[0])), float(r[0]), bool(done[0]))


def reward(next_s, p: PhysicsParams = DEFAULT_PHYSICS) -> float:
    """Shaped reward: 1 at the centre/upright, falling quadratically to 0 at the bounds."""
    return float(reward_batch(_as_row(next_s), p)[0])


def is_terminal(s, p: PhysicsParams = DEFAULT_PHYSICS) -> bool:
    return bool(terminal_batch(_as_row(s), p)[0])


RESET_HALF_WIDTH = 0.05


def reset(rng: np.random.Generator) -> State:
    return State(*map(float, rng.uniform(-RESET_HALF_WIDTH, RESET_HALF_WIDTH, size=4)))
