"""Policy evaluation on episodes started from the reset distribution."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .cartpole import DEFAULT_PHYSICS, PhysicsParams, reset
from .seeding import substream


@dataclass(frozen=True)
class EvalReport:
    avg_return: float
    success_rate: float
    successful: bool
    n_episodes: int
    max_steps: int
    mean_steps: float = 0.0


def evaluate_policy(policy, n_episodes: int = 1000, max_steps: int = 5000,
                    physics: PhysicsParams = DEFAULT_PHYSICS, seed: int = 0, stepper=None) -> EvalReport:
    """Undiscounted episode returns; an episode succeeds if it survives ``max_steps`` steps.

    Episode ``e`` starts from ``reset(substream(seed, "episode", e))``, so two
    policies evaluated with the same seed see the same start states.
    """
    from .rollout import RealDynamics, simulate, unit_rngs

    if n_episodes < 1 or max_steps < 1:
        raise ValueError("n_episodes and max_steps must be >= 1")
    stepper = RealDynamics(physics) if stepper is None else stepper
    starts = np.array([reset(substream(seed, "episode", e)) for e in range(n_episodes)])
    rngs = unit_rngs(seed, "policy", range(n_episodes)) if policy.stochastic else None
    sim = simulate(starts, policy, stepper, max_steps, 1.0, None, rngs)
    survived = ~sim.terminated & (sim.steps == max_steps)
    success_rate = float(np.mean(survived))
    return EvalReport(
        avg_return=float(np.mean(sim.returns)),
        success_rate=success_rate,
        successful=success_rate == 1.0,
        n_episodes=n_episodes,
        max_steps=max_steps,
        mean_steps=float(np.mean(sim.steps)),
    )


def write_report(report: EvalReport, path) -> None:
    lines = [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in asdict(report).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> EvalReport:
    kv = dict(line.split("=", 1) for line in Path(path).read_text().splitlines() if line.strip())
    return EvalReport(
        avg_return=float(kv["avg_return"]),
        success_rate=float(kv["success_rate"]),
        successful=kv["successful"] == "True",
        n_episodes=int(kv["n_episodes"]),
        max_steps=int(kv["max_steps"]),
        mean_steps=float(kv.get("mean_steps", 0.0)),
    )
