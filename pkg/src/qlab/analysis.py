"""Seed-variance retraining and pole-angle slices of rollout-evaluated values."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .cartpole import DEFAULT_PHYSICS, PhysicsParams
from .evaluation import EvalReport, evaluate_policy
from .q_iteration import TargetSet, fit_q
from .rollout import GreedyQ, Policy, RolloutConfig, Stepper, rollout_returns, unit_rngs
from .seeding import derive_seed

DEFAULT_JUMP_THRESHOLD = 1.0


@dataclass
class SeedStudy:
    seeds: list[int]
    reports: list[EvalReport]

    @property
    def returns(self) -> np.ndarray:
        return np.array([r.avg_return for r in self.reports])

    def summary(self) -> dict[str, float]:
        """Min, quartiles and max of the per-seed average returns (order statistics)."""
        r = self.returns
        q1, med, q3 = np.quantile(r, [0.25, 0.5, 0.75], method="inverted_cdf")
        return {"min": float(r.min()), "q1": float(q1), "median": float(med),
                "q3": float(q3), "max": float(r.max())}

    @property
    def spread(self) -> float:
        r = self.returns
        return float(r.max() - r.min())


def seed_variance_study(t: TargetSet, n_seeds: int | None = None, train_cfg: nn.TrainConfig = nn.TrainConfig(),
                        n_episodes: int = 1000, max_steps: int = 5000,
                        physics: PhysicsParams = DEFAULT_PHYSICS, eval_seed: int = 0,
                        seeds=None, log=None) -> SeedStudy:
    """Refit the same targets once per seed and evaluate each greedy policy.

    The seed drives both the network initialisation and the train/validation
    shuffle; all policies are evaluated on the same start states.
    """
    if seeds is None:
        if n_seeds is None:
            raise ValueError("give n_seeds or an explicit seed list")
        seeds = [derive_seed(train_cfg.seed, "study", k) for k in range(n_seeds)]
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ValueError("a seed study needs at least two seeds")
    reports = []
    for k, s in enumerate(seeds):
        q = fit_q(t, dataclasses.replace(train_cfg, seed=s))
        reports.append(evaluate_policy(GreedyQ(q), n_episodes, max_steps, physics, eval_seed))
        if log is not None:
            log(f"seed {k} ({s}): avg_return={reports[-1].avg_return:.2f} success_rate={reports[-1].success_rate:.3f}")
    return SeedStudy(seeds, reports)


@dataclass
class DiscontinuityMetrics:
    max_adjacent_jump: float
    jump_threshold: float
    n_jumps: int
    refinement_ratio: float | None = None
    abs_diffs: np.ndarray = field(default=None, repr=False, compare=False)

    def jump_count(self, tau: float) -> int:
        return int(np.count_nonzero(self.abs_diffs > tau))


def discontinuity_metrics(values, refined=None, jump_threshold: float = DEFAULT_JUMP_THRESHOLD) -> DiscontinuityMetrics:
    """Adjacent-difference statistics of a gridded slice.

    ``refinement_ratio`` compares the largest jump on a finer grid of the same
    range with the base grid: about 1/refinement for smooth functions, near 1
    where genuine jumps persist. A base grid with no jumps gives 0 when the
    refined grid has none either.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two values")
    diffs = np.abs(np.diff(v))
    max_jump = float(diffs.max())
    ratio = None
    if refined is not None:
        r = np.asarray(refined, dtype=np.float64)
        if r.size < 2:
            raise ValueError("refined slice needs at least two values")
        refined_max = float(np.abs(np.diff(r)).max())
        if max_jump > 0:
            ratio = refined_max / max_jump
        else:
            ratio = 0.0 if refined_max == 0 else float("inf")
    return DiscontinuityMetrics(max_jump, jump_threshold, int(np.count_nonzero(diffs > jump_threshold)), ratio, diffs)


@dataclass(frozen=True)
class SliceSpec:
    n_points: int = 10_000
    theta_limit: float = 0.2095 * (1 - 1e-9)

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("a slice needs at least two grid points")
        if not 0 < self.theta_limit <= 0.2095:
            raise ValueError("slice range must stay inside the termination bounds")

    def grid(self) -> np.ndarray:
        return np.linspace(-self.theta_limit, self.theta_limit, self.n_points)

    def refined(self, factor: int) -> "SliceSpec":
        return SliceSpec(factor * (self.n_points - 1) + 1, self.theta_limit)


@dataclass
class SliceResult:
    thetas: np.ndarray
    values: np.ndarray
    policy: str
    metrics: DiscontinuityMetrics
    values_left: np.ndarray | None = None
    values_right: np.ndarray | None = None
    refined_thetas: np.ndarray | None = field(default=None, repr=False)
    refined_values: np.ndarray | None = field(default=None, repr=False)


SLICE_CHUNK = 8192


def slice_values(p: Policy, thetas: np.ndarray, st: Stepper, cfg: RolloutConfig, seed: int = 0,
                 first_action: int | None = None, repeats: int = 1) -> np.ndarray:
    """Rollout value at each state ``(0, 0, theta, 0)``.

    With ``first_action=None`` this is the policy's own value. Stochastic
    policies average ``repeats`` sampled rollouts, each drawn from a stream
    keyed by (seed, grid size, point, repeat).
    """
    n = len(thetas)
    states = np.zeros((n, 4))
    states[:, 2] = thetas
    out = np.zeros(n)
    reps = repeats if p.stochastic else 1
    for r in range(reps):
        for start in range(0, n, SLICE_CHUNK):
            idx = np.arange(start, min(n, start + SLICE_CHUNK))
            rngs = unit_rngs(seed, f"slice-{n}-{r}", idx) if p.stochastic else None
            first = None if first_action is None else np.full(len(idx), first_action)
            out[idx] += rollout_returns(states[idx], first, p, st, cfg, rngs)
    return out / reps


def q_slice(p: Policy, spec: SliceSpec, st: Stepper, cfg: RolloutConfig = RolloutConfig(), seed: int = 0,
            refine: int | None = 10, per_action: bool = False, repeats: int = 1,
            jump_threshold: float = DEFAULT_JUMP_THRESHOLD) -> SliceResult:
    thetas = spec.grid()
    values = slice_values(p, thetas, st, cfg, seed, None, repeats)
    refined_thetas = refined_values = None
    if refine is not None and refine > 1:
        refined_thetas = spec.refined(refine).grid()
        refined_values = slice_values(p, refined_thetas, st, cfg, seed, None, repeats)
    left = right = None
    if per_action:
        left = slice_values(p, thetas, st, cfg, seed, 0, repeats)
        right = slice_values(p, thetas, st, cfg, seed, 1, repeats)
    metrics = discontinuity_metrics(values, refined_values, jump_threshold)
    return SliceResult(thetas, values, p.describe(), metrics, left, right, refined_thetas, refined_values)
