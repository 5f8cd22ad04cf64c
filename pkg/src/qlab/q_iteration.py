"""Target computation (bootstrapped and rollout-based), Q fitting and the outer iteration loop."""
from __future__ import annotations

import dataclasses
import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .dataset import Dataset, split_indices
from .dynamics_model import DynamicsModel, encode_inputs, save_model, train_model
from .evaluation import EvalReport, evaluate_policy, write_report
from .rollout import GreedyQ, LearnedModel, Policy, QFunction, RealDynamics, RolloutConfig, Stepper, \
    rollout_returns, unit_rngs
from .seeding import derive_seed, substream

MIN_TARGETS = 10
CHUNK = 4096


class Variant(str, enum.Enum):
    NFQ = "nfq"
    BSF_LEARNED = "bsf"
    BSF_REAL = "bsf-real"


@dataclass(eq=False)
class TargetSet:
    inputs: np.ndarray
    targets: np.ndarray
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64).reshape(-1, 5)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets differ in length")

    def __len__(self) -> int:
        return len(self.targets)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TargetSet):
            return NotImplemented
        return (self.provenance == other.provenance and np.array_equal(self.inputs, other.inputs)
                and np.array_equal(self.targets, other.targets))


def nfq_targets(q_i: QFunction, d: Dataset, gamma: float = 0.99) -> TargetSet:
    """``r + gamma * max_a Q_i(s', a)``; terminal transitions keep ``r`` alone."""
    if len(d) == 0:
        raise ValueError("empty dataset")
    best_next = q_i.values(d.next_states).max(axis=1)
    targets = np.where(d.terminals, d.rewards, d.rewards + gamma * best_next)
    return TargetSet(encode_inputs(d.states, d.actions), targets, {"regime": Variant.NFQ.value})


def bsf_targets(pi: Policy, d: Dataset, st: Stepper, cfg: RolloutConfig = RolloutConfig(),
                seed: int = 0, workers: int = 1) -> TargetSet:
    """``r + gamma * V_pi(s')`` with ``V_pi`` a truncated rollout of ``pi`` through ``st``.

    Rollouts are independent per transition (stochastic policies get the
    stream ``(seed, "rollout", index)``), so the result does not depend on
    ``workers``.
    """
    if len(d) == 0:
        raise ValueError("empty dataset")
    todo = np.flatnonzero(~d.terminals)
    values = np.zeros(len(d))

    def run(idx):
        rngs = unit_rngs(seed, "rollout", idx) if pi.stochastic else None
        return idx, rollout_returns(d.next_states[idx], None, pi, st, cfg, rngs)

    chunks = [todo[i:i + CHUNK] for i in range(0, len(todo), CHUNK)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    for idx, v in results:
        values[idx] = v
    targets = np.where(d.terminals, d.rewards, d.rewards + cfg.gamma * values)
    regime = Variant.BSF_LEARNED if isinstance(st, LearnedModel) else Variant.BSF_REAL
    return TargetSet(encode_inputs(d.states, d.actions), targets,
                     {"regime": regime.value, "policy": pi.describe(),
                      "horizon": str(cfg.horizon), "gamma": repr(cfg.gamma)})


def fit_q(t: TargetSet, cfg: nn.TrainConfig) -> QFunction:
    """Fit a freshly initialised net on a shuffled 70/30 split; ``cfg.seed`` drives everything."""
    if len(t) < MIN_TARGETS:
        raise ValueError(f"need at least {MIN_TARGETS} targets, got {len(t)}")
    train_idx, val_idx = split_indices(len(t), 0.7, substream(cfg.seed, "split"))
    best, history = nn.train(
        nn.RegressionSet(t.inputs[train_idx], t.targets[train_idx]),
        nn.RegressionSet(t.inputs[val_idx], t.targets[val_idx]),
        cfg,
    )
    return QFunction(best, history)


TARGET_COLUMNS = ("x", "x_dot", "theta", "theta_dot", "action", "target")


def save_targets(t: TargetSet, path) -> None:
    lines = [f"# {k}={v}" for k, v in t.provenance.items()]
    lines.append(",".join(TARGET_COLUMNS))
    for row, y in zip(t.inputs, t.targets):
        lines.append(",".join(repr(float(v)) for v in (*row, y)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_targets(path) -> TargetSet:
    provenance: dict[str, str] = {}
    rows = []
    header_seen = False
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            provenance[k] = v
            continue
        if not header_seen:
            if tuple(line.split(",")) != TARGET_COLUMNS:
                raise ValueError(f"line {lineno}: unexpected header {line!r}")
            header_seen = True
            continue
        fields = line.split(",")
        if len(fields) != len(TARGET_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(TARGET_COLUMNS)} fields, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            col = next(i for i, v in enumerate(fields, start=1) if not _is_float(v))
            raise ValueError(f"line {lineno}, column {col}: cannot parse {fields[col - 1]!r}") from None
    arr = np.array(rows, dtype=np.float64).reshape(-1, 6)
    return TargetSet(arr[:, :5], arr[:, 5], provenance)


def _is_float(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class RunConfig:
    train: nn.TrainConfig = nn.TrainConfig()
    rollout: RolloutConfig = RolloutConfig()
    model_train: nn.TrainConfig = nn.TrainConfig()
    eval_episodes: int = 1000
    eval_steps: int = 5000


@dataclass
class IterationRecord:
    iteration: int
    targets: TargetSet
    q: QFunction
    report: EvalReport


@dataclass
class IterationHistory:
    variant: Variant
    seed: int
    records: list[IterationRecord] = field(default_factory=list)
    model: DynamicsModel | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> IterationRecord:
        return self.records[i]


def run_iterations(variant: Variant | str, n_iters: int, d: Dataset, cfg: RunConfig = RunConfig(),
                   seed: int = 0, out_dir=None, workers: int = 1, log=None,
                   until=None) -> IterationHistory:
    """Outer fitted-Q loop.

    Iteration ``i`` builds targets from ``Q_i`` (``Q_0`` is a random net),
    fits ``Q_{i+1}`` from scratch and evaluates its greedy policy on the real
    dynamics. With ``out_dir`` every iteration is persisted to
    ``iter_NNN/{targets.csv, q_params.csv, report.txt}``. ``until(history)``
    returning true ends the loop early.
    """
    variant = Variant(variant)
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    out = Path(out_dir) if out_dir is not None else None
    physics = d.physics
    history = IterationHistory(variant, seed)

    stepper: Stepper = RealDynamics(physics)
    if variant is Variant.BSF_LEARNED:
        model_cfg = dataclasses.replace(cfg.model_train, seed=derive_seed(seed, "model"))
        history.model, _ = train_model(d, model_cfg)
        stepper = LearnedModel(history.model, physics)
        if out is not None:
            save_model(history.model, out / "dynamics_model")

    q = QFunction(nn.init(substream(seed, "q0")))
    eval_seed = derive_seed(seed, "eval")
    for i in range(n_iters):
        if variant is Variant.NFQ:
            targets = nfq_targets(q, d, cfg.rollout.gamma)
        else:
            targets = bsf_targets(GreedyQ(q), d, stepper, cfg.rollout, derive_seed(seed, "rollout", i), workers)
        targets.provenance["iteration"] = str(i)
        q = fit_q(targets, dataclasses.replace(cfg.train, seed=derive_seed(seed, "fit", i)))
        report = evaluate_policy(GreedyQ(q), cfg.eval_episodes, cfg.eval_steps, physics, eval_seed)
        history.records.append(IterationRecord(i, targets, q, report))
        if out is not None:
            it_dir = out / f"iter_{i:03d}"
            it_dir.mkdir(parents=True, exist_ok=True)
            save_targets(targets, it_dir / "targets.csv")
            nn.save_params(q.params, it_dir / "q_params.csv")
            write_report(report, it_dir / "report.txt")
        if log is not None:
            log(f"iteration {i}: avg_return={report.avg_return:.2f} "
                f"success_rate={report.success_rate:.3f} successful={report.successful}")
        if until is not None and until(history):
            break
    return history
