"""Offline transition datasets: random-policy generation, splitting and CSV persistence."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .cartpole import DEFAULT_PHYSICS, Action, PhysicsParams, State, reset, step

EPISODE_CAP = 500

COLUMNS = (
    "x", "x_dot", "theta", "theta_dot", "action",
    "next_x", "next_x_dot", "next_theta", "next_theta_dot", "reward", "terminal",
)


class DatasetParseError(ValueError):
    pass


class Transition(NamedTuple):
    s: State
    a: Action
    s_next: State
    r: float
    terminal: bool


@dataclass(eq=False)
class Dataset:
    """Column-oriented store of transitions ``(s, a, s_next, r, terminal)``."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    generation_seed: int | None = None
    physics: PhysicsParams = field(default=DEFAULT_PHYSICS)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64).reshape(-1, 4)
        self.actions = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        self.next_states = np.asarray(self.next_states, dtype=np.float64).reshape(-1, 4)
        self.rewards = np.asarray(self.rewards, dtype=np.float64).reshape(-1)
        self.terminals = np.asarray(self.terminals, dtype=bool).reshape(-1)
        n = len(self.states)
        if not all(len(a) == n for a in (self.actions, self.next_states, self.rewards, self.terminals)):
            raise ValueError("dataset columns have inconsistent lengths")

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i: int) -> Transition:
        return Transition(
            State(*map(float, self.states[i])),
            Action(int(self.actions[i])),
            State(*map(float, self.next_states[i])),
            float(self.rewards[i]),
            bool(self.terminals[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.generation_seed == other.generation_seed
            and self.physics == other.physics
            and all(
                np.array_equal(a, b)
                for a, b in zip(self._columns(), other._columns())
            )
        )

    def _columns(self):
        return (self.states, self.actions, self.next_states, self.rewards, self.terminals)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.states[idx], self.actions[idx], self.next_states[idx],
            self.rewards[idx], self.terminals[idx],
            generation_seed=self.generation_seed, physics=self.physics,
        )

    def sha256(self) -> str:
        h = hashlib.sha256()
        for col in self._columns():
            h.update(np.ascontiguousarray(col).tobytes())
        return h.hexdigest()


def generate(n: int, p: PhysicsParams = DEFAULT_PHYSICS, seed: int = 0) -> Dataset:
    """Roll out a uniformly random policy until ``n`` transitions are collected.

    Episodes restart on termination and after ``EPISODE_CAP`` steps (the
    latter without marking the transition terminal).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    states = np.empty((n, 4))
    next_states = np.empty((n, 4))
    actions = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    terminals = np.empty(n, dtype=bool)

    s = reset(rng)
    ep_len = 0
    for i in range(n):
        a = Action(int(rng.integers(2)))
        res = step(s, a, p)
        states[i] = s
        actions[i] = a
        next_states[i] = res.next_state
        rewards[i] = res.reward
        terminals[i] = res.terminal
        ep_len += 1
        if res.terminal or ep_len >= EPISODE_CAP:
            s = reset(rng)
            ep_len = 0
        else:
            s = res.next_state
    return Dataset(states, actions, next_states, rewards, terminals, generation_seed=seed, physics=p)


def split_indices(n: int, train_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    if n < 2:
        raise ValueError(f"cannot split a dataset of size {n}")
    perm = rng.permutation(n)
    n_train = int(np.floor(train_fraction * n))
    return perm[:n_train], perm[n_train:]


def split(d: Dataset, train_fraction: float = 0.7, rng: np.random.Generator | None = None) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng(0) if rng is None else rng
    train_idx, val_idx = split_indices(len(d), train_fraction, rng)
    return d.subset(train_idx), d.subset(val_idx)


def _fmt(v: float) -> str:
    return repr(float(v))


def save(d: Dataset, path) -> None:
    lines = []
    if d.generation_seed is not None:
        lines.append(f"# generation_seed={d.generation_seed}")
    lines.append("# physics=" + ";".join(f"{k}={_fmt(v)}" for k, v in dataclasses.asdict(d.physics).items()))
    lines.append(",".join(COLUMNS))
    for i in range(len(d)):
        row = [*map(_fmt, d.states[i]), str(int(d.actions[i])), *map(_fmt, d.next_states[i]),
               _fmt(d.rewards[i]), str(int(d.terminals[i]))]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load(path) -> Dataset:
    text = Path(path).read_text()
    seed = None
    physics = DEFAULT_PHYSICS
    header_seen = False
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "generation_seed":
                seed = int(value)
            elif key == "physics":
                kv = dict(item.split("=") for item in value.split(";"))
                physics = PhysicsParams(**{k: float(v) for k, v in kv.items()})
            continue
        if not header_seen:
            if tuple(c.strip() for c in line.split(",")) != COLUMNS:
                raise DatasetParseError(f"line {lineno}: unexpected header {line!r}")
            header_seen = True
            continue
        fields = line.split(",")
        if len(fields) != len(COLUMNS):
            raise DatasetParseError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(fields)}")
        row = []
        for col, (name, raw) in enumerate(zip(COLUMNS, fields), start=1):
            try:
                row.append(int(raw) if name in ("action", "terminal") else float(raw))
            except ValueError:
                raise DatasetParseError(
                    f"line {lineno}, column {col} ({name}): cannot parse {raw!r}"
                ) from None
        if row[4] not in (0, 1) or row[10] not in (0, 1):
            raise DatasetParseError(f"line {lineno}: action and terminal must be 0 or 1")
        rows.append(row)
    if not header_seen:
        raise DatasetParseError("missing header line")
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(COLUMNS))
    return Dataset(
        arr[:, 0:4], arr[:, 4].astype(np.int64), arr[:, 5:9], arr[:, 9], arr[:, 10].astype(bool),
        generation_seed=seed, physics=physics,
    )
