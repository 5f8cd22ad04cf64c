"""Learned transition model: one 5-64-1 net per state component predicting the state delta."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .dataset import Dataset, split_indices
from .seeding import derive_seed, substream

STD_FLOOR = 1e-8
MIN_DATASET = 100


def encode_inputs(states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Stack states with the +/-1 action code into (N, 5) network inputs."""
    x = np.empty((len(states), 5))
    x[:, :4] = states
    x[:, 4] = np.where(np.asarray(actions) == 1, 1.0, -1.0)
    return x


@dataclass
class DynamicsModel:
    nets: list[nn.MlpParams]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if len(self.nets) != 4:
            raise ValueError("a dynamics model has exactly four component nets")
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(5)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64).reshape(5), STD_FLOOR)

    @classmethod
    def zero(cls) -> "DynamicsModel":
        return cls([nn.MlpParams() for _ in range(4)], np.zeros(5), np.ones(5))

    def predict_batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        x = (encode_inputs(states, actions) - self.mean) / self.std
        delta = np.column_stack([nn.forward(net, x) for net in self.nets])
        return states + delta

    def __eq__(self, other) -> bool:
        if not isinstance(other, DynamicsModel):
            return NotImplemented
        return (all(a == b for a, b in zip(self.nets, other.nets))
                and np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std))


class DatasetTooSmallError(ValueError):
    pass


def train_model(d: Dataset, cfg: nn.TrainConfig) -> tuple[DynamicsModel, list[nn.TrainHistory]]:
    if len(d) < MIN_DATASET:
        raise DatasetTooSmallError(f"need at least {MIN_DATASET} transitions, got {len(d)}")
    train_idx, val_idx = split_indices(len(d), 0.7, substream(cfg.seed, "model-split"))
    x = encode_inputs(d.states, d.actions)
    mean = x[train_idx].mean(axis=0)
    std = np.maximum(x[train_idx].std(axis=0), STD_FLOOR)
    xn = (x - mean) / std
    delta = d.next_states - d.states

    nets, histories = [], []
    for k in range(4):
        sub_cfg = dataclasses.replace(cfg, seed=derive_seed(cfg.seed, "component", k))
        best, hist = nn.train(
            nn.RegressionSet(xn[train_idx], delta[train_idx, k]),
            nn.RegressionSet(xn[val_idx], delta[val_idx, k]),
            sub_cfg,
        )
        nets.append(best)
        histories.append(hist)
    return DynamicsModel(nets, mean, std), histories


def predict(m: DynamicsModel, s, a) -> np.ndarray:
    row = np.asarray(s, dtype=np.float64).reshape(1, 4)
    return m.predict_batch(row, np.array([int(a)]))[0]


def save_model(m: DynamicsModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, net in enumerate(m.nets):
        nn.save_params(net, directory / f"net_{k}.csv")
    lines = ["mean,std", *(f"{mu!r},{sd!r}" for mu, sd in zip(map(float, m.mean), map(float, m.std)))]
    (directory / "normalization.csv").write_text("\n".join(lines) + "\n")


def load_model(directory) -> DynamicsModel:
    directory = Path(directory)
    nets = [nn.load_params(directory / f"net_{k}.csv") for k in range(4)]
    rows = (directory / "normalization.csv").read_text().split()[1:]
    stats = np.array([[float(v) for v in row.split(",")] for row in rows])
    return DynamicsModel(nets, stats[:, 0], stats[:, 1])
