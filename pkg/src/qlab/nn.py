"""A 5-64-1 ReLU regressor with MSE loss, Adam and early-stopped mini-batch training.

Parameters live in one flat float64 vector laid out as ``w1`` (64x5,
row-major), ``b1`` (64), ``w2`` (1x64), ``b2`` (1); the named fields are views
into it. Gradients use the same container.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .seeding import substream

N_IN = 5
N_HIDDEN = 64
N_PARAMS = N_HIDDEN * N_IN + N_HIDDEN + N_HIDDEN + 1

_W1 = slice(0, N_HIDDEN * N_IN)
_B1 = slice(_W1.stop, _W1.stop + N_HIDDEN)
_W2 = slice(_B1.stop, _B1.stop + N_HIDDEN)
_B2 = slice(_W2.stop, _W2.stop + 1)


class MlpParams:
    __slots__ = ("flat",)

    def __init__(self, flat=None):
        flat = np.zeros(N_PARAMS) if flat is None else np.array(flat, dtype=np.float64).reshape(-1)
        if flat.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got {flat.size}")
        self.flat = flat

    @classmethod
    def from_parts(cls, w1, b1, w2, b2) -> "MlpParams":
        parts = [np.asarray(w1, float).reshape(N_HIDDEN, N_IN), np.asarray(b1, float).reshape(N_HIDDEN),
                 np.asarray(w2, float).reshape(1, N_HIDDEN), np.asarray(b2, float).reshape(1)]
        return cls(np.concatenate([p.reshape(-1) for p in parts]))

    @property
    def w1(self) -> np.ndarray:
        return self.flat[_W1].reshape(N_HIDDEN, N_IN)

    @property
    def b1(self) -> np.ndarray:
        return self.flat[_B1]

    @property
    def w2(self) -> np.ndarray:
        return self.flat[_W2].reshape(1, N_HIDDEN)

    @property
    def b2(self) -> np.ndarray:
        return self.flat[_B2]

    def copy(self) -> "MlpParams":
        return MlpParams(self.flat.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, MlpParams):
            return NotImplemented
        return np.array_equal(self.flat, other.flat)

    def __repr__(self) -> str:
        return f"MlpParams(|w|={np.linalg.norm(self.flat):.4g})"


def init(rng: np.random.Generator) -> MlpParams:
    """Uniform fan-in/fan-out initialisation with zero biases."""
    lim1 = np.sqrt(6.0 / (N_IN + N_HIDDEN))
    lim2 = np.sqrt(6.0 / (N_HIDDEN + 1))
    w1 = rng.uniform(-lim1, lim1, size=(N_HIDDEN, N_IN))
    w2 = rng.uniform(-lim2, lim2, size=(1, N_HIDDEN))
    return MlpParams.from_parts(w1, np.zeros(N_HIDDEN), w2, np.zeros(1))


@numba.njit(cache=True, fastmath=True)
def _forward_rows(w1t, b1, w2, b2, x):
    # One row at a time with identical code per row, so a row's output does
    # not depend on which other rows share the call.
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        x0 = x[i, 0]
        x1 = x[i, 1]
        x2 = x[i, 2]
        x3 = x[i, 3]
        x4 = x[i, 4]
        acc = 0.0
        for j in range(w1t.shape[1]):
            h = x0 * w1t[0, j] + x1 * w1t[1, j] + x2 * w1t[2, j] + x3 * w1t[3, j] + x4 * w1t[4, j] + b1[j]
            acc += max(h, 0.0) * w2[j]
        out[i] = acc + b2
    return out


def forward(p: MlpParams, inputs) -> np.ndarray | float:
    """Network output for a single 5-vector (returns float) or an (N, 5) batch."""
    x = np.ascontiguousarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    x = x.reshape(-1, N_IN)
    if not np.all(np.isfinite(x)):
        raise ValueError("network inputs must be finite")
    out = _forward_rows(np.ascontiguousarray(p.w1.T), p.b1.copy(), p.w2[0].copy(), float(p.b2[0]), x)
    return float(out[0]) if single else out


@dataclass
class RegressionSet:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64).reshape(-1, N_IN)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if len(self.inputs) != len(self.targets) or len(self.targets) < 1:
            raise ValueError("regression set needs matching, non-empty inputs and targets")

    def __len__(self) -> int:
        return len(self.targets)


def _predict_blas(p: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Training-only path: BLAS matmuls, fast but not batch-composition invariant.
    h = x @ p.w1.T + p.b1
    a = np.maximum(h, 0.0)
    return h, a, a @ p.w2[0] + p.b2[0]


def mse(p: MlpParams, data: RegressionSet) -> float:
    err = _predict_blas(p, data.inputs)[2] - data.targets
    return float(np.mean(err * err))


def loss_and_gradient(p: MlpParams, batch: RegressionSet) -> tuple[float, MlpParams]:
    x, y = batch.inputs, batch.targets
    h, a, pred = _predict_blas(p, x)
    err = pred - y
    loss = float(np.mean(err * err))

    d_out = (2.0 / len(y)) * err
    grad = np.empty(N_PARAMS)
    grad[_W2] = d_out @ a
    grad[_B2] = d_out.sum()
    d_h = np.outer(d_out, p.w2[0]) * (h > 0.0)
    grad[_W1] = (d_h.T @ x).reshape(-1)
    grad[_B1] = d_h.sum(axis=0)
    return loss, MlpParams(grad)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    v: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    t: int = 0


def adam_step(p: MlpParams, grads: MlpParams, state: AdamState, lr: float) -> tuple[MlpParams, AdamState]:
    g = grads.flat
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * g * g
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    new = p.flat - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return MlpParams(new), AdamState(m, v, t)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 100
    patience: int = 50
    max_epochs: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError(f"invalid training configuration: {self}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def n_epochs(self) -> int:
        return len(self.val_loss)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch]


def train(train_set: RegressionSet, val_set: RegressionSet, cfg: TrainConfig,
          params: MlpParams | None = None) -> tuple[MlpParams, TrainHistory]:
    """Mini-batch Adam with early stopping on the validation MSE.

    Returns the parameters with the lowest validation loss seen (strict
    improvement only) together with the per-epoch losses.
    """
    p = init(substream(cfg.seed, "init")) if params is None else params.copy()
    shuffle_rng = substream(cfg.seed, "shuffle")
    state = AdamState()
    history = TrainHistory()
    best = p.copy()
    best_val = np.inf
    since_best = 0
    n = len(train_set)

    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = loss_and_gradient(p, RegressionSet(train_set.inputs[idx], train_set.targets[idx]))
            p, state = adam_step(p, grads, state, cfg.learning_rate)
        history.train_loss.append(mse(p, train_set))
        val = mse(p, val_set)
        history.val_loss.append(val)
        if val < best_val:
            best_val = val
            best = p.copy()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best, history


PARAM_LAYOUT = "w1[64x5] row-major, b1[64], w2[1x64], b2[1]"


def save_params(p: MlpParams, path) -> None:
    lines = [f"# layout: {PARAM_LAYOUT}", "value", *(repr(float(v)) for v in p.flat)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> MlpParams:
    values = []
    header_seen = False
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if not header_seen:
            if line.strip() != "value":
                raise ValueError(f"line {lineno}: expected header 'value', got {line!r}")
            header_seen = True
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ValueError(f"line {lineno}, column 1 (value): cannot parse {line!r}") from None
    return MlpParams(values)
