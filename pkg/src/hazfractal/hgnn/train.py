"""Minibatch Adam training of the network with best-on-validation selection."""

from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput, TrainingDiverged
from ..metrics import confusion, macro_report
from .network import HgnnConfig, hgnn_forward, init_params, loss_and_grad, predict


@dataclass(frozen=True)
class TrainSchedule:
    """Optimizer settings.  The defaults are the reference (paper-mode) values."""

    lr: float = 1e-5
    epochs: int = 50
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidInput("lr must be >= 0, epochs and batch_size >= 1")

    def to_dict(self) -> dict:
        return {"lr": self.lr, "epochs": self.epochs, "batch_size": self.batch_size,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class History:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_macro_f1: list[float] = field(default_factory=list)
    first_batch_loss: float = math.nan
    best_epoch: int = 0

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_macro_f1"])
        for row in zip(self.epochs, self.train_loss, self.val_macro_f1):
            writer.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}"])
        return out.getvalue()


def predict_batch(x: np.ndarray, params: dict, config: HgnnConfig, chunk: int = 256) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = [predict(hgnn_forward(x[i:i + chunk], params, config)) for i in range(0, len(x), chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _check_labels(y, config: HgnnConfig) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.size and (y.min() < 1 or y.max() > config.num_classes):
        raise InvalidInput(f"labels must lie in 1..{config.num_classes}")
    return y


def train(
    train_x,
    train_y,
    config: HgnnConfig,
    schedule: TrainSchedule | None = None,
    val_x=None,
    val_y=None,
) -> tuple[dict[str, np.ndarray], History]:
    """Fit the network on H(q) vectors ``train_x`` with 1-based labels ``train_y``.

    Minibatches are drawn from a fresh permutation each epoch, seeded by
    ``config.seed``.  After every epoch the validation macro-F1 is recorded
    (train macro-F1 when no validation set is given) and the parameters of
    the first epoch reaching the best score are returned.

    Raises:
        TrainingDiverged: the loss of some batch became NaN or infinite.
    """
    schedule = schedule or TrainSchedule()
    x = np.atleast_2d(np.asarray(train_x, dtype=np.float64))
    y = _check_labels(train_y, config)
    if len(x) == 0 or len(x) != len(y):
        raise InvalidInput("need a non-empty training set with one label per sample")
    if val_x is None:
        vx, vy = x, y
    else:
        vx, vy = np.atleast_2d(np.asarray(val_x, dtype=np.float64)), _check_labels(val_y, config)

    params = init_params(config)
    opt = Adam(params, schedule.lr, schedule.beta1, schedule.beta2, schedule.eps)
    rng = np.random.Generator(np.random.PCG64([config.seed, 1]))
    history = History()
    best, best_score = copy.deepcopy(params), -math.inf

    for epoch in range(1, schedule.epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), schedule.batch_size):
            batch = order[start:start + schedule.batch_size]
            loss, grads = loss_and_grad(x[batch], y[batch] - 1, params, config)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch)
            if math.isnan(history.first_batch_loss):
                history.first_batch_loss = loss
            opt.step(params, grads)
            total += loss * len(batch)
        pred = predict_batch(vx, params, config)
        score = macro_report(confusion(pred, vy, config.num_classes)).macro_f1
        history.epochs.append(epoch)
        history.train_loss.append(total / len(x))
        history.val_macro_f1.append(score)
        if score > best_score:
            best, best_score = copy.deepcopy(params), score
            history.best_epoch = epoch
    return best, history
