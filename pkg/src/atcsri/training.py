"""Adam training loop with dev-accuracy early stopping.

Batch order is drawn from the config seed, reductions run in a fixed order,
and the best dev snapshot is restored before returning, so a rerun with the
same seeds reproduces losses bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import iter_batches
from .metrics import MetricsReport, metrics_report


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 5
    seed: int = 0
    class_weights: bool = False
    max_len: int = 128

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def _snapshot(model):
    state = {name: p.data.copy() for name, p in model.named_parameters()}
    state.update({"buffer:" + name: b.data.copy() for name, b in model.named_buffers()})
    return state


def _restore(model, state):
    for name, p in model.named_parameters():
        p.tensor.data = state[name].copy()
    for name, b in model.named_buffers():
        b.data = state["buffer:" + name].copy()


def _class_weight_vector(labels):
    counts = np.bincount(labels, minlength=2).astype(np.float64)
    if (counts == 0).any():
        raise TrainingError("class weighting needs both classes in the train split")
    return (counts.sum() / (2.0 * counts)).tolist()


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_acc: float

    def to_json(self):
        return json.dumps({"epoch": self.epoch, "train_loss": self.train_loss,
                           "dev_acc": self.dev_acc})


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_acc: float = 0.0


def predict_scores(model, dataset, vocab=None, batch_size=32, max_len=128):
    """Pilot probabilities for every row, in manifest order (eval mode)."""
    was_training = model.training
    model.eval()
    scores = []
    with T.no_grad():
        for batch in iter_batches(dataset, model.modalities, vocab=vocab,
                                  batch_size=batch_size, max_len=max_len):
            probs = model.forward(batch)
            scores.append(probs.data[:, 1].copy())
    if was_training:
        model.train()
    return np.concatenate(scores)


def evaluate(model, dataset, vocab=None, threshold=0.5, batch_size=32,
             max_len=128) -> MetricsReport:
    if len(dataset) == 0:
        raise TrainingError("cannot evaluate an empty manifest")
    scores = predict_scores(model, dataset, vocab=vocab, batch_size=batch_size,
                            max_len=max_len)
    return metrics_report(scores, dataset.labels(), threshold=threshold)


def train(model, train_ds, dev_ds, config: TrainConfig, vocab=None,
          history_path=None, log=None) -> TrainResult:
    """Optimize on train, early-stop on dev accuracy, restore the best epoch."""
    if len(train_ds) == 0 or len(dev_ds) == 0:
        raise TrainingError("train and dev manifests must be non-empty")

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    weights = _class_weight_vector(train_ds.labels()) if config.class_weights else None

    result = TrainResult()
    best_state = _snapshot(model)
    stale = 0
    history_fh = open(history_path, "w", encoding="utf-8") if history_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            model.train()
            order = rng.permutation(len(train_ds))
            losses = []
            for b_idx, batch in enumerate(iter_batches(
                    train_ds, model.modalities, vocab=vocab,
                    batch_size=config.batch_size, order=order, max_len=config.max_len)):
                optimizer.zero_grad()
                probs = model.forward(batch)
                loss = T.cross_entropy(probs, batch.labels, class_weights=weights)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, batch {b_idx}")
                T.backward(loss)
                optimizer.step()
                losses.append(value)

            dev_acc = evaluate(model, dev_ds, vocab=vocab,
                               batch_size=config.batch_size,
                               max_len=config.max_len).acc
            record = EpochRecord(epoch, float(np.mean(losses)), float(dev_acc))
            result.history.append(record)
            if history_fh:
                history_fh.write(record.to_json() + "\n")
                history_fh.flush()
            if log:
                log(f"epoch {epoch}: train_loss={record.train_loss:.4f} "
                    f"dev_acc={dev_acc:.4f}")

            if dev_acc > result.best_dev_acc or epoch == 1:
                result.best_dev_acc = float(dev_acc)
                result.best_epoch = epoch
                best_state = _snapshot(model)
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    finally:
        if history_fh:
            history_fh.close()
    _restore(model, best_state)
    model.eval()
    return result
