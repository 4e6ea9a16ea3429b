"""Initialisation, Adam, and the training loop with early stopping and LR reduction."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .nn import DenseParams, LstmParams, Network, backward_batch, forward_batch, predict_batch
from .tensor import DTYPE, Rng, global_norm, make_rng

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


def cross_entropy(probs, target: int) -> float:
    probs = np.asarray(probs, dtype=DTYPE)
    if not 0 <= int(target) < probs.shape[-1]:
        raise ValueError(f"target {target} out of range for {probs.shape[-1]} classes")
    return -math.log(max(float(probs[int(target)]), PROB_FLOOR))


def mean_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    picked = probs[np.arange(probs.shape[0]), targets]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def orthogonal_init(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """Random matrix with orthonormal rows or columns (whichever are fewer).

    QR of a Gaussian matrix, with the signs of R's diagonal folded back into
    Q so the result is Haar distributed.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"shape must be positive, got ({rows}, {cols})")
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.where(np.diag(r) < 0, -1.0, 1.0)
    return q if rows >= cols else q.T


def init_network(arch, rng: Rng | None) -> Network:
    """Orthogonal weights, zero peepholes and biases, forget bias 1.

    With ``rng=None`` every parameter is left at zero (a skeleton for loading
    checkpoints).
    """
    from .zoo import layer_plan

    layers = []
    for kind, d_in, d_out in layer_plan(arch):
        if kind == "lstm":
            p = LstmParams(d_in, d_out)
            if rng is not None:
                for gate in "ifco":
                    getattr(p, f"W_x{gate}")[...] = orthogonal_init(d_out, d_in, rng)
                    getattr(p, f"W_h{gate}")[...] = orthogonal_init(d_out, d_out, rng)
                p.b_f[...] = 1.0
        else:
            p = DenseParams(d_in, d_out, kind)
            if rng is not None:
                p.W[...] = orthogonal_init(d_out, d_in, rng)
        layers.append(p)
    return Network(layers, arch.class_count, arch)


@dataclass
class TrainConfig:
    initial_lr: float = 0.01
    min_lr: float = 1e-4
    lr_reduce_factor: float = 0.5
    lr_patience: int = 2
    early_stop_patience: int = 3
    max_epochs: int = 100
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if not 0 < self.min_lr <= self.initial_lr:
            raise ValueError(f"need 0 < min_lr <= initial_lr, got {self.min_lr}, {self.initial_lr}")
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if not 0 < self.lr_reduce_factor < 1:
            raise ValueError(f"lr_reduce_factor must be in (0, 1), got {self.lr_reduce_factor}")
        if self.max_epochs < 0 or self.batch_size < 1:
            raise ValueError("max_epochs must be >= 0 and batch_size >= 1")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("invalid Adam hyperparameters")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, cfg: TrainConfig) -> AdamState:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ValueError("parameter, gradient and state names differ")
    for k, p in params.items():
        if grads[k].shape != p.shape or state.m[k].shape != p.shape:
            raise ValueError(f"{k}: parameter {p.shape}, gradient {grads[k].shape}, state {state.m[k].shape}")
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
    return state


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place to global norm <= max_norm; returns the original norm."""
    norm = global_norm(grads.values())
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train_step(net: Network, params, state: AdamState, x, y, lr: float, cfg: TrainConfig) -> tuple[float, int]:
    """One minibatch update.  Returns (mean loss, number correct before the update)."""
    probs, tape = forward_batch(net, x)
    loss = mean_cross_entropy(probs, y)
    correct = int(np.sum(np.argmax(probs, axis=1) == y))
    if not math.isfinite(loss):
        return loss, correct
    grads = backward_batch(net, tape, y)
    clip_gradients(grads, cfg.clip_norm)
    adam_step(params, grads, state, lr, cfg)
    return loss, correct


def accuracy(net: Network, x, y) -> float:
    if len(y) == 0:
        raise ValueError("accuracy of an empty set")
    return float(np.mean(np.argmax(predict_batch(net, x), axis=1) == np.asarray(y)))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float
    lr: float
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = "max-epochs"
    best_test_accuracy: float = float("nan")
    best_epoch: int = 0

    @property
    def loss_trace(self) -> list[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def lr_trace(self) -> list[float]:
        return [e.lr for e in self.epochs]

    def summary(self) -> dict:
        """Everything except wall-clock timings (so it is reproducible)."""
        return {
            "epochs_run": len(self.epochs),
            "stop_reason": self.stop_reason,
            "best_epoch": self.best_epoch,
            "best_test_accuracy": self.best_test_accuracy,
            "history": [
                {k: v for k, v in asdict(e).items() if k != "seconds"} for e in self.epochs
            ],
        }

    def table(self) -> str:
        lines = [f"{'epoch':>5}  {'loss':>9}  {'train acc':>9}  {'test acc':>8}  {'lr':>8}  {'sec':>6}"]
        for e in self.epochs:
            lines.append(f"{e.epoch:>5}  {e.train_loss:>9.5f}  {e.train_accuracy:>9.4f}  "
                         f"{e.test_accuracy:>8.4f}  {e.lr:>8.2e}  {e.seconds:>6.1f}")
        lines.append(f"stop: {self.stop_reason}; best test accuracy {self.best_test_accuracy:.4f} "
                     f"at epoch {self.best_epoch}")
        return "\n".join(lines)


def train(net: Network, data: Dataset, cfg: TrainConfig, on_epoch=None) -> tuple[Network, TrainReport]:
    """Minibatch Adam on the train split, model selection on the test split.

    After every epoch the test accuracy is compared (strictly) with the best
    so far.  Each ``lr_patience`` consecutive epochs without improvement
    multiply the learning rate by ``lr_reduce_factor`` (floored at
    ``min_lr``); ``early_stop_patience`` of them end training.  The returned
    network carries the weights of the best epoch; ``net`` itself is not
    modified.
    """
    x_train, y_train = data.arrays("train")
    x_test, y_test = data.arrays("test")
    if len(y_train) == 0 or len(y_test) == 0:
        raise ValueError("training needs a nonempty train and test split")
    net = net.copy()
    report = TrainReport()
    if cfg.max_epochs == 0:
        return net, report

    rng = make_rng(cfg.seed)
    params = net.parameters()
    state = AdamState.zeros_like(params)
    lr = cfg.initial_lr
    best = -math.inf
    best_params = {k: a.copy() for k, a in params.items()}
    wait = 0
    n = len(y_train)
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, hits = train_step(net, params, state, x_train[idx], y_train[idx], lr, cfg)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            total_loss += loss * len(idx)
            correct += hits
        test_acc = accuracy(net, x_test, y_test)
        rec = EpochRecord(epoch, total_loss / n, correct / n, test_acc, lr, time.perf_counter() - t0)
        report.epochs.append(rec)
        log.info("epoch %d loss %.5f train %.4f test %.4f lr %.2e", epoch, rec.train_loss,
                 rec.train_accuracy, rec.test_accuracy, lr)
        if on_epoch is not None:
            on_epoch(rec)

        if test_acc > best:
            best, wait = test_acc, 0
            report.best_epoch = epoch
            for k, a in params.items():
                best_params[k][...] = a
        else:
            wait += 1
            if wait >= cfg.early_stop_patience:
                report.stop_reason = "early-stop"
                break
            if wait % cfg.lr_patience == 0:
                lr = max(lr * cfg.lr_reduce_factor, cfg.min_lr)

    report.best_test_accuracy = best
    net.load_parameters(best_params)
    return net, report
