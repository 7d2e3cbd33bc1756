"""Temporal backpropagation for TTFS networks.

Errors live on firing times: ``e_k = (T_target,k - t_k) / T_max``. Output
deltas propagate to earlier layers only through post-neurons that fired no
earlier than the pre-neuron, and updates are applied online (batch 1).
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal

import numpy as np

from .dataset import LabeledDataset
from .encoding import ttfs_times
from .snn import ForwardTrace, Network, forward_ttfs_times, winners

log = logging.getLogger(__name__)

EPS = 1e-12

TargetRule = Literal["printed", "early-only"]
Surrogate = Literal["boundary", "constant"]
HiddenScale = Literal["unit", "output-norm"]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Training hyper-parameters.

    ``target_rule``: ``printed`` gives every wrong neuron with
    ``t <= T_max - alpha`` the target ``tau + alpha``; ``early-only`` only
    retargets wrong neurons that fire before ``tau + alpha``.
    ``surrogate``: ``boundary`` uses d(t)/dV = 0 at t in {0, T_max} and -1
    elsewhere; ``constant`` uses -1 everywhere.
    ``hidden_scale``: hidden deltas are unit-normalized per layer; with
    ``output-norm`` they are then rescaled to the norm of the output deltas.
    """

    hidden: tuple[int, ...] = (128,)
    n_in: int = 400
    n_out: int = 10
    t_max: int = 64
    alpha: int = 1
    eta: float = 0.02
    v_th: float = 1.6
    i_init: float = 0.1
    epochs: int = 30
    lr_decay: float = 0.9
    patience: int = 5
    seed: int = 0
    target_rule: TargetRule = "early-only"
    surrogate: Surrogate = "constant"
    hidden_scale: HiddenScale = "output-norm"
    n_train: int | None = None
    n_test: int | None = None
    max_seconds: float | None = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in np.atleast_1d(self.hidden))
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.t_max < 2:
            raise ValueError("t_max must be >= 2")
        if not 0 < self.alpha < self.t_max:
            raise ValueError("need 0 < alpha < t_max")
        if self.epochs < 0 or self.patience < 1:
            raise ValueError("epochs must be >= 0 and patience >= 1")
        if self.target_rule not in ("printed", "early-only"):
            raise ValueError(f"unknown target_rule {self.target_rule!r}")
        if self.surrogate not in ("boundary", "constant"):
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        if self.hidden_scale not in ("unit", "output-norm"):
            raise ValueError(f"unknown hidden_scale {self.hidden_scale!r}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_in, *self.hidden, self.n_out]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class DeltaField:
    """``deltas[l]`` belongs to the neurons fed by weight layer ``l``."""

    deltas: list[np.ndarray]
    targets: np.ndarray
    errors: np.ndarray

    @property
    def loss(self) -> float:
        return loss_value(self.errors)


def init_weights(layer_sizes, i_init: float, rng: np.random.Generator, v_th: float = 1.6) -> Network:
    """He-style normal init with a positive mean so hidden units fire early on."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError("need at least two layers of size >= 1")
    ws = [rng.normal(i_init, np.sqrt(2.0 / a), (a, b)) for a, b in zip(sizes, sizes[1:])]
    return Network(ws, [v_th] * len(ws))


def compute_targets(times, label: int, t_max: int, alpha: int, rule: TargetRule = "printed") -> np.ndarray:
    """Target firing time per output neuron.

    The correct neuron is asked to fire at the earliest output time ``tau``;
    wrong neurons are pushed to ``tau + alpha``. Under ``printed`` every
    wrong neuron at ``t <= t_max - alpha`` is retargeted, under
    ``early-only`` just those firing before ``tau + alpha``. The rest keep
    their own time and carry no error.
    """
    t = np.asarray(times, dtype=np.int64)
    tau = t.min()
    if rule == "printed":
        move = t <= t_max - alpha
    elif rule == "early-only":
        move = t < tau + alpha
    else:
        raise ValueError(f"unknown target rule {rule!r}")
    # Silent outputs already sit at the latest possible time.
    target = np.minimum(np.where(move, tau + alpha, t), t_max)
    target[label] = tau
    return target


def output_deltas(times, targets, t_max: int) -> np.ndarray:
    return (np.asarray(targets, dtype=float) - np.asarray(times, dtype=float)) / t_max


def loss_value(errors) -> float:
    e = np.asarray(errors, dtype=float)
    return 0.5 * float(np.sum(e * e))


def surrogate(times, t_max: int, mode: Surrogate = "boundary") -> np.ndarray:
    """Approximate d(t)/d(V_mem) per neuron."""
    t = np.asarray(times)
    if mode == "constant":
        return np.full(t.shape, -1.0)
    return np.where((t == 0) | (t == t_max), 0.0, -1.0)


def _single(trace: ForwardTrace, what: str) -> list[np.ndarray]:
    arrs = getattr(trace, what)
    if arrs[0].ndim == 2:
        if arrs[0].shape[0] != 1:
            raise ValueError("training operations work on single-image traces")
        return [a[0] for a in arrs]
    return list(arrs)


def backprop_deltas(
    trace: ForwardTrace, network: Network, out_deltas, normalize: bool = True
) -> list[np.ndarray]:
    """Deltas for every non-input layer, last entry being ``out_deltas``.

    ``delta_j = sum_k delta_k * w_jk * [t_k >= t_j]``; each hidden layer's
    vector is then divided by its Euclidean norm unless it is (near) zero.
    """
    times = _single(trace, "times")
    deltas = [np.asarray(out_deltas, dtype=float)]
    for l in range(len(network.weights) - 1, 0, -1):
        w = network.weights[l]
        gate = times[l + 1][None, :] >= times[l][:, None]
        d = (w * gate * deltas[0][None, :]).sum(axis=1)
        if normalize:
            n = np.linalg.norm(d)
            if n > EPS:
                d = d / n
        deltas.insert(0, d)
    return deltas


def weight_updates(
    trace: ForwardTrace,
    deltas: list[np.ndarray],
    eta,
    t_max: int | None = None,
    mode: Surrogate = "boundary",
) -> list[np.ndarray]:
    """``dw_ij = eta * delta_j * d_j * S_i(t_j)``, to be added to the weights.

    ``eta`` may be a scalar or one value per weight layer.
    """
    t_max = trace.n_steps if t_max is None else t_max
    times, fired = _single(trace, "times"), _single(trace, "fired")
    etas = np.broadcast_to(np.asarray(eta, dtype=float), (len(deltas),))
    out = []
    for l, d in enumerate(deltas):
        t_post = times[l + 1]
        s = fired[l][:, None] & (times[l][:, None] <= t_post[None, :])
        g = etas[l] * d * surrogate(t_post, t_max, mode)
        out.append(s * g[None, :])
    return out


@dataclass
class StepResult:
    prediction: int
    loss: float


def train_step(net: Network, input_times: np.ndarray, label: int, cfg: TrainConfig, eta: float) -> StepResult:
    """One online update on a single encoded image; mutates ``net``."""
    trace = forward_ttfs_times(net, input_times[None, :], cfg.t_max)
    pred = int(winners(trace)[0])
    t_out = trace.times[-1][0]
    target = compute_targets(t_out, label, cfg.t_max, cfg.alpha, cfg.target_rule)
    d_out = output_deltas(t_out, target, cfg.t_max)
    deltas = backprop_deltas(trace, net, d_out)
    if cfg.hidden_scale == "output-norm":
        scale = np.linalg.norm(d_out)
        deltas = [d * scale for d in deltas[:-1]] + [deltas[-1]]
    for w, dw in zip(net.weights, weight_updates(trace, deltas, eta, cfg.t_max, cfg.surrogate)):
        w += dw
    return StepResult(pred, loss_value(d_out))


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    predictions: np.ndarray

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "confusion": self.confusion.tolist()}


def evaluate(
    network: Network, dataset: LabeledDataset, t_max: int = 64, batch: int = 500
) -> EvalResult:
    """Classification accuracy and confusion counts (rows: label, cols: prediction)."""
    x = ttfs_times(dataset.flat, t_max, dataset.i_max)
    preds = np.concatenate(
        [winners(forward_ttfs_times(network, x[s : s + batch], t_max)) for s in range(0, len(x), batch)]
    ) if len(x) else np.zeros(0, dtype=np.int64)
    n_cls = network.layer_sizes[-1]
    conf = np.zeros((n_cls, n_cls), dtype=np.int64)
    np.add.at(conf, (dataset.labels, preds), 1)
    acc = float(np.mean(preds == dataset.labels)) if len(x) else float("nan")
    return EvalResult(acc, conf, preds)


@dataclass
class TrainResult:
    network: Network
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    stopped: str = "completed"


def train(
    train_set: LabeledDataset,
    cfg: TrainConfig,
    test_set: LabeledDataset | None = None,
    callback: Callable[[dict], None] | None = None,
    network: Network | None = None,
) -> TrainResult:
    """Online training with per-epoch shuffling, lr decay and early stopping.

    The returned network is the one with the best test accuracy (the last
    one when no test set is given). History rows hold epoch, eta, train_acc,
    test_acc and mean_loss.
    """
    rng = np.random.default_rng(cfg.seed)
    net = init_weights(cfg.layer_sizes, cfg.i_init, rng, cfg.v_th) if network is None else network.copy()
    if net.layer_sizes[0] != train_set.flat.shape[1]:
        raise ValueError(f"network input {net.layer_sizes[0]} != image size {train_set.flat.shape[1]}")
    if cfg.n_train is not None:
        train_set = train_set.subset(cfg.n_train)
    if test_set is not None and cfg.n_test is not None:
        test_set = test_set.subset(cfg.n_test)
    x = ttfs_times(train_set.flat, cfg.t_max, train_set.i_max)
    y = train_set.labels
    result = TrainResult(net)
    best, best_net, stale = -1.0, net.copy(), 0
    eta = cfg.eta
    start = time.monotonic()
    for epoch in range(cfg.epochs):
        correct, losses = 0, np.empty(len(x))
        for n, i in enumerate(rng.permutation(len(x))):
            step = train_step(net, x[i], int(y[i]), cfg, eta)
            correct += step.prediction == y[i]
            losses[n] = step.loss
        if not np.isfinite(losses).all() or not all(np.isfinite(w).all() for w in net.weights):
            bad = int(np.argmin(np.isfinite(losses)))
            raise TrainingDiverged(
                f"non-finite loss or weights in epoch {epoch} (first bad step {bad}); "
                f"lower eta (now {eta:g})"
            )
        row = {
            "epoch": epoch,
            "eta": eta,
            "train_acc": correct / max(len(x), 1),
            "test_acc": evaluate(net, test_set, cfg.t_max).accuracy if test_set is not None else float("nan"),
            "mean_loss": float(losses.mean()) if len(x) else float("nan"),
        }
        result.history.append(row)
        log.info("epoch %d eta %.5f train %.4f test %.4f loss %.5f", epoch, eta, row["train_acc"], row["test_acc"], row["mean_loss"])
        if callback is not None:
            callback(row)
        eta *= cfg.lr_decay
        score = row["test_acc"] if test_set is not None else row["train_acc"]
        if score > best:
            best, best_net, stale = score, net.copy(), 0
            result.best_epoch = epoch
        else:
            stale += 1
        if stale >= cfg.patience:
            result.stopped = "early-stop"
            break
        if cfg.max_seconds is not None and time.monotonic() - start > cfg.max_seconds:
            result.stopped = "time-budget"
            break
    result.network = best_net if cfg.epochs and test_set is not None else net
    return result
