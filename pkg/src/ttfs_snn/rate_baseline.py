"""Rate-coded comparison network: a ReLU net converted to integrate-and-fire."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import LabeledDataset
from .encoding import encode_rate_batch
from .hardware import ConductanceLadder, build_ladder, effective_weights, quantize_network
from .snn import Network, forward_rate_spikes, winners

log = logging.getLogger(__name__)


@dataclass
class AnalogNetwork:
    """Bias-free rectifier network; ReLU on hidden layers, linear readout."""

    weights: list[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"weight shapes do not chain: {a.shape} -> {b.shape}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def activations(self, x: np.ndarray) -> list[np.ndarray]:
        """Post-activation values of each non-input layer."""
        acts = []
        h = np.asarray(x, dtype=float)
        for l, w in enumerate(self.weights):
            h = h @ w
            if l < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.activations(x)[-1].argmax(axis=-1)

    def copy(self) -> "AnalogNetwork":
        return AnalogNetwork([w.copy() for w in self.weights])


@dataclass
class AnalogConfig:
    hidden: tuple[int, ...] = (128,)
    n_in: int = 400
    n_out: int = 10
    eta: float = 0.02
    lr_decay: float = 0.9
    epochs: int = 10
    seed: int = 0
    n_train: int | None = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in np.atleast_1d(self.hidden))
        if not self.eta > 0 or self.epochs < 0:
            raise ValueError("need eta > 0 and epochs >= 0")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_in, *self.hidden, self.n_out]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class AnalogResult:
    network: AnalogNetwork
    history: list[dict] = field(default_factory=list)


def _scaled(ds: LabeledDataset) -> np.ndarray:
    return ds.flat.astype(float) / ds.i_max


def train_analog(
    train_set: LabeledDataset, cfg: AnalogConfig, test_set: LabeledDataset | None = None
) -> AnalogResult:
    """Plain SGD (batch 1) on squared error against one-hot targets."""
    rng = np.random.default_rng(cfg.seed)
    sizes = cfg.layer_sizes
    net = AnalogNetwork([rng.normal(0.0, np.sqrt(2.0 / a), (a, b)) for a, b in zip(sizes, sizes[1:])])
    if cfg.n_train is not None:
        train_set = train_set.subset(cfg.n_train)
    x, y = _scaled(train_set), train_set.labels
    eye = np.eye(cfg.n_out)
    res = AnalogResult(net)
    eta = cfg.eta
    for epoch in range(cfg.epochs):
        losses = np.empty(len(x))
        for n, i in enumerate(rng.permutation(len(x))):
            acts = net.activations(x[i])
            err = acts[-1] - eye[y[i]]
            losses[n] = 0.5 * err @ err
            grad = err
            for l in range(len(net.weights) - 1, -1, -1):
                pre = x[i] if l == 0 else acts[l - 1]
                back = net.weights[l] @ grad if l else None
                net.weights[l] -= eta * np.outer(pre, grad)
                if l:
                    grad = back * (acts[l - 1] > 0)
        if not np.isfinite(losses).all():
            raise RuntimeError(f"analog training diverged in epoch {epoch}; lower eta (now {eta:g})")
        row = {"epoch": epoch, "eta": eta, "mean_loss": float(losses.mean())}
        row["train_acc"] = float(np.mean(net.predict(x) == y))
        row["test_acc"] = float(np.mean(net.predict(_scaled(test_set)) == test_set.labels)) if test_set is not None else float("nan")
        log.info("analog epoch %d train %.4f test %.4f", epoch, row["train_acc"], row["test_acc"])
        res.history.append(row)
        eta *= cfg.lr_decay
    return res


def max_activations(analog: AnalogNetwork, x: np.ndarray, batch: int = 2000) -> list[float]:
    peaks = np.zeros(len(analog.weights))
    for s in range(0, len(x), batch):
        for l, a in enumerate(analog.activations(x[s : s + batch])):
            peaks[l] = max(peaks[l], float(a.max(initial=0.0)))
    return list(peaks)


def convert_to_rate_snn(
    analog: AnalogNetwork,
    calibration_images: np.ndarray,
    v_th: float = 1.6,
    ladder: ConductanceLadder | None = None,
    i_max: int = 255,
    quantize: bool = True,
) -> Network:
    """Data-based threshold normalization followed by 101-state quantization.

    Layer ``l`` is rescaled so that the largest activation seen on the
    calibration images drives one spike per step at threshold ``v_th``.
    A layer whose activations never exceed zero is left as is.
    """
    x = np.asarray(calibration_images, dtype=float).reshape(len(calibration_images), -1) / i_max
    peaks = max_activations(analog, x)
    ws, prev = [], 1.0
    for w, peak in zip(analog.weights, peaks):
        if peak <= 0:
            ws.append(w.copy())
            prev = 1.0
            continue
        ws.append(w * (v_th * prev / peak))
        prev = peak
    net = Network(ws, [v_th] * len(ws))
    if not quantize or not all(np.abs(w).max() > 0 for w in ws):
        return net
    return effective_weights(quantize_network(net, ladder or build_ladder()))


def evaluate_rate(
    net: Network,
    dataset: LabeledDataset,
    t_total: int,
    rng: np.random.Generator,
    placement: str = "poisson-random",
    batch: int = 250,
):
    """Accuracy plus per-image spike counts per layer and predictions."""
    preds, counts = [], []
    for s in range(0, len(dataset), batch):
        spikes = encode_rate_batch(dataset.flat[s : s + batch], t_total, rng, placement, dataset.i_max)
        tr = forward_rate_spikes(net, spikes)
        preds.append(winners(tr))
        counts.append(np.stack([c.sum(axis=1) for c in tr.spike_counts], axis=1))
    preds = np.concatenate(preds)
    return float(np.mean(preds == dataset.labels)), np.concatenate(counts), preds
