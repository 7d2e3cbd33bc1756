"""Spike counts, decision latency, a calibrated energy model and sweeps."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import nnls

from .dataset import LabeledDataset
from .encoding import encode_rate_batch, ttfs_times
from .hardware import ConductanceNetwork, VariationSpec, apply_variation, effective_weights
from .snn import ForwardTrace, Network, firing_step, forward_rate_spikes, forward_ttfs_times, winners

BLOCKS = ("SA", "CM", "IF", "RPG")

# Fixed per-block shares of the fitted aggregate coefficients: the I&F block
# dominates, the refractory generator is about 2 %, and rate mode has none.
DEFAULT_SPLIT = {
    "ttfs": {"SA": 0.15, "CM": 0.25, "IF": 0.58, "RPG": 0.02},
    "rate": {"SA": 0.30, "CM": 0.30, "IF": 0.40, "RPG": 0.0},
}

# Mean spikes and nJ per image at T = 4 and T = 256 for both codings.
PUBLISHED_ANCHORS = [
    ("ttfs", 4, 162.0, 2.16),
    ("ttfs", 256, 162.0, 24.6),
    ("rate", 4, 49.5, 5.65),
    ("rate", 256, 30793.0, 372.0),
]


class CalibrationError(ValueError):
    pass


# -- counting ---------------------------------------------------------------


def decision_step(trace: ForwardTrace) -> np.ndarray:
    return firing_step(trace)


def count_spikes(trace: ForwardTrace, layers=None) -> np.ndarray:
    """Per-image, per-layer spike counts, shape ``(batch, n_layers)``.

    TTFS counts spikes emitted no later than the winner (through the window
    end when no output fired); rate counts every spike in the window.
    ``layers`` selects a subset of layer indices (input is 0).
    """
    idx = range(len(trace.times)) if layers is None else layers
    if trace.mode == "rate":
        return np.stack([trace.spike_counts[l].sum(axis=1) for l in idx], axis=1)
    horizon = decision_step(trace)[:, None]
    return np.stack(
        [(trace.fired[l] & (trace.times[l] <= horizon)).sum(axis=1) for l in idx], axis=1
    )


def latency(trace: ForwardTrace, dt: float = 1.0) -> np.ndarray:
    """Decision time per image in units of ``dt`` (µs by default)."""
    return decision_step(trace) * dt


# -- energy -----------------------------------------------------------------


@dataclass
class EnergyModel:
    """Linear event + static energy model per coding mode and circuit block.

    ``e_spike[mode][block]`` is nJ per spike and ``p_static[mode][block]`` nJ
    per µs of processing. ``time_basis`` picks what counts as processing time
    for TTFS: the full window (``window``) or the decision latency.
    """

    e_spike: dict
    p_static: dict
    dt: float = 1.0
    calibrated: bool = False
    time_basis: str = "window"

    def aggregate(self, mode: str) -> tuple[float, float]:
        return sum(self.e_spike[mode].values()), sum(self.p_static[mode].values())

    def predict(self, mode: str, spikes, t_total) -> np.ndarray:
        e, p = self.aggregate(mode)
        return e * np.asarray(spikes, dtype=float) + p * np.asarray(t_total, dtype=float) * self.dt

    def to_dict(self) -> dict:
        return asdict(self)


def calibrate_energy_model(anchors=PUBLISHED_ANCHORS, dt: float = 1.0, split=None, time_basis: str = "window") -> EnergyModel:
    """Non-negative least squares for ``E = e * N + p * T * dt`` per mode.

    ``anchors`` holds ``(mode, T_total, mean_spikes, energy_nJ)`` tuples and
    needs at least two linearly independent rows per mode.
    """
    split = split or DEFAULT_SPLIT
    e_spike, p_static = {}, {}
    modes = sorted({a[0] for a in anchors})
    for mode in modes:
        rows = np.array([[n, t * dt, en] for m, t, n, en in anchors if m == mode], dtype=float)
        if len(rows) < 2 or np.linalg.matrix_rank(rows[:, :2]) < 2:
            raise CalibrationError(f"{mode}: need two independent anchors, got {len(rows)}")
        coef, _ = nnls(rows[:, :2], rows[:, 2])
        shares = split[mode]
        e_spike[mode] = {b: coef[0] * shares[b] for b in BLOCKS}
        p_static[mode] = {b: coef[1] * shares[b] for b in BLOCKS}
    return EnergyModel(e_spike, p_static, dt, True, time_basis)


def uncalibrated_model(dt: float = 1.0) -> EnergyModel:
    zero = {m: {b: 0.0 for b in BLOCKS} for m in DEFAULT_SPLIT}
    return EnergyModel(zero, {m: dict(v) for m, v in zero.items()}, dt, False)


def estimate_energy(model: EnergyModel, mode: str, spikes: float, time_steps: float) -> dict:
    """Per-block energy (nJ) for ``spikes`` events over ``time_steps`` steps."""
    out = {
        b: model.e_spike[mode][b] * spikes + model.p_static[mode][b] * time_steps * model.dt
        for b in BLOCKS
    }
    out["total"] = sum(out[b] for b in BLOCKS)
    out["calibrated"] = model.calibrated
    return out


def estimate_trace_energy(trace: ForwardTrace, model: EnergyModel) -> dict:
    """Mean per-image energy for a batch trace."""
    spikes = float(count_spikes(trace).sum(axis=1).mean())
    if trace.mode == "ttfs" and model.time_basis == "latency":
        steps = float(decision_step(trace).mean())
    else:
        steps = float(trace.n_steps)
    return estimate_energy(model, trace.mode, spikes, steps)


# -- reports ----------------------------------------------------------------


@dataclass
class MetricsReport:
    mode: str
    t_total: int
    accuracy: float
    spikes_per_layer: list[float]
    latency_steps: float
    dt: float
    energy_blocks: dict
    calibrated: bool
    n_images: int

    @property
    def spikes_total(self) -> float:
        return float(sum(self.spikes_per_layer))

    @property
    def latency_us(self) -> float:
        return self.latency_steps * self.dt

    @property
    def energy_total(self) -> float:
        return float(sum(self.energy_blocks[b] for b in BLOCKS))

    def row(self) -> dict:
        r = {
            "mode": self.mode,
            "T": self.t_total,
            "accuracy": self.accuracy,
            "spikes": self.spikes_total,
            "latency_us": self.latency_us,
            "energy_nJ": self.energy_total,
        }
        r.update({f"E_{b}": self.energy_blocks[b] for b in BLOCKS})
        return r

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(spikes_total=self.spikes_total, latency_us=self.latency_us, energy_total=self.energy_total)
        return d


def run_ttfs(net: Network, dataset: LabeledDataset, t_max: int, batch: int = 500):
    """Predictions, per-layer spike counts and decision steps for every image."""
    x = ttfs_times(dataset.flat, t_max, dataset.i_max)
    preds, counts, steps = [], [], []
    for s in range(0, len(x), batch):
        tr = forward_ttfs_times(net, x[s : s + batch], t_max)
        preds.append(winners(tr))
        counts.append(count_spikes(tr))
        steps.append(decision_step(tr))
    return np.concatenate(preds), np.concatenate(counts), np.concatenate(steps)


def run_rate(net: Network, dataset: LabeledDataset, t_total: int, rng, placement="poisson-random", batch: int = 250):
    preds, counts = [], []
    for s in range(0, len(dataset), batch):
        spikes = encode_rate_batch(dataset.flat[s : s + batch], t_total, rng, placement, dataset.i_max)
        tr = forward_rate_spikes(net, spikes)
        preds.append(winners(tr))
        counts.append(count_spikes(tr))
    n = len(dataset)
    return np.concatenate(preds), np.concatenate(counts), np.full(n, t_total)


def measure(
    net: Network,
    dataset: LabeledDataset,
    mode: str,
    t_total: int,
    model: EnergyModel | None = None,
    rng=None,
    placement: str = "poisson-random",
) -> MetricsReport:
    model = model or uncalibrated_model()
    if mode == "ttfs":
        preds, counts, steps = run_ttfs(net, dataset, t_total)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        preds, counts, steps = run_rate(net, dataset, t_total, rng, placement)
    spikes = counts.mean(axis=0)
    basis = steps.mean() if (mode == "ttfs" and model.time_basis == "latency") else t_total
    energy = estimate_energy(model, mode, float(spikes.sum()), float(basis))
    return MetricsReport(
        mode,
        int(t_total),
        float(np.mean(preds == dataset.labels)),
        [float(c) for c in spikes],
        float(steps.mean()),
        model.dt,
        {b: energy[b] for b in BLOCKS},
        model.calibrated,
        len(dataset),
    )


def sweep_timesteps(
    networks: dict,
    dataset: LabeledDataset,
    t_list,
    model: EnergyModel | None = None,
    seed: int = 0,
    placement: str = "poisson-random",
) -> list[MetricsReport]:
    """Evaluate each ``{mode: network}`` entry at every window length.

    Rate encodings for cell ``(i, T)`` draw from ``SeedSequence([seed, i])``
    so rows are reproducible independently of the rest of the grid.
    """
    t_list = [int(t) for t in t_list]
    if not t_list:
        raise ValueError("empty time-step list")
    reports = []
    for mode, net in networks.items():
        for i, t in enumerate(t_list):
            rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
            reports.append(measure(net, dataset, mode, t, model, rng, placement))
    return reports


VARIATION_PARAMS = ("sigma_weight", "sigma_th", "r_synapse", "r_neuron")


@dataclass
class VariationCell:
    network: str
    mode: str
    param: str
    magnitude: float
    trial: int
    accuracy: float

    def row(self) -> dict:
        return {
            "network": self.network,
            "mode": self.mode,
            "type": self.param,
            "magnitude": self.magnitude,
            "trial": self.trial,
            "accuracy": self.accuracy,
        }


def parse_grid(text: str) -> list[float]:
    """``a:b:n`` gives n evenly spaced values; otherwise a comma list."""
    text = text.strip()
    if not text:
        raise ValueError("empty grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid {text!r} must be start:stop:count")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("empty grid")
        return [float(v) for v in np.linspace(a, b, n)]
    vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty grid")
    return vals


def sweep_variation(
    networks: dict,
    dataset: LabeledDataset,
    param: str,
    grid,
    trials: int = 5,
    seed: int = 0,
    t_total: int = 64,
    placement: str = "poisson-random",
) -> list[VariationCell]:
    """Accuracy under one injected non-ideality across a magnitude grid.

    ``networks`` maps a name to ``(ConductanceNetwork, mode)``. Trial ``k``
    at grid index ``g`` uses ``SeedSequence([seed, g, k])`` for the injection,
    shared by all networks so that paired comparisons see the same stream,
    and a separate child stream for rate encoding.
    """
    if param not in VARIATION_PARAMS:
        raise ValueError(f"unknown variation parameter {param!r}")
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    cells = []
    for name, (cnet, mode) in networks.items():
        for g, mag in enumerate(grid):
            for k in range(trials):
                inj_seq, enc_seq = np.random.SeedSequence([seed, g, k]).spawn(2)
                spec = VariationSpec(**{param: float(mag)})
                net = apply_variation(cnet, spec, np.random.default_rng(inj_seq)) if not spec.is_identity else effective_weights(cnet)
                if mode == "ttfs":
                    preds, _, _ = run_ttfs(net, dataset, t_total)
                else:
                    preds, _, _ = run_rate(net, dataset, t_total, np.random.default_rng(enc_seq), placement)
                cells.append(VariationCell(name, mode, param, float(mag), k, float(np.mean(preds == dataset.labels))))
    return cells


def summarize_variation(cells: list[VariationCell]) -> list[dict]:
    groups: dict = {}
    for c in cells:
        groups.setdefault((c.network, c.mode, c.param, c.magnitude), []).append(c.accuracy)
    return [
        {"network": n, "mode": m, "type": p, "magnitude": g, "mean": float(np.mean(a)), "std": float(np.std(a)), "trials": len(a)}
        for (n, m, p, g), a in groups.items()
    ]


def write_csv(path, rows: list[dict], config: dict | None = None) -> None:
    """CSV with an optional leading ``# config: {...}`` line."""
    with open(path, "w", newline="") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def read_csv(path) -> tuple[dict | None, list[dict]]:
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    config = None
    if lines and lines[0].startswith("# config: "):
        config = json.loads(lines[0][len("# config: ") :])
        lines = lines[1:]
    return config, list(csv.DictReader(lines))
