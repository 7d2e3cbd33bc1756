"""Differential conductance-pair mapping and hardware non-idealities.

Each synapse is a pair of devices ``(G+, G-)`` programmed to ladder indices
``(k+, k-)`` with ``w = s * (G(k+) - G(k-))``. Index 0 is the unpulsed state
``G_min`` and indices 1..50 are the pulsed states, so a layer can represent
50 magnitudes per sign plus zero: 101 states.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .snn import Network

N_PULSES = 50


@dataclass(frozen=True)
class ConductanceLadder:
    levels: np.ndarray
    model: str = "saturating"
    g_min: float = 0.0
    g_max: float = 1.0
    curvature: float | None = None

    @property
    def magnitudes(self) -> np.ndarray:
        """Realizable ``G(k) - G_min`` for k = 0..50."""
        return self.levels - self.levels[0]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "g_min": self.g_min,
            "g_max": self.g_max,
            "curvature": self.curvature,
            "levels": [float(x) for x in self.levels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConductanceLadder":
        return cls(np.asarray(d["levels"], dtype=float), d["model"], d["g_min"], d["g_max"], d["curvature"])


def build_ladder(
    model: str = "saturating",
    g_min: float = 0.0,
    g_max: float = 1.0,
    curvature: float = 15.0,
    table=None,
) -> ConductanceLadder:
    """Conductance after 0..50 pulses.

    ``saturating`` follows ``1 - exp(-k / curvature)`` normalized to hit
    ``g_max`` at 50 pulses; ``table`` takes 51 measured values verbatim.
    """
    k = np.arange(N_PULSES + 1, dtype=float)
    if model == "table":
        levels = np.asarray(table, dtype=float)
        if levels.shape != (N_PULSES + 1,):
            raise ValueError(f"conductance table needs {N_PULSES + 1} entries")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("conductance table must be strictly increasing")
        return ConductanceLadder(levels, "table", float(levels[0]), float(levels[-1]), None)
    if not g_max > g_min >= 0:
        raise ValueError("need g_max > g_min >= 0")
    if model == "linear":
        levels = g_min + k * (g_max - g_min) / N_PULSES
        return ConductanceLadder(levels, "linear", g_min, g_max, None)
    if model == "saturating":
        if not curvature > 0:
            raise ValueError("saturating ladder needs curvature > 0")
        shape = -np.expm1(-k / curvature) / -np.expm1(-N_PULSES / curvature)
        levels = g_min + (g_max - g_min) * shape
        levels[-1] = g_max
        return ConductanceLadder(levels, "saturating", g_min, g_max, curvature)
    raise ValueError(f"unknown ladder model {model!r}")


@dataclass
class ConductanceNetwork:
    """Hardware image of a network: ladder indices per device.

    ``thresholds`` are in conductance units (software threshold divided by the
    layer scale). ``dead_pos``/``dead_neg`` mark stuck-at-off devices and
    ``dead`` marks stuck-at-off neurons.
    """

    ladder: ConductanceLadder
    k_pos: list[np.ndarray]
    k_neg: list[np.ndarray]
    scales: list[float]
    thresholds: list[np.ndarray]
    dead_pos: list[np.ndarray] | None = None
    dead_neg: list[np.ndarray] | None = None
    dead: list[np.ndarray] | None = None

    def conductances(self, layer: int) -> tuple[np.ndarray, np.ndarray]:
        g = self.ladder.levels
        gp, gn = g[self.k_pos[layer]], g[self.k_neg[layer]]
        if self.dead_pos is not None:
            gp = np.where(self.dead_pos[layer], 0.0, gp)
            gn = np.where(self.dead_neg[layer], 0.0, gn)
        return gp, gn

    def copy(self) -> "ConductanceNetwork":
        cp = lambda xs: None if xs is None else [x.copy() for x in xs]
        return replace(
            self,
            k_pos=cp(self.k_pos),
            k_neg=cp(self.k_neg),
            scales=list(self.scales),
            thresholds=cp(self.thresholds),
            dead_pos=cp(self.dead_pos),
            dead_neg=cp(self.dead_neg),
            dead=cp(self.dead),
        )


def _nearest_index(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    hi = np.clip(np.searchsorted(grid, values), 1, len(grid) - 1)
    lo = hi - 1
    return np.where(values - grid[lo] <= grid[hi] - values, lo, hi)


def quantize_network(net: Network, ladder: ConductanceLadder) -> ConductanceNetwork:
    """Normalize each layer to the ladder span and snap to the nearest state."""
    mags = ladder.magnitudes
    k_pos, k_neg, scales, ths = [], [], [], []
    for l, (w, th) in enumerate(zip(net.weights, net.thresholds)):
        peak = float(np.abs(w).max())
        if peak == 0.0:
            raise ValueError(
                f"layer {l} is all zeros: no scale can map it onto the ladder "
                "(train the network or drop the layer)"
            )
        s = peak / mags[-1]
        k = _nearest_index(np.abs(w) / s, mags)
        k_pos.append(np.where(w > 0, k, 0).astype(np.int64))
        k_neg.append(np.where(w < 0, k, 0).astype(np.int64))
        scales.append(s)
        ths.append(np.asarray(th, dtype=float) / s)
    dead = None if net.dead is None else [d.copy() for d in net.dead]
    return ConductanceNetwork(ladder, k_pos, k_neg, scales, ths, dead=dead)


def effective_weights(cnet: ConductanceNetwork, fold_scale: bool = True) -> Network:
    """Software-equivalent network.

    With ``fold_scale`` the layer scale multiplies weights and thresholds
    back into software units; without it the network runs directly in
    conductance units. Firing times are identical either way.
    """
    ws, ths = [], []
    for l, s in enumerate(cnet.scales):
        gp, gn = cnet.conductances(l)
        f = s if fold_scale else 1.0
        ws.append(f * (gp - gn))
        ths.append(f * cnet.thresholds[l])
    dead = None if cnet.dead is None else [d.copy() for d in cnet.dead]
    return Network(ws, ths, dead)


def representable_weights(ladder: ConductanceLadder, scale: float = 1.0) -> np.ndarray:
    m = ladder.magnitudes
    return np.unique(np.concatenate([-m[::-1], m])) * scale


# -- non-idealities ---------------------------------------------------------


@dataclass
class VariationSpec:
    sigma_weight: float = 0.0
    sigma_th: float = 0.0
    r_synapse: float = 0.0
    r_neuron: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_weight", "sigma_th", "r_synapse", "r_neuron"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("r_synapse", "r_neuron"):
            if getattr(self, name) > 1:
                raise ValueError(f"{name} must be <= 1")

    @property
    def is_identity(self) -> bool:
        return not (self.sigma_weight or self.sigma_th or self.r_synapse or self.r_neuron)


def _as_network(target) -> tuple[Network, list[float]]:
    """Network plus per-layer full-scale weight used for zero-weight noise."""
    if isinstance(target, ConductanceNetwork):
        full = [s * target.ladder.magnitudes[-1] for s in target.scales]
        return effective_weights(target), full
    net = target.copy()
    full = [float(np.abs(w).max()) or 1.0 for w in net.weights]
    return net, full


def apply_device_variation(target, sigma_weight: float, rng: np.random.Generator) -> Network:
    """Device-to-device spread: nonzero weights scale by N(1, sigma^2).

    Exact zeros become N(0, sigma) in units of the layer's full-scale weight.
    One draw per synapse.
    """
    net, full = _as_network(target)
    if sigma_weight == 0:
        return net
    for l, w in enumerate(net.weights):
        gain = rng.normal(1.0, sigma_weight, w.shape)
        noise = rng.normal(0.0, sigma_weight, w.shape) * full[l]
        net.weights[l] = np.where(w != 0, w * gain, noise)
    return net


def apply_threshold_variation(thresholds, sigma_th: float, rng: np.random.Generator):
    """``max(V_th * N(1, sigma^2), 0)`` per neuron.

    Accepts a list of threshold vectors or a ``Network`` (returned as a copy).
    """
    if isinstance(thresholds, Network):
        net = thresholds.copy()
        net.thresholds = apply_threshold_variation(net.thresholds, sigma_th, rng)
        return net
    if sigma_th == 0:
        return [np.array(t, dtype=float) for t in thresholds]
    return [
        np.maximum(np.asarray(t) * rng.normal(1.0, sigma_th, np.shape(t)), 0.0)
        for t in thresholds
    ]


def _exact_fraction(shape, ratio: float, rng) -> np.ndarray:
    n = int(np.prod(shape))
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[: int(round(ratio * n))]] = True
    return mask.reshape(shape)


def apply_stuck_at_off(target, r_synapse: float, r_neuron: float, rng: np.random.Generator):
    """Kill a fraction of synaptic devices and of neurons.

    A dead device conducts nothing; a dead neuron never spikes. For a
    ``ConductanceNetwork`` the faults are recorded on the devices and the
    returned object is a new ``ConductanceNetwork``. A plain ``Network`` is
    treated as a pair array with ``G_min = 0``: a weight vanishes when the
    device carrying it dies. Returns ``(perturbed, dead_neuron_masks)``.
    """
    if isinstance(target, ConductanceNetwork):
        out = target.copy()
        pos, neg = [], []
        for kp in out.k_pos:
            both = _exact_fraction((2,) + kp.shape, r_synapse, rng)
            pos.append(both[0])
            neg.append(both[1])
        if out.dead_pos is not None:
            pos = [a | b for a, b in zip(pos, out.dead_pos)]
            neg = [a | b for a, b in zip(neg, out.dead_neg)]
        out.dead_pos, out.dead_neg = pos, neg
        sizes = [kp.shape[1] for kp in out.k_pos]
    else:
        out = target.copy()
        for l, w in enumerate(out.weights):
            both = _exact_fraction((2,) + w.shape, r_synapse, rng)
            killed = np.where(w >= 0, both[0], both[1])
            out.weights[l] = np.where(killed, 0.0, w)
        sizes = [w.shape[1] for w in out.weights]
    masks = [_exact_fraction((n,), r_neuron, rng) for n in sizes]
    if out.dead is not None:
        masks = [a | b for a, b in zip(masks, out.dead)]
    out.dead = masks
    return out, masks


def apply_variation(cnet: ConductanceNetwork, spec: VariationSpec, rng=None) -> Network:
    """All four injections on a quantized network, in hardware order.

    Stuck-at-off faults act on devices before differencing; device and
    threshold spread are then drawn on the effective network.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    if spec.r_synapse or spec.r_neuron:
        cnet, _ = apply_stuck_at_off(cnet, spec.r_synapse, spec.r_neuron, rng)
    net = apply_device_variation(cnet, spec.sigma_weight, rng)
    if spec.sigma_th:
        net = apply_threshold_variation(net, spec.sigma_th, rng)
    return net
