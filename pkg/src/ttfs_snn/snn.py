"""Non-leaky integrate-and-fire dynamics for TTFS and rate-coded networks.

Time runs over steps ``0..t_max`` inclusive in TTFS mode. A neuron that never
fires carries the sentinel time ``t_max`` and ``fired == False``; a neuron
that genuinely fires on the last step has the same time but ``fired == True``.

The TTFS pass is computed layer by layer: the membrane of every neuron at
every step is the cumulative sum of the weight rows of pre-neurons that have
fired by then, so the first threshold crossing is the firing time. Refractory
behaviour is implied, since only that first crossing is ever used.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .encoding import SpikeSchedule

_CHUNK_ELEMS = 6_000_000


@dataclass
class Network:
    """Fully connected spiking network.

    ``weights[l]`` has shape ``(n_l, n_{l+1})``; ``thresholds[l]`` holds one
    value per neuron of layer ``l + 1``. ``dead[l]`` optionally masks neurons of
    layer ``l + 1`` that can never emit a spike.
    """

    weights: list[np.ndarray]
    thresholds: list[np.ndarray]
    dead: list[np.ndarray] | None = None

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.thresholds = [
            np.broadcast_to(np.asarray(th, dtype=float), (w.shape[1],)).copy()
            for th, w in zip(self.thresholds, self.weights)
        ]
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"weight shapes do not chain: {a.shape} -> {b.shape}")
        if len(self.thresholds) != len(self.weights):
            raise ValueError("need one threshold vector per weight layer")
        if self.dead is not None:
            self.dead = [np.asarray(d, dtype=bool) for d in self.dead]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "Network":
        return Network(
            [w.copy() for w in self.weights],
            [t.copy() for t in self.thresholds],
            None if self.dead is None else [d.copy() for d in self.dead],
        )

    def dead_mask(self, layer: int) -> np.ndarray | None:
        """Dead mask for weight layer ``layer`` (neurons of layer ``layer + 1``)."""
        return None if self.dead is None else self.dead[layer]


@dataclass
class ForwardTrace:
    """Result of simulating one or more images.

    Per-layer arrays include the input layer at index 0 and have a leading
    batch axis. ``membrane`` (only when recorded) has shape
    ``(batch, n_steps_axis, n)`` per non-input layer.
    """

    mode: str
    n_steps: int
    times: list[np.ndarray]
    fired: list[np.ndarray]
    final_membrane: list[np.ndarray]
    fire_membrane: list[np.ndarray] | None = None
    spike_counts: list[np.ndarray] | None = None
    membrane: list[np.ndarray] | None = None
    spikes: list[np.ndarray] | None = None
    batched: bool = True

    @property
    def batch_size(self) -> int:
        return self.times[0].shape[0]

    def cumulative_input(self, layer: int, t) -> np.ndarray:
        """S(t) for every neuron of ``layer``: fired at or before ``t``."""
        t = np.asarray(t)
        return self.fired[layer] & (self.times[layer] <= t)

    def image(self, b: int) -> "ForwardTrace":
        """Slice out image ``b`` (keeps a batch axis of 1)."""
        pick = lambda arrs: None if arrs is None else [a[b : b + 1] for a in arrs]
        return ForwardTrace(
            self.mode,
            self.n_steps,
            pick(self.times),
            pick(self.fired),
            pick(self.final_membrane),
            pick(self.fire_membrane),
            pick(self.spike_counts),
            pick(self.membrane),
            pick(self.spikes),
        )


def _ttfs_layer(t_pre, f_pre, w, th, dead, t_max, record):
    batch, n_pre = t_pre.shape
    n_post = w.shape[1]
    n_t = t_max + 1
    times = np.empty((batch, n_post), dtype=np.int64)
    fired = np.empty((batch, n_post), dtype=bool)
    v_fire = np.empty((batch, n_post))
    v_final = np.empty((batch, n_post))
    mem = np.empty((batch, n_t, n_post)) if record else None
    step = max(1, _CHUNK_ELEMS // (n_t * max(n_pre, n_post)))
    cols = np.arange(n_post)
    for s in range(0, batch, step):
        tp, fp = t_pre[s : s + step], f_pre[s : s + step]
        b = len(tp)
        onehot = np.zeros((b, n_t, n_pre))
        bi, ni = np.nonzero(fp)
        onehot[bi, tp[bi, ni], ni] = 1.0
        v = np.cumsum(onehot @ w, axis=1)
        cross = v > th
        if dead is not None:
            cross &= ~dead
        f = cross.any(axis=1)
        tt = np.where(f, cross.argmax(axis=1), t_max)
        times[s : s + b] = tt
        fired[s : s + b] = f
        v_fire[s : s + b] = v[np.arange(b)[:, None], tt, cols]
        v_final[s : s + b] = v[:, -1]
        if record:
            mem[s : s + b] = v
    return times, fired, v_fire, v_final, mem


def forward_ttfs_times(
    net: Network, input_times: np.ndarray, t_max: int, record: bool = False
) -> ForwardTrace:
    """Simulate a batch of TTFS inputs given as ``(batch, n_in)`` firing times."""
    t = np.atleast_2d(np.asarray(input_times, dtype=np.int64))
    if t.shape[1] != net.layer_sizes[0]:
        raise ValueError(
            f"schedule width {t.shape[1]} != input layer size {net.layer_sizes[0]}"
        )
    if t.min(initial=0) < 0 or t.max(initial=0) > t_max:
        raise ValueError("input firing times must lie in [0, t_max]")
    f = np.ones(t.shape, dtype=bool)
    times, fired, finals, at_fire, mems = [t], [f], [], [], []
    for layer, (w, th) in enumerate(zip(net.weights, net.thresholds)):
        t, f, vf, vl, m = _ttfs_layer(t, f, w, th, net.dead_mask(layer), t_max, record)
        times.append(t)
        fired.append(f)
        at_fire.append(vf)
        finals.append(vl)
        mems.append(m)
    return ForwardTrace(
        "ttfs", t_max, times, fired, finals, fire_membrane=at_fire,
        membrane=mems if record else None,
    )


def forward_ttfs(net: Network, schedule: SpikeSchedule, record: bool = True) -> ForwardTrace:
    """Single-image TTFS simulation.

    Raises ``ValueError`` when the schedule width does not match the input
    layer.
    """
    if schedule.mode != "ttfs":
        raise ValueError("forward_ttfs needs a ttfs schedule")
    return forward_ttfs_times(net, schedule.times[None, :], schedule.n_steps, record)


def forward_rate_spikes(net: Network, spikes: np.ndarray, record: bool = False) -> ForwardTrace:
    """Simulate rate-coded input rasters of shape ``(batch, t_total, n_in)``.

    Integrate-and-fire with reset by subtraction and no refractory period; at
    most one spike per neuron per step. A neuron fires once its membrane
    reaches the threshold, so a drive of exactly ``V_th`` per step yields one
    spike per step.
    """
    spikes = np.asarray(spikes, dtype=bool)
    if spikes.ndim == 2:
        spikes = spikes[None]
    batch, t_total, n_in = spikes.shape
    if n_in != net.layer_sizes[0]:
        raise ValueError(f"schedule width {n_in} != input layer size {net.layer_sizes[0]}")
    sizes = net.layer_sizes
    v = [np.zeros((batch, n)) for n in sizes[1:]]
    counts = [spikes.sum(axis=1)] + [np.zeros((batch, n), dtype=np.int64) for n in sizes[1:]]
    first = [np.full((batch, n), t_total, dtype=np.int64) for n in sizes]
    first[0] = np.where(spikes.any(axis=1), spikes.argmax(axis=1), t_total)
    rasters = [spikes] + [np.zeros((batch, t_total, n), dtype=bool) for n in sizes[1:]] if record else None
    mem = [np.zeros((batch, t_total, n)) for n in sizes[1:]] if record else None
    dead = [net.dead_mask(l) for l in range(len(net.weights))]
    for t in range(t_total):
        x = spikes[:, t].astype(float)
        for l, (w, th) in enumerate(zip(net.weights, net.thresholds)):
            v[l] += x @ w
            out = v[l] >= th
            if dead[l] is not None:
                out &= ~dead[l]
            v[l] -= th * out
            counts[l + 1] += out
            newly = out & (first[l + 1] == t_total)
            first[l + 1][newly] = t
            if record:
                rasters[l + 1][:, t] = out
                mem[l][:, t] = v[l]
            x = out.astype(float)
    fired = [c > 0 for c in counts]
    return ForwardTrace(
        "rate", t_total, first, fired, [vv.copy() for vv in v],
        spike_counts=counts, membrane=mem, spikes=rasters,
    )


def forward_rate(net: Network, schedule: SpikeSchedule, record: bool = True) -> ForwardTrace:
    if schedule.mode != "rate":
        raise ValueError("forward_rate needs a rate schedule")
    return forward_rate_spikes(net, schedule.spikes[None], record)


def winners(trace: ForwardTrace) -> np.ndarray:
    """Predicted class per image in the batch.

    TTFS: earliest output spike; simultaneous spikes go to the larger membrane
    at the firing step; if no output fires, the largest final membrane wins.
    Rate: most output spikes, then largest final membrane. Remaining ties go to
    the lowest index.
    """
    v_last = trace.final_membrane[-1]
    if trace.mode == "ttfs":
        t_out, f_out = trace.times[-1], trace.fired[-1]
        key = np.where(f_out, t_out, np.iinfo(np.int64).max)
        cand = key == key.min(axis=1, keepdims=True)
        score = np.where(cand, trace.fire_membrane[-1], -np.inf)
        pick = score.argmax(axis=1)
        none = ~f_out.any(axis=1)
        pick[none] = v_last[none].argmax(axis=1)
        return pick
    counts = trace.spike_counts[-1]
    cand = counts == counts.max(axis=1, keepdims=True)
    return np.where(cand, v_last, -np.inf).argmax(axis=1)


def infer_winner(trace: ForwardTrace, mode: str | None = None) -> int:
    """Class index for a single-image trace."""
    if mode is not None and mode != trace.mode:
        raise ValueError(f"trace is {trace.mode}, asked for {mode}")
    return int(winners(trace)[0])


def firing_step(trace: ForwardTrace) -> np.ndarray:
    """Decision step per image: winner spike time, or the window end on fallback."""
    if trace.mode == "rate":
        return np.full(trace.batch_size, trace.n_steps, dtype=np.int64)
    f_out = trace.fired[-1]
    t = np.where(f_out, trace.times[-1], np.iinfo(np.int64).max).min(axis=1)
    return np.where(f_out.any(axis=1), t, trace.n_steps)


def write_trace_csvs(trace: ForwardTrace, prefix, layer_names=None) -> list[str]:
    """Export per-layer rasters and membrane trajectories of image 0."""
    names = layer_names or (["input"] + [f"hidden{i}" for i in range(1, len(trace.times) - 1)] + ["output"])
    paths = []
    for l, name in enumerate(names):
        path = f"{prefix}_raster_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["neuron_index", "time_step"])
            if trace.mode == "ttfs":
                idx = np.flatnonzero(trace.fired[l][0])
                order = idx[np.lexsort((idx, trace.times[l][0][idx]))]
                w.writerows((int(i), int(trace.times[l][0][i])) for i in order)
            elif trace.spikes is not None:
                t, n = np.nonzero(trace.spikes[l][0])
                w.writerows((int(i), int(s)) for s, i in zip(t, n))
        paths.append(path)
    if trace.membrane is not None:
        for l, name in enumerate(names[1:]):
            path = f"{prefix}_membrane_{name}.csv"
            m = trace.membrane[l][0]
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["time_step", "neuron_index", "value"])
                for t in range(m.shape[0]):
                    w.writerows((t, j, repr(float(m[t, j]))) for j in range(m.shape[1]))
            paths.append(path)
    return paths
