"""Pixel-to-spike encoders: time-to-first-spike and Poisson rate."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .dataset import I_MAX


@dataclass
class SpikeSchedule:
    """Stimulus for the input layer.

    ``ttfs`` mode stores one integer firing time per input neuron in
    ``[0, t_max]``. ``rate`` mode stores a ``(t_total, n)`` boolean raster.
    """

    mode: Literal["ttfs", "rate"]
    n_steps: int
    times: np.ndarray | None = None
    spikes: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.times) if self.mode == "ttfs" else self.spikes.shape[1]

    def raster(self) -> list[tuple[int, int]]:
        """``(neuron_index, time_step)`` pairs sorted by time."""
        if self.mode == "ttfs":
            order = np.lexsort((np.arange(len(self.times)), self.times))
            return [(int(i), int(self.times[i])) for i in order]
        t, n = np.nonzero(self.spikes)
        return [(int(i), int(s)) for s, i in zip(t, n)]


def ttfs_times(pixels: np.ndarray, t_max: int, i_max: int = I_MAX) -> np.ndarray:
    """Vectorized TTFS encoding; works on any array shape."""
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    pixels = np.asarray(pixels, dtype=np.int64)
    # Integer arithmetic keeps floor() exact at bin edges.
    return ((i_max - pixels) * t_max) // i_max


def encode_ttfs(image: np.ndarray, t_max: int, i_max: int = I_MAX) -> SpikeSchedule:
    """One spike per pixel; brighter pixels fire earlier, zero fires at ``t_max``."""
    times = ttfs_times(np.ravel(image), t_max, i_max)
    return SpikeSchedule("ttfs", t_max, times=times)


def rate_counts(
    pixels: np.ndarray, t_total: int, rng: np.random.Generator, i_max: int = I_MAX
) -> np.ndarray:
    lam = np.asarray(pixels, dtype=float) / i_max * t_total
    return np.minimum(rng.poisson(lam), t_total)


def encode_rate(
    image: np.ndarray,
    t_total: int,
    rng: np.random.Generator,
    placement: Literal["poisson-random", "fill-from-last"] = "poisson-random",
    i_max: int = I_MAX,
) -> SpikeSchedule:
    """Poisson spike counts with mean ``I/I_max * t_total`` per pixel.

    ``poisson-random`` scatters each neuron's spikes uniformly over the window;
    ``fill-from-last`` packs them into the final time steps.
    """
    if t_total < 1:
        raise ValueError("t_total must be >= 1")
    counts = rate_counts(np.ravel(image), t_total, rng, i_max)
    return SpikeSchedule("rate", t_total, spikes=place_spikes(counts, t_total, rng, placement))


def place_spikes(counts, t_total, rng=None, placement="poisson-random") -> np.ndarray:
    """Spread per-neuron spike counts over ``t_total`` steps.

    ``counts`` has shape ``(..., n)``; the result is ``(..., t_total, n)``.
    """
    counts = np.asarray(counts)
    steps = np.arange(t_total)[:, None]
    if placement == "fill-from-last":
        return steps >= (t_total - counts)[..., None, :]
    if placement != "poisson-random":
        raise ValueError(f"unknown placement {placement!r}")
    # Rank of a uniform key within each column = random permutation of steps.
    keys = rng.random(counts.shape[:-1] + (t_total, counts.shape[-1]))
    ranks = keys.argsort(axis=-2).argsort(axis=-2)
    return ranks < counts[..., None, :]


def encode_rate_batch(
    images: np.ndarray,
    t_total: int,
    rng: np.random.Generator,
    placement: str = "poisson-random",
    i_max: int = I_MAX,
) -> np.ndarray:
    """Rate rasters ``(batch, t_total, n)`` for flattened ``(batch, n)`` images."""
    if t_total < 1:
        raise ValueError("t_total must be >= 1")
    counts = rate_counts(images, t_total, rng, i_max)
    return place_spikes(counts, t_total, rng, placement)


def write_raster_csv(path, schedule: SpikeSchedule) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["neuron_index", "time_step"])
        w.writerows(schedule.raster())
