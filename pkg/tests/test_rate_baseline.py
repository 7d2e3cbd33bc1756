import numpy as np
import pytest

from ttfs_snn.dataset import LabeledDataset
from ttfs_snn.hardware import build_ladder, representable_weights
from ttfs_snn.rate_baseline import (
    AnalogConfig,
    AnalogNetwork,
    convert_to_rate_snn,
    evaluate_rate,
    max_activations,
    train_analog,
)
from ttfs_snn.snn import Network, forward_rate_spikes


def blob_dataset(rng, n=120):
    labels = np.arange(n) % 3
    imgs = np.zeros((n, 4, 4), np.uint8)
    for i, y in enumerate(labels):
        imgs[i, y + 1, :] = 255
        imgs[i] |= rng.integers(0, 20, (4, 4)).astype(np.uint8)
    return LabeledDataset(imgs, labels)


def test_zero_epochs_and_seed_determinism(rng):
    ds = blob_dataset(rng)
    cfg = AnalogConfig(hidden=(5,), n_in=16, n_out=3, epochs=0, seed=2)
    a = train_analog(ds, cfg).network
    b = train_analog(ds, cfg).network
    for x, y in zip(a.weights, b.weights):
        np.testing.assert_array_equal(x, y)
    cfg2 = AnalogConfig(hidden=(5,), n_in=16, n_out=3, epochs=2, seed=2)
    c, d = train_analog(ds, cfg2), train_analog(ds, cfg2)
    np.testing.assert_array_equal(c.network.weights[0], d.network.weights[0])


def test_gradient_matches_finite_differences(rng):
    # One SGD step must equal -eta * numerical gradient of 0.5 * ||y - onehot||^2.
    ds = blob_dataset(rng, n=1)
    cfg = AnalogConfig(hidden=(4,), n_in=16, n_out=3, epochs=1, eta=1e-3, seed=0, lr_decay=1.0)
    start = train_analog(ds, AnalogConfig(hidden=(4,), n_in=16, n_out=3, epochs=0, seed=0)).network
    stepped = train_analog(ds, cfg).network
    x = ds.flat[0] / 255.0
    target = np.eye(3)[ds.labels[0]]

    def loss(ws):
        y = AnalogNetwork(ws).activations(x)[-1]
        return 0.5 * np.sum((y - target) ** 2)

    for l in range(2):
        num = np.zeros_like(start.weights[l])
        for idx in np.ndindex(num.shape):
            ws_p = [w.copy() for w in start.weights]
            ws_m = [w.copy() for w in start.weights]
            ws_p[l][idx] += 1e-6
            ws_m[l][idx] -= 1e-6
            num[idx] = (loss(ws_p) - loss(ws_m)) / 2e-6
        np.testing.assert_allclose(stepped.weights[l] - start.weights[l], -1e-3 * num, atol=1e-9)


def test_analog_learns_separable_task(rng):
    ds = blob_dataset(rng)
    res = train_analog(ds, AnalogConfig(hidden=(8,), n_in=16, n_out=3, epochs=5, eta=0.05, seed=1), ds)
    assert res.history[-1]["test_acc"] == 1.0


def test_conversion_quantizes_onto_lattice(rng):
    ds = blob_dataset(rng)
    analog = train_analog(ds, AnalogConfig(hidden=(8,), n_in=16, n_out=3, epochs=3, seed=1)).network
    lad = build_ladder()
    net = convert_to_rate_snn(analog, ds.images, 1.6, lad)
    for w in net.weights:
        s = np.abs(w).max() / lad.magnitudes[-1]
        lattice = representable_weights(lad, s)
        assert np.all(np.min(np.abs(w.ravel()[:, None] - lattice[None, :]), axis=1) < 1e-12)
    assert all(np.allclose(t, 1.6) for t in net.thresholds)


def test_conversion_normalizes_to_max_activation(rng):
    ds = blob_dataset(rng)
    analog = train_analog(ds, AnalogConfig(hidden=(8,), n_in=16, n_out=3, epochs=3, seed=1)).network
    net = convert_to_rate_snn(analog, ds.images, 1.0, quantize=False)
    conv = AnalogNetwork(net.weights)
    peaks = max_activations(conv, ds.flat / 255.0)
    np.testing.assert_allclose(peaks, [1.0, 1.0], rtol=1e-12)


def test_zero_analog_net_is_silent(rng):
    ds = blob_dataset(rng, n=10)
    net = convert_to_rate_snn(AnalogNetwork([np.zeros((16, 4)), np.zeros((4, 3))]), ds.images)
    acc, counts, _ = evaluate_rate(net, ds, 16, rng)
    assert counts[:, 1:].sum() == 0


def test_single_pixel_probe_prefers_strongest_weight(rng):
    w1 = np.zeros((4, 3))
    w1[2] = [0.2, 0.9, 0.5]
    analog = AnalogNetwork([w1, np.eye(3)])
    calib = np.full((1, 4), 255, np.uint8)
    net = convert_to_rate_snn(analog, calib, 1.0, quantize=False)
    probe = np.zeros((1, 4))
    probe[0, 2] = 255
    from ttfs_snn.encoding import encode_rate_batch

    tr = forward_rate_spikes(net, encode_rate_batch(probe, 64, rng))
    counts = tr.spike_counts[1][0]
    assert counts.argmax() == 1


def test_rate_proportionality_single_neuron():
    # Spike count of one IF neuron driven every step grows linearly in w / V_th.
    ratios = np.linspace(0.05, 1.0, 20)
    counts = []
    for r in ratios:
        net = Network([np.array([[r]])], [1.0])
        counts.append(forward_rate_spikes(net, np.ones((1, 200, 1), bool)).spike_counts[1][0, 0])
    slope = np.polyfit(ratios, counts, 1)[0]
    assert abs(slope / 200 - 1) < 0.05


def test_evaluate_rate_shapes(rng):
    ds = blob_dataset(rng, n=12)
    net = Network([rng.normal(0.2, 0.3, (16, 5)), rng.normal(0.2, 0.3, (5, 3))], [0.5, 0.5])
    acc, counts, preds = evaluate_rate(net, ds, 8, rng, batch=5)
    assert counts.shape == (12, 3) and preds.shape == (12,) and 0 <= acc <= 1
