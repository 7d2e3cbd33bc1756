import json

import numpy as np
import pytest

from ttfs_snn.checkpoint import Checkpoint, CheckpointError, dumps, load_checkpoint, save_checkpoint
from ttfs_snn.hardware import build_ladder, effective_weights, quantize_network
from ttfs_snn.rate_baseline import AnalogNetwork
from ttfs_snn.snn import Network


def make(rng):
    net = Network([rng.normal(0, 0.3, (6, 4)), rng.normal(0, 0.3, (4, 3))], [1.6, np.array([1.0, 1.2, 1.4])])
    hist = [{"epoch": 0, "eta": 0.02, "train_acc": 0.5, "test_acc": 0.4, "mean_loss": 1 / 3}]
    return Checkpoint("ttfs", net, history=hist, config={"seed": 1})


def test_round_trip_is_byte_identical(tmp_path, rng):
    ck = make(rng)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(p1, ck)
    save_checkpoint(p2, load_checkpoint(p1))
    assert p1.read_bytes() == p2.read_bytes()
    back = load_checkpoint(p1)
    for a, b in zip(ck.network.weights, back.network.weights):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.network.thresholds[1], [1.0, 1.2, 1.4])


def test_quantized_section_round_trip(tmp_path, rng):
    ck = make(rng)
    ck.quantized = quantize_network(ck.network, build_ladder())
    p = tmp_path / "q.json"
    save_checkpoint(p, ck)
    back = load_checkpoint(p)
    assert dumps(back) == p.read_text()
    for a, b in zip(effective_weights(ck.quantized).weights, effective_weights(back.quantized).weights):
        np.testing.assert_array_equal(a, b)


def test_analog_round_trip(tmp_path, rng):
    ck = Checkpoint("rate-analog", AnalogNetwork([rng.normal(size=(3, 2))]))
    p = tmp_path / "a.json"
    save_checkpoint(p, ck)
    assert isinstance(load_checkpoint(p).network, AnalogNetwork)


def test_tamper_detected(tmp_path, rng):
    p = tmp_path / "a.json"
    save_checkpoint(p, make(rng))
    doc = json.loads(p.read_text())
    doc["weights"][0]["data"][0] += 1e-3
    p.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="hash"):
        load_checkpoint(p)


def test_bad_version_and_mode(tmp_path, rng):
    doc = make(rng).to_document()
    doc["format_version"] = 99
    with pytest.raises(CheckpointError, match="format_version"):
        Checkpoint.from_document(doc)
    with pytest.raises(CheckpointError):
        Checkpoint("spiky", make(rng).network)
    p = tmp_path / "x.json"
    p.write_text("not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_history_digest_present(rng):
    doc = make(rng).to_document()
    assert len(doc["history_digest"]) == 64
