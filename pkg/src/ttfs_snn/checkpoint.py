"""Versioned JSON checkpoints with a content hash.

Floats are written with Python's shortest round-trip repr, so
save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hardware import ConductanceLadder, ConductanceNetwork
from .rate_baseline import AnalogNetwork
from .snn import Network

FORMAT_VERSION = 1
MODES = ("ttfs", "rate-analog", "rate-snn")


class CheckpointError(ValueError):
    pass


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)


def _digest(obj) -> str:
    return hashlib.sha256(_dump(obj).encode()).hexdigest()


def _mat(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unmat(d: dict, dtype=float) -> np.ndarray:
    arr = np.asarray(d["data"], dtype=dtype)
    if arr.size != int(np.prod(d["shape"])):
        raise CheckpointError(f"array of shape {d['shape']} holds {arr.size} values")
    return arr.reshape(d["shape"])


def _mats(xs, dtype=float):
    return None if xs is None else [_unmat(x, dtype) for x in xs]


@dataclass
class Checkpoint:
    mode: str
    network: Network | AnalogNetwork
    quantized: ConductanceNetwork | None = None
    history: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise CheckpointError(f"unknown mode {self.mode!r}")

    @property
    def layer_sizes(self) -> list[int]:
        return self.network.layer_sizes

    def to_document(self) -> dict:
        net = self.network
        doc = {
            "format_version": FORMAT_VERSION,
            "mode": self.mode,
            "layer_sizes": self.layer_sizes,
            "weights": [_mat(w) for w in net.weights],
            "thresholds": None,
            "dead": None,
            "quantized": None,
            "history": self.history,
            "history_digest": _digest(self.history),
            "config": self.config,
            "extra": self.extra,
        }
        if isinstance(net, Network):
            doc["thresholds"] = [t.tolist() for t in net.thresholds]
            doc["dead"] = None if net.dead is None else [d.astype(int).tolist() for d in net.dead]
        q = self.quantized
        if q is not None:
            as_int = lambda xs: None if xs is None else [_mat(x.astype(np.int64)) for x in xs]
            doc["quantized"] = {
                "ladder": q.ladder.to_dict(),
                "k_pos": as_int(q.k_pos),
                "k_neg": as_int(q.k_neg),
                "scales": list(q.scales),
                "thresholds": [t.tolist() for t in q.thresholds],
                "dead_pos": as_int(q.dead_pos),
                "dead_neg": as_int(q.dead_neg),
                "dead": as_int(q.dead),
            }
        doc["content_hash"] = _digest(doc)
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "Checkpoint":
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported format_version {version!r}")
        body = {k: v for k, v in doc.items() if k != "content_hash"}
        if _digest(body) != doc.get("content_hash"):
            raise CheckpointError("content hash mismatch: checkpoint is corrupted or edited")
        ws = [_unmat(w) for w in doc["weights"]]
        if doc["mode"] == "rate-analog":
            net = AnalogNetwork(ws)
        else:
            dead = None if doc["dead"] is None else [np.asarray(d, dtype=bool) for d in doc["dead"]]
            net = Network(ws, [np.asarray(t, dtype=float) for t in doc["thresholds"]], dead)
        if net.layer_sizes != doc["layer_sizes"]:
            raise CheckpointError(f"layer sizes {doc['layer_sizes']} do not match weights {net.layer_sizes}")
        q = doc.get("quantized")
        cnet = None
        if q is not None:
            as_bool = lambda xs: None if xs is None else [a.astype(bool) for a in _mats(xs, np.int64)]
            cnet = ConductanceNetwork(
                ConductanceLadder.from_dict(q["ladder"]),
                _mats(q["k_pos"], np.int64),
                _mats(q["k_neg"], np.int64),
                [float(s) for s in q["scales"]],
                [np.asarray(t, dtype=float) for t in q["thresholds"]],
                as_bool(q["dead_pos"]),
                as_bool(q["dead_neg"]),
                as_bool(q["dead"]),
            )
        return cls(doc["mode"], net, cnet, doc["history"], doc["config"], doc.get("extra", {}))


def dumps(ckpt: Checkpoint) -> str:
    return _dump(ckpt.to_document()) + "\n"


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_text(dumps(ckpt))


def load_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({exc})") from exc
    return Checkpoint.from_document(doc)
