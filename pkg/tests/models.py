"""Cached reference networks shared by the MNIST-level tests."""

import hashlib
import json
import os
import time
from pathlib import Path

from ttfs_snn.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ttfs_snn.dataset import LabeledDataset
from ttfs_snn.rate_baseline import AnalogConfig, AnalogNetwork, convert_to_rate_snn, train_analog
from ttfs_snn.snn import Network
from ttfs_snn.training import TrainConfig, train

CACHE = Path(os.environ.get("TTFS_SNN_CACHE", Path.home() / ".cache" / "ttfs-snn"))
N_VAL = 5000
ONE_HOUR = 3600.0

def _key(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def _split(train_full: LabeledDataset):
    n = len(train_full) - N_VAL
    return train_full.subset(n), train_full.subset(N_VAL, start=n)


def trained_ttfs(train_full, hidden: int, budget: float = ONE_HOUR) -> Checkpoint:
    # Selection uses a held-out slice of the training split, never the test set.
    cfg = TrainConfig(hidden=(hidden,), max_seconds=budget - 300)
    path = CACHE / f"ttfs-{hidden}-{_key(cfg.to_dict())}.json"
    if path.exists():
        return load_checkpoint(path)
    fit, val = _split(train_full)
    t0 = time.monotonic()
    res = train(fit, cfg, val)
    seconds = time.monotonic() - t0
    ck = Checkpoint("ttfs", res.network, history=res.history, config=cfg.to_dict(),
                    extra={"train_seconds": seconds, "stopped": res.stopped, "best_epoch": res.best_epoch})
    CACHE.mkdir(parents=True, exist_ok=True)
    save_checkpoint(path, ck)
    return ck


def trained_rate(train_full, hidden: int = 128) -> tuple[AnalogNetwork, Network]:
    cfg = AnalogConfig(hidden=(hidden,))
    path = CACHE / f"analog-{hidden}-{_key(cfg.to_dict())}.json"
    if path.exists():
        analog = load_checkpoint(path).network
    else:
        analog = train_analog(train_full, cfg).network
        CACHE.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, Checkpoint("rate-analog", analog, config=cfg.to_dict()))
    return analog, convert_to_rate_snn(analog, train_full.images, 1.6, quantize=False)


