"""Time-to-first-spike spiking network simulator, trainer and hardware model."""

from .dataset import LabeledDataset, load_mnist
from .encoding import SpikeSchedule, encode_rate, encode_ttfs
from .snn import ForwardTrace, Network, forward_rate, forward_ttfs, infer_winner

__all__ = [
    "ForwardTrace",
    "LabeledDataset",
    "Network",
    "SpikeSchedule",
    "encode_rate",
    "encode_ttfs",
    "forward_rate",
    "forward_ttfs",
    "infer_winner",
    "load_mnist",
]

__version__ = "0.1.0"
