import os
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(os.environ.get("TTFS_SNN_DATA", "/root/data/mnist"))


def have_mnist() -> bool:
    try:
        from ttfs_snn.dataset import find_split

        find_split(DATA_DIR, "train")
        find_split(DATA_DIR, "test")
        return True
    except (FileNotFoundError, OSError):
        return False


needs_mnist = pytest.mark.skipif(not have_mnist(), reason=f"MNIST not found under {DATA_DIR}")


@pytest.fixture(scope="session")
def mnist_test():
    from ttfs_snn.dataset import load_mnist

    return load_mnist(DATA_DIR, "test")


@pytest.fixture(scope="session")
def mnist_train():
    from ttfs_snn.dataset import load_mnist

    return load_mnist(DATA_DIR, "train")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
