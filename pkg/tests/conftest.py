import numpy as np
import pytest
import torch

from lecvad.featio import SynthConfig, synth_dataset

torch.set_num_threads(1)

ACCEPTANCE_LINES = []


def central_diff(fn, x: torch.Tensor, h=1e-5) -> torch.Tensor:
    """Central finite differences of a scalar function ``fn`` w.r.t. every entry of ``x``."""
    grad = torch.zeros_like(x)
    flat, gflat = x.data.view(-1), grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        up = float(fn())
        flat[i] = orig - h
        down = float(fn())
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def rel_err(a, b, floor=1e-6):
    a, b = torch.as_tensor(a), torch.as_tensor(b)
    return ((a - b).norm() / max(a.norm().item(), b.norm().item(), floor)).item()


@pytest.fixture(autouse=True)
def _seed_torch():
    # keeps tests that draw from torch's global generator independent of run order
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """A small synthetic split, fast enough for training tests."""
    cfg = SynthConfig(C=2, d=8, n_train=12, n_test=6, T_min=20, T_max=40)
    out = tmp_path_factory.mktemp("tiny")
    train, test, _ = synth_dataset(cfg, 3, out)
    return train, test, out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
