import hypothesis
import pytest
import torch

from uniarm import model as M

torch.set_num_threads(1)

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def tiny_config():
    return M.ModelConfig(vocab_size=16, d_model=8, n_layers=1, n_heads=2, max_seq_len=24)


@pytest.fixture
def small_config():
    return M.ModelConfig(vocab_size=32, d_model=16, n_layers=2, n_heads=4, max_seq_len=32)


def randomize_adapters(model, seed=0, scale=0.3):
    """Put non-zero values in every adapter tensor (fresh init has B = 0)."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.adapter_parameters():
            p.copy_(scale * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    return model


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
