import numpy as np
import pytest

from lifecode.config import EncoderConfig, ModelConfig, TokenizerConfig
from lifecode.model import LifeCodeModel, init_model


def tiny_config(embed_dim=8, model_dim=16, n_layers=2, attn_every=1, layer_scale=0.5,
                chunk=4, teacher_dim=4, **enc) -> ModelConfig:
    """A model small enough for finite differences, with non-negligible layer scales."""
    return ModelConfig(
        tokenizer=TokenizerConfig(embed_dim=embed_dim, heads=2, layer_scale_init=layer_scale,
                                  delta_chunk=chunk),
        encoder=EncoderConfig(model_dim=model_dim, n_layers=n_layers, attn_every=attn_every, heads=2,
                              layer_scale_init=layer_scale, delta_chunk=chunk, **enc),
        teacher_dim=teacher_dim,
    )


@pytest.fixture
def tiny_model():
    cfg = tiny_config()
    return LifeCodeModel(cfg, init_model(cfg, seed=0, dtype="float64"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} [{number:>2}] {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
