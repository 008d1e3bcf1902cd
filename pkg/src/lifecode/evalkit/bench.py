"""Training-step throughput for different delta/attention block mixes."""

from __future__ import annotations

import csv
import dataclasses
import gc
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import EncoderConfig, ModelConfig, TokenizerConfig
from ..errors import MemoryBudgetExceeded
from ..model import LifeCodeModel, init_model
from ..numerics.functional import cross_entropy
from ..numerics.tensor import memory_budget

MIXES = ("hybrid", "all-attention", "all-delta")
# Tracked-activation budget for the default grid (16k tokens per batch with the
# bench model): all-attention fits at 8k x 2 but not at 16k x 1; hybrid fits both.
DEFAULT_BUDGET = 2_400_000_000


def bench_model_config() -> ModelConfig:
    """A narrow four-layer model so long sequences fit on a desk machine."""
    return ModelConfig(
        tokenizer=TokenizerConfig(embed_dim=32, heads=2),
        encoder=EncoderConfig(model_dim=64, n_layers=4, attn_every=3, heads=2),
        teacher_dim=16,
    )


def with_mix(cfg: ModelConfig, mix: str) -> ModelConfig:
    if mix not in MIXES:
        raise ValueError(f"unknown block mix {mix!r}")
    attn_every = {"hybrid": cfg.encoder.attn_every, "all-attention": 0, "all-delta": None}[mix]
    return dataclasses.replace(cfg, encoder=dataclasses.replace(cfg.encoder, attn_every=attn_every))


@dataclass
class BenchRow:
    mix: str
    length: int
    batch: int
    status: str            # "ok" or "oom"
    median_s: float        # per forward+backward step; inf when out of memory
    tokens_per_s: float
    peak_bytes: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _step(model: LifeCodeModel, tokens: np.ndarray):
    out = model.forward(tokens, with_protein=False)
    loss = cross_entropy(out.nt_logits, tokens.astype(np.int64))
    loss.backward()
    for p in model.params.values():
        p.grad = None


def bench_throughput(grid, mixes=MIXES, model_cfg: ModelConfig | None = None,
                     budget_bytes: int | None = None, repeats: int = 5, warmup: int = 2,
                     seed: int = 0, dtype="float32") -> list[BenchRow]:
    """Time forward+backward steps for every ``(length, batch)`` in ``grid`` and mix.

    ``length`` counts nucleotides and is rounded up to a whole number of
    codons (8192 runs as 8193). Steps that would exceed ``budget_bytes`` of
    tracked activation memory are recorded with status ``"oom"``.
    """
    base = model_cfg or bench_model_config()
    rows = []
    rng = np.random.default_rng(seed)
    for mix in mixes:
        cfg = with_mix(base, mix)
        model = LifeCodeModel(cfg, init_model(cfg, seed, dtype))
        for length, batch in grid:
            n_nt = -(-length // 3) * 3
            tokens = rng.integers(5, 9, size=(batch, n_nt)).astype(np.int32)
            times, peak, status = [], 0, "ok"
            try:
                for i in range(warmup + repeats):
                    gc.collect()
                    with memory_budget(budget_bytes) as meter:
                        t0 = time.perf_counter()
                        _step(model, tokens)
                        dt = time.perf_counter() - t0
                    peak = max(peak, meter.peak)
                    if i >= warmup:
                        times.append(dt)
            except MemoryBudgetExceeded:
                status = "oom"
            gc.collect()
            med = statistics.median(times) if status == "ok" else float("inf")
            tps = n_nt * batch / med if status == "ok" else 0.0
            rows.append(BenchRow(mix, length, batch, status, med, tps, int(peak)))
    return rows


def time_ratio(rows: list, mix: str, short: tuple, long: tuple) -> float:
    """``median_s(long) / median_s(short)`` for one mix; inf if the long run ran out of memory."""
    pick = {(r.length, r.batch): r for r in rows if r.mix == mix}
    a, b = pick[tuple(short)], pick[tuple(long)]
    if a.status != "ok":
        return float("nan")
    return b.median_s / a.median_s


def write_bench_csv(rows: list, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(BenchRow.__dataclass_fields__))
        w.writeheader()
        for r in rows:
            w.writerow(r.as_dict())
    return path
