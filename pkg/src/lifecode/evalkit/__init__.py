"""Downstream evaluation: adapters, metrics, fitness scoring, pair sets, export, benchmarks."""

from .bench import DEFAULT_BUDGET, MIXES, BenchRow, bench_model_config, bench_throughput, time_ratio, write_bench_csv
from .dogma import MATCH, MISMATCH, PairExample, build_dogma_pairs, pair_matches
from .export import codon_embedding_table, export_codon_embeddings
from .fitness import FitnessScorer, log_softmax_np, masked_codon_log_probs, zero_shot_fitness
from .lora import (
    ClassifierHead,
    LoraAdapter,
    attach_lora,
    classify_logits,
    encode_labeled,
    finetune_lora,
    gc_toy_task,
    merge_lora,
    predict,
)
from .metrics import accuracy, confusion, mcc, mcc_from_labels, srcc

__all__ = [name for name in dir() if not name.startswith("_")]
