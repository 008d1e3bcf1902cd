"""Command-line entry point: ``lifecode <command> [options]``.

Every command resolves its settings from built-in defaults, then the
``--preset``, then a ``--config`` JSON file, then explicit flags. The
resolved settings are logged and echoed in the JSON summary printed on
stdout. Failures print ``{"error": ..., "message": ...}`` and exit with 2
(configuration), 3 (data) or 4 (file I/O).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .container import MAGICS, peek_magic, read_container
from .errors import (
    BadMagic,
    ChecksumMismatch,
    ConfigError,
    ContainerIOError,
    LifeCodeError,
    VersionMismatch,
)

log = logging.getLogger("lifecode")

EXIT_CONFIG, EXIT_DATA, EXIT_IO = 2, 3, 4

# command -> {key: (default, help)}
COMMAND_KEYS: dict[str, dict[str, tuple]] = {
    "ingest": {
        "fasta": (None, "FASTA file of genomic sequences (default: bundled 50-record sample)"),
        "cds": (None, "CDS manifest (JSON lines); packed instead of the FASTA when given"),
        "max_len": (None, "sample length in nucleotides (default: preset train.max_len)"),
        "tolerant": (False, "skip manifest records whose translation mismatches"),
    },
    "pretrain-tokenizer": {
        "cds": (None, "CDS manifest (default: bundled sample)"),
        "steps": (200, "optimizer steps"),
        "max_len": (None, "sample length in nucleotides (default: preset train.max_len)"),
        "synthetic": (0, "train on this many synthetic ORFs instead of the manifest"),
    },
    "pretrain": {
        "fasta": (None, "FASTA file for genomic windows (default: bundled sample)"),
        "cds": (None, "CDS manifest (default: bundled sample)"),
        "teacher": (None, "teacher container; a mock teacher is written when absent"),
        "init": (None, "checkpoint to start from (e.g. a pretrain-tokenizer output)"),
        "steps": (200, "optimizer steps"),
        "log_every": (50, "log a loss report every N steps"),
    },
    "finetune": {
        "checkpoint": (None, "base checkpoint (default: freshly initialised preset model)"),
        "train_data": (None, "JSON lines with id, sequence, label (default: GC-content toy task)"),
        "test_data": (None, "held-out JSON lines in the same format"),
        "rank": (8, "LoRA rank"),
        "alpha": (16.0, "LoRA scaling numerator"),
        "lr": (3e-3, "learning rate for adapters and head"),
        "epochs": (5, "training epochs"),
        "batch_size": (16, "mini-batch size"),
        "toy_length": (300, "sequence length of the toy task"),
        "toy_train": (256, "toy training examples"),
        "toy_test": (128, "toy test examples"),
    },
    "eval-fitness": {
        "checkpoint": (None, "model checkpoint (default: freshly initialised preset model)"),
        "dms": (None, "JSON with wt_cds and variants [{mutations: [[pos, codon], ...], fitness}]"),
    },
    "eval-dogma": {
        "cds": (None, "CDS manifest (default: bundled sample)"),
        "neg_ratio": (2, "negatives per positive"),
        "flank": (100, "random flanking bases on each side"),
    },
    "bench": {
        "lengths": ([8192, 16384], "sequence lengths in nucleotides"),
        "tokens_per_batch": (16384, "batch = tokens_per_batch // length"),
        "mixes": (["hybrid", "all-attention", "all-delta"], "block mixes to time"),
        "budget_bytes": (2_400_000_000, "activation memory budget; larger steps are recorded as OOM"),
        "repeats": (5, "timed repetitions (median reported)"),
        "warmup": (2, "untimed warm-up repetitions"),
        "model": (None, "model config object (default: narrow 4-layer bench model, dims 32/64)"),
    },
    "export-embeddings": {
        "checkpoint": (None, "model checkpoint (default: freshly initialised preset model)"),
    },
    "codon-usage": {
        "cds": (None, "CDS manifest (default: bundled sample)"),
    },
    "inspect-checkpoint": {
        "path": (None, "container file to inspect"),
    },
}

MODEL_COMMANDS = {"pretrain-tokenizer", "pretrain", "finetune", "eval-fitness", "export-embeddings"}


class DataError(LifeCodeError):
    pass


def _setup_logging():
    level = os.environ.get("LIFECODE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _describe(cmd: str) -> str:
    lines = ["config keys (JSON object given with --config):"]
    for key, (default, text) in COMMAND_KEYS[cmd].items():
        lines.append(f"  {key:<18} {text} [default: {json.dumps(default)}]")
    if cmd in MODEL_COMMANDS:
        lines.append("  model              overrides for the preset model config "
                     "(tokenizer.*, encoder.*, teacher_dim)")
        lines.append("  train              overrides for the preset train config (lr, warmup_steps, "
                     "total_steps, batch_size, max_len, mask_rate, tasks, freeze_heads, ...)")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lifecode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMAND_KEYS:
        p = sub.add_parser(cmd, epilog=_describe(cmd), formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
        p.add_argument("--out", default=None, help="output directory (default ./lifecode_out)")
        p.add_argument("--preset", choices=sorted(cfgmod.PRESETS), default=None,
                       help="named hyperparameter preset (default desk)")
        p.add_argument("--threads", type=int, default=1, help="BLAS worker threads")
        for key, (default, text) in COMMAND_KEYS[cmd].items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                p.add_argument(flag, dest=key, action="store_true", default=None, help=text)
            elif isinstance(default, list):
                kind = int if default and isinstance(default[0], int) else str
                p.add_argument(flag, dest=key, nargs="+", type=kind, default=None, help=text)
            elif key == "model":
                continue
            elif key == "path":
                p.add_argument("path", nargs="?", default=None, help=text)
            else:
                kind = type(default) if default is not None else str
                if key in ("max_len",):
                    kind = int
                p.add_argument(flag, dest=key, type=kind, default=None, help=text)
    return parser


def resolve(args) -> dict:
    """Merge defaults, config file and flags into one settings dict."""
    keys = COMMAND_KEYS[args.command]
    settings = {k: v for k, (v, _) in keys.items()}
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ContainerIOError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc.msg}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    allowed = set(keys) | {"seed", "out", "preset"}
    if args.command in MODEL_COMMANDS:
        allowed |= {"model", "train"}
    unknown = set(file_cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    settings.update({k: v for k, v in file_cfg.items() if k in keys})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            settings[k] = v
    settings["seed"] = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    settings["out"] = args.out or file_cfg.get("out") or "lifecode_out"
    settings["preset"] = args.preset or file_cfg.get("preset") or "desk"
    if settings["preset"] not in cfgmod.PRESETS:
        raise ConfigError(f"unknown preset {settings['preset']!r}")
    if args.command in MODEL_COMMANDS:
        model_cfg, train_cfg = cfgmod.preset(settings["preset"], {
            "model": file_cfg.get("model", {}), "train": file_cfg.get("train", {})})
        train_cfg.seed = settings["seed"]
        settings["model"] = cfgmod.to_dict(model_cfg)
        settings["train"] = cfgmod.to_dict(train_cfg)
    return settings


def _model_train(settings):
    model_cfg = cfgmod.model_config_from_dict(settings["model"])
    train_cfg = cfgmod.train_config_from_dict(settings["train"])
    return model_cfg, train_cfg


def _max_len(settings) -> int:
    if settings.get("max_len"):
        return int(settings["max_len"])
    _, tc = cfgmod.preset(settings["preset"])
    return tc.max_len


def _load_cds(settings):
    from .fixtures import sample_cds_path
    from .ingest import read_cds_manifest

    return read_cds_manifest(settings.get("cds") or sample_cds_path(), settings.get("tolerant", False))


def _load_fasta(settings):
    from .fixtures import sample_fasta_path
    from .ingest import read_fasta

    return read_fasta(settings.get("fasta") or sample_fasta_path())


def _model_from(settings, checkpoint=None):
    from .model import LifeCodeModel, init_model
    from .pretrain import load_checkpoint

    if checkpoint:
        params, model_cfg = load_checkpoint(checkpoint)
    else:
        model_cfg, train_cfg = _model_train(settings)
        params = init_model(model_cfg, settings["seed"], "float64")
    return LifeCodeModel(model_cfg, params)


# -- commands ------------------------------------------------------------------
def cmd_ingest(s, out: Path) -> dict:
    from .ingest import dna_sample, pack_cds, save_dataset

    max_len = _max_len(s)
    if s.get("cds"):
        records = _load_cds(s)
        samples = pack_cds(records, max_len, s["seed"])
        truncations = sum(1 for x in samples if x.truncated_bases)
        kind = "cds"
    else:
        records = _load_fasta(s)
        samples = [dna_sample(r.seq, max_len, s["seed"] + i, r.id) for i, r in enumerate(records)]
        truncations = sum(1 for r in records if len(r.seq) > max_len)
        kind = "dna"
    path = save_dataset(samples, out / "dataset.lcds", {"kind": kind, "max_len": max_len, "seed": s["seed"]})
    return {"records": len(records), "samples": len(samples), "truncations": truncations,
            "truncated_bases": int(sum(x.truncated_bases for x in samples)), "dataset": str(path)}


def cmd_pretrain_tokenizer(s, out: Path) -> dict:
    from .ingest import aligned_cds_sample
    from .pretrain import Trainer, codon_accuracy, save_checkpoint, synthetic_cds

    model_cfg, train_cfg = _model_train(s)
    max_len = _max_len(s)
    records = synthetic_cds(int(s["synthetic"]), s["seed"]) if s["synthetic"] else _load_cds(s)
    samples = [aligned_cds_sample(r, max_len) for r in records]
    train_cfg.total_steps = max(train_cfg.total_steps, int(s["steps"]))
    trainer = Trainer(model_cfg, train_cfg, stage="tokenizer")
    reports = trainer.fit(samples, int(s["steps"]))
    acc = codon_accuracy(trainer.model, samples)
    ckpt = save_checkpoint(trainer.params, model_cfg, out / "tokenizer.lckp", {"stage": "tokenizer"})
    _write_history(reports, out / "tokenizer_history.csv")
    return {"steps": len(reports), "final": reports[-1].as_dict(), "codon_accuracy": acc,
            "checkpoint": str(ckpt)}


def cmd_pretrain(s, out: Path) -> dict:
    from .ingest import dna_sample, pack_cds
    from .pretrain import Trainer, load_checkpoint, load_teacher, mock_teacher, save_checkpoint, save_teacher

    model_cfg, train_cfg = _model_train(s)
    records = _load_cds(s)
    genomes = _load_fasta(s)
    samples = pack_cds(records, train_cfg.max_len, s["seed"])
    samples += [dna_sample(r.seq, train_cfg.max_len, s["seed"] + i, r.id) for i, r in enumerate(genomes)]
    if s["teacher"]:
        teacher = load_teacher(s["teacher"])
        teacher_path = s["teacher"]
    else:
        teacher = mock_teacher(records, model_cfg.teacher_dim, s["seed"])
        teacher_path = str(save_teacher(teacher, out / "teacher.lcte", {"mock": True, "seed": s["seed"]}))
    params = None
    if s["init"]:
        params, model_cfg = load_checkpoint(s["init"])
    train_cfg.total_steps = max(train_cfg.total_steps, int(s["steps"]))
    trainer = Trainer(model_cfg, train_cfg, params=params, teacher=teacher)
    reports = trainer.fit(samples, int(s["steps"]), log_every=int(s["log_every"]))
    ckpt = save_checkpoint(trainer.params, model_cfg, out / "model.lckp", {"stage": "full"})
    _write_history(reports, out / "pretrain_history.csv")
    first = reports[0].as_dict()
    return {"steps": len(reports), "first": first, "final": reports[-1].as_dict(),
            "final_loss": reports[-1].total, "samples": len(samples), "teacher": teacher_path,
            "checkpoint": str(ckpt)}


def _read_task(path):
    seqs, labels = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                seqs.append(obj["sequence"])
                labels.append(int(obj["label"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from None
    return seqs, np.asarray(labels)


def cmd_finetune(s, out: Path) -> dict:
    from .evalkit import encode_labeled, finetune_lora, gc_toy_task

    model = _model_from(s, s["checkpoint"])
    if s["train_data"]:
        if not s["test_data"]:
            raise ConfigError("finetune needs 'test_data' when 'train_data' is given")
        tr_seqs, tr_y = _read_task(s["train_data"])
        te_seqs, te_y = _read_task(s["test_data"])
    else:
        tr_seqs, tr_y = gc_toy_task(int(s["toy_train"]), int(s["toy_length"]), s["seed"])
        te_seqs, te_y = gc_toy_task(int(s["toy_test"]), int(s["toy_length"]), s["seed"] + 1)
    longest = max(len(x) for x in tr_seqs + te_seqs) + 1
    width = longest + (-longest) % 3
    n_classes = int(max(tr_y.max(), te_y.max())) + 1
    res = finetune_lora(model, (encode_labeled(tr_seqs, width), tr_y), (encode_labeled(te_seqs, width), te_y),
                        n_classes=n_classes, rank=int(s["rank"]), alpha=float(s["alpha"]), lr=float(s["lr"]),
                        epochs=int(s["epochs"]), batch_size=int(s["batch_size"]), seed=s["seed"])
    (out / "finetune_metrics.json").write_text(json.dumps({"metrics": res.metrics, "history": res.history}, indent=2))
    return {"metrics": res.metrics, "history": res.history}


def synthetic_dms(seed: int, n_codons: int = 12, n_variants: int = 24) -> dict:
    from .fixtures import generate_cds
    from .seqcore import ALL_CODONS

    rng = np.random.default_rng(seed)
    _, cds, _ = generate_cds(1, rng, n_codons, n_codons)[0]
    variants = []
    for _ in range(n_variants):
        pos = int(rng.integers(1, n_codons - 1))
        alt = ALL_CODONS[int(rng.integers(0, 64))]
        variants.append({"mutations": [[pos, alt]], "fitness": float(rng.normal())})
    return {"wt_cds": cds, "variants": variants}


def cmd_eval_fitness(s, out: Path) -> dict:
    from .evalkit import FitnessScorer, srcc
    from .errors import DegenerateConstantInput

    model = _model_from(s, s["checkpoint"])
    if s["dms"]:
        try:
            dms = json.loads(Path(s["dms"]).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{s['dms']}: {exc.msg}") from None
    else:
        dms = synthetic_dms(s["seed"])
    scorer = FitnessScorer(model, dms["wt_cds"])
    scores = [scorer.score([tuple(m) for m in v["mutations"]]) for v in dms["variants"]]
    measured = [v.get("fitness") for v in dms["variants"]]
    result = {"variants": len(scores), "scores": scores}
    if all(m is not None for m in measured) and len(scores) >= 2:
        try:
            result["srcc"] = srcc(scores, measured)
        except DegenerateConstantInput:
            result["srcc"] = None
    (out / "fitness_scores.json").write_text(json.dumps(result, indent=2))
    return result


def cmd_eval_dogma(s, out: Path) -> dict:
    from .evalkit import MATCH, build_dogma_pairs, pair_matches

    records = _load_cds(s)
    pairs = build_dogma_pairs(records, int(s["neg_ratio"]), s["seed"], int(s["flank"]))
    consistent = sum(pair_matches(p) == (p.label == MATCH) for p in pairs)
    with open(out / "dogma_pairs.jsonl", "w") as fh:
        for p in pairs:
            fh.write(json.dumps({"id": p.source_id, "dna": p.dna.bases, "protein": str(p.protein),
                                 "label": p.label, "core": list(p.core)}) + "\n")
    return {"pairs": len(pairs), "positives": sum(p.label == MATCH for p in pairs),
            "label_consistent": consistent, "file": str(out / "dogma_pairs.jsonl")}


def cmd_bench(s, out: Path) -> dict:
    from .evalkit import bench_model_config, bench_throughput, time_ratio, write_bench_csv

    model_cfg = cfgmod.model_config_from_dict(s["model"]) if s["model"] else bench_model_config()
    lengths = [int(x) for x in s["lengths"]]
    grid = [(L, max(1, int(s["tokens_per_batch"]) // L)) for L in lengths]
    rows = bench_throughput(grid, tuple(s["mixes"]), model_cfg, int(s["budget_bytes"]),
                            int(s["repeats"]), int(s["warmup"]), s["seed"])
    path = write_bench_csv(rows, out / "bench.csv")
    ratios = {}
    if len(grid) >= 2:
        ratios = {m: time_ratio(rows, m, grid[0], grid[-1]) for m in s["mixes"]}
    return {"rows": [r.as_dict() for r in rows], "ratios": ratios, "csv": str(path)}


def cmd_export_embeddings(s, out: Path) -> dict:
    from .evalkit import export_codon_embeddings

    model = _model_from(s, s["checkpoint"])
    return export_codon_embeddings(model, out / "codon_embeddings")


def cmd_codon_usage(s, out: Path) -> dict:
    import csv

    from .seqcore import codon_usage

    records = _load_cds(s)
    usage = codon_usage([r.cds for r in records])
    with open(out / "codon_usage.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["amino_acid", "codon", "percent"])
        for aa in sorted(usage):
            for codon, pct in sorted(usage[aa].items()):
                w.writerow([aa, codon, f"{pct:.4f}"])
    return {"records": len(records), "amino_acids": len(usage), "usage": usage,
            "csv": str(out / "codon_usage.csv")}


def cmd_inspect_checkpoint(s, out: Path) -> dict:
    if not s["path"]:
        raise ConfigError("inspect-checkpoint needs a file path")
    magic = peek_magic(s["path"])
    tensors, header = read_container(s["path"])
    kind = {v: k for k, v in MAGICS.items()}.get(magic, "unknown")
    return {"kind": kind, "magic": magic.decode("ascii", "replace"), "header": header,
            "tensors": {k: {"shape": list(v.shape), "dtype": str(v.dtype)} for k, v in tensors.items()},
            "parameters": int(sum(v.size for v in tensors.values()))}


def _write_history(reports, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "total", "l_mlm", "l_trans", "l_kd", "lr", "grad_norm"])
        w.writeheader()
        for r in reports:
            d = r.as_dict()
            w.writerow({k: d.get(k, "") for k in w.fieldnames})


COMMANDS = {
    "ingest": cmd_ingest,
    "pretrain-tokenizer": cmd_pretrain_tokenizer,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval-fitness": cmd_eval_fitness,
    "eval-dogma": cmd_eval_dogma,
    "bench": cmd_bench,
    "export-embeddings": cmd_export_embeddings,
    "codon-usage": cmd_codon_usage,
    "inspect-checkpoint": cmd_inspect_checkpoint,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (ContainerIOError, BadMagic, VersionMismatch, ChecksumMismatch, OSError)):
        return EXIT_IO
    return EXIT_DATA


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=max(1, args.threads)):
            settings = resolve(args)
            log.info("resolved config %s", json.dumps(settings, sort_keys=True))
            out = Path(settings["out"])
            if args.command != "inspect-checkpoint":
                out.mkdir(parents=True, exist_ok=True)
            t0 = time.perf_counter()
            result = COMMANDS[args.command](settings, out)
            summary = {"command": args.command, "ok": True, "seed": settings["seed"],
                       "config": settings, "result": result,
                       "elapsed_s": round(time.perf_counter() - t0, 3)}
    except (LifeCodeError, OSError, KeyError, ValueError) as exc:
        payload = {"command": args.command, "ok": False, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload))
        log.error("%s: %s", type(exc).__name__, exc)
        return _exit_code(exc)
    print(json.dumps(_finite(summary), default=_json_default))
    return 0


def _finite(o):
    """Replace non-finite floats by strings so the summary stays strict JSON."""
    if isinstance(o, float) and not np.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


if __name__ == "__main__":
    sys.exit(main())
