"""Multi-task pre-training: masked reconstruction, translation and distillation.

The three losses are combined as ``sum(log(l_i + eps))`` so each task's
gradient is scaled by ``1 / (l_i + eps)``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .config import ModelConfig, TrainConfig, model_config_from_dict, to_dict
from .container import MAGICS, read_container, write_container
from .errors import AllIgnored, NegativeLoss, ShapeMismatch
from .ingest import CDS, CdsRecord, mask_codon_span, mask_random
from .model import LifeCodeModel, init_model
from .numerics.functional import IGNORE_INDEX, soft_cross_entropy
from .numerics.optim import AdamWState, adamw_step, clip_grad_norm, cosine_lr
from .numerics.tensor import Tensor, as_tensor, getitem, log, reshape
from .seqcore import N_AA_CLASSES
from .tokenizer import mlm_loss, trans_loss

log_ = logging.getLogger(__name__)


# -- losses ------------------------------------------------------------------
def _softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def kd_loss(student, teacher, tau_s: float = 0.1, tau_t: float = 0.04, center=None) -> Tensor:
    """Token-wise distillation: mean over rows of ``-softmax(t/tau_t) . log softmax(s/tau_s)``.

    ``center`` (broadcastable to a row) is subtracted from the teacher
    vectors before the softmax.
    """
    student = as_tensor(student)
    t = np.asarray(teacher.data if isinstance(teacher, Tensor) else teacher)
    if student.shape != t.shape:
        raise ShapeMismatch(f"student {student.shape} and teacher {t.shape} differ")
    if tau_s <= 0 or tau_t <= 0:
        raise ValueError("temperatures must be positive")
    if center is not None:
        t = t - center
    probs = _softmax_np(t.astype(np.float64) / tau_t).astype(student.dtype)
    k = student.shape[-1]
    return soft_cross_entropy(reshape(student * (1.0 / tau_s), (-1, k)), probs.reshape(-1, k))


def total_loss(losses: dict, eps: float = 1e-8, active: Iterable[str] | None = None) -> Tensor:
    """``sum(log(l + eps))`` over the active tasks."""
    names = list(losses) if active is None else [n for n in active if n in losses]
    total = None
    for name in names:
        value = as_tensor(losses[name])
        if float(value.data) < 0:
            raise NegativeLoss(f"loss {name} is negative ({float(value.data)})")
        term = log(value + eps)
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no active losses")
    return total


@dataclass
class LossReport:
    step: int
    total: float
    l_mlm: float | None = None
    l_trans: float | None = None
    l_kd: float | None = None
    epsilon: float = 1e-8
    lr: float = 0.0
    grad_norm: float = 0.0

    def as_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


# -- teacher -------------------------------------------------------------------
def mock_teacher(records: list, dim: int, seed: int, perturbation: float = 0.1) -> dict:
    """Deterministic per-residue teacher vectors keyed by record id.

    Each residue class owns a random row of a seeded 21 x dim table; a small
    sinusoidal positional term is added so vectors are not exact copies.
    """
    if dim < 2:
        raise ValueError("teacher dim must be >= 2")
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(N_AA_CLASSES, dim))
    freq = rng.uniform(0.01, 0.5, size=dim)
    phase = rng.uniform(0, 2 * np.pi, size=dim)
    out = {}
    for rec in records:
        ids = rec.aa_class_ids()
        pos = np.arange(len(ids))[:, None]
        out[rec.id] = (table[ids] + perturbation * np.sin(pos * freq + phase)).astype(np.float32)
    return out


def save_teacher(teacher: dict, path, config: dict | None = None):
    return write_container(path, MAGICS["teacher"], teacher, config or {})


def load_teacher(path) -> dict:
    tensors, _ = read_container(path, MAGICS["teacher"])
    return tensors


# -- checkpoints ---------------------------------------------------------------
def save_checkpoint(params: dict, config: ModelConfig, path, extra: dict | None = None):
    tensors = {k: (v.data if isinstance(v, Tensor) else np.asarray(v)) for k, v in params.items()}
    header = {"model": to_dict(config), **(extra or {})}
    return write_container(path, MAGICS["checkpoint"], tensors, header)


def load_checkpoint(path, requires_grad: bool = True) -> tuple[dict, ModelConfig]:
    tensors, header = read_container(path, MAGICS["checkpoint"])
    params = {k: Tensor(v, requires_grad=requires_grad) for k, v in tensors.items()}
    return params, model_config_from_dict(header["model"])


def checkpoint_header(path) -> dict:
    _, header = read_container(path, MAGICS["checkpoint"])
    return header


# -- batches -------------------------------------------------------------------
@dataclass
class Batch:
    input_tokens: np.ndarray       # (B, L)
    nt_targets: np.ndarray         # (B, L), IGNORE_INDEX where unmasked
    aa_targets: np.ndarray         # (B, L/3) per codon cell
    teacher: np.ndarray | None     # (B, L/3, D') zeros off CDS cells
    kd_cells: np.ndarray | None    # (B, L/3) bool


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def build_batch(samples: list, seed: int, cfg: TrainConfig, teacher: dict | None = None,
                teacher_dim: int | None = None) -> Batch:
    """Mask and stack samples. DNA windows get random masking, CDS runs codon spans."""
    inputs, nt, aa = [], [], []
    for i, s in enumerate(samples):
        has_cds = any(kind == CDS for _, _, kind in s.segments)
        attempt = 0
        while True:
            sd = _derive_seed(seed, i, attempt)
            if has_cds:
                mb = mask_codon_span(s.tokens, s.segments, cfg.mask_rate, sd)
            else:
                mb = mask_random(s.tokens, cfg.mask_rate, sd, tuple(cfg.mask_split))
            # keep every sample contributing to the reconstruction loss
            if mb.n_masked or attempt >= 16:
                break
            attempt += 1
        inputs.append(mb.input_tokens)
        nt.append(mb.target_tokens)
        aa.append(s.cell_aa_targets())
    batch = Batch(np.stack(inputs), np.stack(nt), np.stack(aa), None, None)
    if teacher is not None:
        n_cells = batch.aa_targets.shape[1]
        dim = teacher_dim or next(iter(teacher.values())).shape[-1]
        tv = np.zeros((len(samples), n_cells, dim), dtype=np.float32)
        cells_mask = np.zeros((len(samples), n_cells), dtype=bool)
        for b, s in enumerate(samples):
            for rid, cells in zip(s.record_ids, s.cds_cells()):
                vecs = teacher.get(rid)
                if vecs is None:
                    continue
                n = min(len(cells), len(vecs))
                tv[b, cells[:n]] = vecs[:n]
                cells_mask[b, cells[:n]] = True
        batch.teacher, batch.kd_cells = tv, cells_mask
    return batch


# -- training ------------------------------------------------------------------
def trainable_names(params: dict, model: LifeCodeModel, cfg: TrainConfig, stage: str) -> list[str]:
    heads = set(model.tokenizer.head_names())
    names = []
    for name in params:
        if stage == "tokenizer":
            if name.startswith("tokenizer/"):
                names.append(name)
            continue
        if cfg.freeze_heads and name in heads:
            continue
        if cfg.freeze_tokenizer and name.startswith("tokenizer/") and name not in heads:
            continue
        names.append(name)
    return names


def no_decay_names(params: dict) -> set:
    return {k for k, v in params.items() if v.data.ndim <= 1}


class Trainer:
    """Owns parameters and optimizer state for one training run.

    ``stage="tokenizer"`` trains the tokenizer alone on reconstruction and
    translation; ``stage="full"`` runs the encoder and all three tasks.
    """

    def __init__(self, model_cfg: ModelConfig, train_cfg: TrainConfig, params: dict | None = None,
                 teacher: dict | None = None, stage: str = "full"):
        if stage not in ("tokenizer", "full"):
            raise ValueError(f"unknown stage {stage!r}")
        self.model_cfg = model_cfg
        self.cfg = train_cfg
        self.stage = stage
        dtype = np.dtype(train_cfg.dtype)
        if params is None:
            params = init_model(model_cfg, train_cfg.seed, dtype)
        else:
            params = {k: Tensor(v.data.astype(dtype), requires_grad=True) for k, v in params.items()}
        self.params = params
        self.model = LifeCodeModel(model_cfg, params)
        self.teacher = teacher
        tasks = set(train_cfg.tasks)
        if stage == "tokenizer":
            tasks -= {"kd"}
        if teacher is None:
            tasks -= {"kd"}
        self.tasks = [t for t in ("mlm", "trans", "kd") if t in tasks]
        self.trainable = trainable_names(params, self.model, train_cfg, stage)
        self.no_decay = no_decay_names(params)
        self.opt = AdamWState(lr=train_cfg.lr, betas=tuple(train_cfg.betas),
                              weight_decay=train_cfg.weight_decay, eps=train_cfg.adam_eps)
        self.step_count = 0
        self.history: list[LossReport] = []

    def losses(self, batch: Batch) -> dict:
        kd_on = "kd" in self.tasks and batch.teacher is not None and batch.kd_cells.any()
        if self.stage == "tokenizer":
            out = self.model.tokenizer_forward(batch.input_tokens)
        else:
            out = self.model.forward(batch.input_tokens, with_protein=kd_on)
        losses = {}
        if "mlm" in self.tasks:
            try:
                losses["mlm"] = mlm_loss(out.nt_logits, batch.nt_targets)
            except AllIgnored:
                pass
        if "trans" in self.tasks:
            try:
                losses["trans"] = trans_loss(out.aa_logits, batch.aa_targets)
            except AllIgnored:
                pass
        if kd_on:
            rows = np.flatnonzero(batch.kd_cells.reshape(-1))
            dim = out.protein.shape[-1]
            student = getitem(reshape(out.protein, (-1, dim)), rows)
            teacher = batch.teacher.reshape(-1, dim)[rows]
            center = teacher.mean(axis=0) if self.cfg.kd_center else None
            losses["kd"] = kd_loss(student, teacher, self.cfg.kd_tau_student, self.cfg.kd_tau_teacher, center)
        return losses

    def step(self, batch: Batch) -> LossReport:
        cfg = self.cfg
        for p in self.params.values():
            p.grad = None
        losses = self.losses(batch)
        total = total_loss(losses, cfg.loss_eps)
        total.backward()
        grads = {n: self.params[n].grad for n in self.trainable if self.params[n].grad is not None}
        norm = clip_grad_norm(grads, cfg.grad_clip)
        self.step_count += 1
        lr = cosine_lr(min(self.step_count, cfg.total_steps), cfg.lr, cfg.warmup_steps,
                       cfg.total_steps, cfg.min_lr)
        self.opt.lr = lr
        current = {n: self.params[n].data for n in grads}
        updated = adamw_step(current, grads, self.opt, self.no_decay)
        for n, value in updated.items():
            self.params[n].data = value
        report = LossReport(
            step=self.step_count,
            total=float(total.data),
            l_mlm=float(losses["mlm"].data) if "mlm" in losses else None,
            l_trans=float(losses["trans"].data) if "trans" in losses else None,
            l_kd=float(losses["kd"].data) if "kd" in losses else None,
            epsilon=cfg.loss_eps,
            lr=lr,
            grad_norm=norm,
        )
        self.history.append(report)
        return report

    def fit(self, samples: list, steps: int, log_every: int = 0) -> list[LossReport]:
        """Run ``steps`` optimizer steps over seeded epoch shuffles of ``samples``."""
        bs = min(self.cfg.batch_size, len(samples))
        order: list[int] = []
        epoch = 0
        reports = []
        for _ in range(steps):
            if len(order) < bs:
                perm = np.random.default_rng(_derive_seed(self.cfg.seed, 7919, epoch)).permutation(len(samples))
                order.extend(int(i) for i in perm)
                epoch += 1
            idx, order = order[:bs], order[bs:]
            batch = build_batch([samples[i] for i in idx], _derive_seed(self.cfg.seed, self.step_count),
                                self.cfg, self.teacher, self.model_cfg.teacher_dim)
            rep = self.step(batch)
            reports.append(rep)
            if log_every and rep.step % log_every == 0:
                log_.info("step %d %s", rep.step, rep.as_dict())
        return reports


def codon_accuracy(model: LifeCodeModel, samples: list, batch_size: int = 32,
                   through_encoder: bool = False) -> float:
    """Fraction of CDS codon cells whose arg-max amino acid is correct (unmasked input)."""
    from .numerics.tensor import no_grad

    correct = total = 0
    with no_grad():
        for i in range(0, len(samples), batch_size):
            chunk = samples[i:i + batch_size]
            tokens = np.stack([s.tokens for s in chunk])
            targets = np.stack([s.cell_aa_targets() for s in chunk])
            out = model.forward(tokens, with_protein=False) if through_encoder else model.tokenizer_forward(tokens)
            pred = out.aa_logits.data.argmax(axis=-1)
            valid = targets != IGNORE_INDEX
            correct += int((pred[valid] == targets[valid]).sum())
            total += int(valid.sum())
    return correct / max(total, 1)


def synthetic_cds(n: int, seed: int, min_codons: int = 20, max_codons: int = 60) -> list[CdsRecord]:
    """Random ATG-initiated open reading frames closed by a stop codon."""
    from .seqcore import ALL_CODONS, standard_table

    table = standard_table()
    sense = [c for c in ALL_CODONS if table.forward[c] != "*"]
    stops = [c for c in ALL_CODONS if table.forward[c] == "*"]
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        k = int(rng.integers(min_codons, max_codons + 1))
        body = [sense[j] for j in rng.integers(0, len(sense), size=k - 2)]
        cds = "ATG" + "".join(body) + stops[int(rng.integers(0, len(stops)))]
        records.append(CdsRecord.from_strings(f"syn{i:05d}", cds))
    return records


__all__ = [
    "Batch", "LossReport", "Trainer", "build_batch", "checkpoint_header", "codon_accuracy",
    "kd_loss", "load_checkpoint", "load_teacher", "mock_teacher", "save_checkpoint",
    "save_teacher", "synthetic_cds", "total_loss",
]
