"""Low-rank adapters and a pooled sequence classifier for fine-tuning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..model import LifeCodeModel
from ..numerics.functional import cross_entropy
from ..numerics.optim import AdamWState, adamw_step
from ..numerics.tensor import Tensor, concat, matmul, no_grad, reshape, slice_axis, sum_, transpose
from ..seqcore import PAD
from .metrics import accuracy, mcc_from_labels


class LoraAdapter:
    """Additive update ``(alpha / r) * B @ A`` for a weight stored as (in, out).

    ``A`` is (r, in) with small random entries and ``B`` is (out, r) and
    starts at zero, so a fresh adapter leaves the base layer unchanged.
    """

    def __init__(self, fan_in: int, fan_out: int, rank: int, alpha: float, rng: np.random.Generator,
                 dtype="float64"):
        if rank < 1:
            raise ConfigError("LoRA rank must be >= 1")
        self.rank, self.alpha = rank, alpha
        self.A = Tensor(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(rank, fan_in)).astype(dtype),
                        requires_grad=True)
        self.B = Tensor(np.zeros((fan_out, rank), dtype=dtype), requires_grad=True)

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def delta(self, x: Tensor) -> Tensor:
        return matmul(matmul(x, transpose(self.A)), transpose(self.B)) * self.scale

    def delta_weight(self) -> np.ndarray:
        """The (in, out) matrix added to the stored weight."""
        return self.scale * (self.B.data @ self.A.data).T

    def tensors(self) -> list[Tensor]:
        return [self.A, self.B]


DEFAULT_TARGETS = ("wq", "wk", "wv", "wo")


def attach_lora(model: LifeCodeModel, rank: int = 8, alpha: float = 16.0, seed: int = 0,
                targets=DEFAULT_TARGETS) -> dict:
    """Create adapters for every encoder weight whose leaf name is in ``targets``."""
    rng = np.random.default_rng(seed)
    for name in sorted(model.params):
        leaf = name.rsplit(".", 1)[-1]
        if name.startswith("encoder/") and leaf in targets:
            w = model.params[name]
            model.adapters[name] = LoraAdapter(w.shape[0], w.shape[1], rank, alpha, rng, w.dtype)
    return model.adapters


def merge_lora(params: dict, adapters: dict) -> dict:
    """A new parameter dict with every adapter folded into its base weight."""
    out = dict(params)
    for name, ad in adapters.items():
        out[name] = Tensor(params[name].data + ad.delta_weight().astype(params[name].dtype))
    return out


@dataclass
class ClassifierHead:
    w: Tensor
    b: Tensor

    @classmethod
    def create(cls, dim: int, n_classes: int, seed: int, dtype="float64") -> "ClassifierHead":
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 1.0 / np.sqrt(2 * dim), size=(2 * dim, n_classes)).astype(dtype)
        return cls(Tensor(w, requires_grad=True), Tensor(np.zeros(n_classes, dtype=dtype), requires_grad=True))


def pooled_features(model: LifeCodeModel, tokens) -> Tensor:
    """Concatenate the first cell (holding [CLS]) with the mean over non-pad cells."""
    ids = np.asarray(tokens)
    _, H = model.encode_tokens(ids)
    cell_nonpad = (ids != PAD).reshape(ids.shape[0], -1, 3).any(axis=-1)
    w = cell_nonpad.astype(H.dtype)
    w = w / np.maximum(w.sum(axis=1, keepdims=True), 1.0)
    mean = sum_(H * w[..., None], axis=1)
    first = reshape(slice_axis(H, 0, 1, axis=1), (H.shape[0], H.shape[2]))
    return concat([first, mean], axis=-1)


def classify_logits(model: LifeCodeModel, head: ClassifierHead, tokens) -> Tensor:
    return matmul(pooled_features(model, tokens), head.w) + head.b


def encode_labeled(seqs, max_len: int, with_cls: bool = True) -> np.ndarray:
    """Token matrix ``[CLS] seq [PAD]*`` of width ``max_len`` (a multiple of 3)."""
    from ..ingest import TokenVocab
    from ..seqcore import CLS

    out = np.full((len(seqs), max_len), PAD, dtype=np.int32)
    for i, s in enumerate(seqs):
        t = TokenVocab.encode(s)
        if with_cls:
            t = np.concatenate([[CLS], t])
        t = t[:max_len]
        out[i, :len(t)] = t
    return out


@dataclass
class FinetuneResult:
    head: ClassifierHead
    adapters: dict
    history: list
    metrics: dict


def predict(model: LifeCodeModel, head: ClassifierHead, tokens, batch_size: int = 32) -> np.ndarray:
    preds = []
    with no_grad():
        for i in range(0, len(tokens), batch_size):
            preds.append(classify_logits(model, head, tokens[i:i + batch_size]).data.argmax(axis=-1))
    return np.concatenate(preds)


def finetune_lora(model: LifeCodeModel, train: tuple, test: tuple, n_classes: int = 2, rank: int = 8,
                  alpha: float = 16.0, lr: float = 3e-3, epochs: int = 5, batch_size: int = 16,
                  seed: int = 0) -> FinetuneResult:
    """Train adapters and a pooled linear head; the base parameters stay frozen.

    ``train`` and ``test`` are ``(tokens, labels)`` pairs.
    """
    x_tr, y_tr = np.asarray(train[0]), np.asarray(train[1])
    x_te, y_te = np.asarray(test[0]), np.asarray(test[1])
    dtype = next(iter(model.params.values())).dtype
    adapters = attach_lora(model, rank, alpha, seed)
    head = ClassifierHead.create(model.cfg.encoder.model_dim, n_classes, seed + 1, dtype)
    trainable = {"head/w": head.w, "head/b": head.b}
    for name, ad in adapters.items():
        trainable[f"lora/{name}/A"] = ad.A
        trainable[f"lora/{name}/B"] = ad.B
    frozen = {k: v.requires_grad for k, v in model.params.items()}
    for v in model.params.values():
        v.requires_grad = False
    opt = AdamWState(lr=lr, weight_decay=0.0)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        perm = rng.permutation(len(x_tr))
        losses = []
        for i in range(0, len(perm), batch_size):
            idx = perm[i:i + batch_size]
            for t in trainable.values():
                t.grad = None
            loss = cross_entropy(classify_logits(model, head, x_tr[idx]), y_tr[idx])
            loss.backward()
            grads = {k: t.grad for k, t in trainable.items() if t.grad is not None}
            new = adamw_step({k: t.data for k, t in trainable.items()}, grads, opt)
            for k, v in new.items():
                trainable[k].data = v
            losses.append(float(loss.data))
        pred = predict(model, head, x_te, batch_size)
        history.append({"epoch": epoch + 1, "loss": float(np.mean(losses)),
                        "test_accuracy": accuracy(y_te, pred)})
    for k, flag in frozen.items():
        model.params[k].requires_grad = flag
    pred = predict(model, head, x_te, batch_size)
    metrics = {"accuracy": accuracy(y_te, pred)}
    if n_classes == 2:
        metrics["mcc"] = mcc_from_labels(y_te, pred)
    return FinetuneResult(head, adapters, history, metrics)


def gc_toy_task(n: int, length: int, seed: int) -> tuple[list, np.ndarray]:
    """Random sequences labelled 1 when GC-rich (p_gc=0.6) and 0 when AT-rich (p_gc=0.4)."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    seqs = []
    for y in labels:
        gc = 0.6 if y else 0.4
        p = np.array([1 - gc, gc, gc, 1 - gc]) / 2.0
        seqs.append("".join(np.array(list("ACGT"))[rng.choice(4, size=length, p=p)]))
    return seqs, labels
