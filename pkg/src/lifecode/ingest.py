"""Sequence file parsing, sample construction and masking.

Two sample streams feed pre-training: fixed-length genomic windows and packed
runs of coding sequences::

    [CLS] cds_1 [SEP] cds_2 [SEP] ... [PAD]*

Codon ``j`` of a segment starting at token ``s`` is read by codon cell
``(s + 1) // 3 + j`` of the tokenizer, whose receptive field (the size-3
convolution around each aligned triplet) covers it whatever the phase of
``s``. Amino-acid targets and teacher vectors are placed on those cells.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .container import MAGICS, read_container, write_container
from .errors import (
    EmptyInput,
    EmptySequence,
    InvalidBase,
    InvalidMaxLen,
    InvalidResidue,
    JsonSyntax,
    LengthNotMultipleOfThree,
    MalformedHeader,
    TranslationMismatch,
)
from .numerics.functional import IGNORE_INDEX
from .seqcore import (
    BASE_TO_ID,
    CLS,
    ID_TO_BASE,
    MASK,
    PAD,
    SEP,
    SPECIAL_TOKENS,
    TOKENS,
    COMPLEMENT_IDS,
    AminoAcidSeq,
    CodonTable,
    NucleotideSeq,
    proteins_match,
    translate,
)

DNA, CDS = "DNA", "CDS"
_KIND_CODE = {DNA: 0, CDS: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


# -- FASTA -------------------------------------------------------------------
@dataclass(frozen=True)
class FastaRecord:
    id: str
    description: str
    seq: NucleotideSeq


def _lines(source) -> Iterator[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)
    for line in source:
        yield line.decode("utf-8") if isinstance(line, bytes) else line


def iter_fasta(source, ambiguity: str = "unk") -> Iterator[FastaRecord]:
    """Stream records from text, bytes or an iterable of lines.

    Only the current record's sequence chunks are held in memory.
    """
    header = None
    chunks: list[str] = []

    def emit():
        seq_text = "".join(chunks)
        if not seq_text:
            raise EmptySequence(f"record {header[0]!r} has no sequence")
        return FastaRecord(header[0], header[1], NucleotideSeq.from_string(seq_text, ambiguity=ambiguity))

    for lineno, raw in enumerate(_lines(source), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            if header is not None:
                yield emit()
            parts = line[1:].strip().split(None, 1)
            if not parts:
                raise MalformedHeader(f"line {lineno}: header without an id")
            header = (parts[0], parts[1] if len(parts) > 1 else "")
            chunks = []
        elif header is None:
            raise MalformedHeader(f"line {lineno}: sequence data before the first '>' header")
        else:
            chunks.append("".join(line.split()))
    if header is not None:
        yield emit()


def parse_fasta(source, ambiguity: str = "unk") -> list[FastaRecord]:
    return list(iter_fasta(source, ambiguity))


def read_fasta(path, ambiguity: str = "unk") -> list[FastaRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_fasta(fh, ambiguity)


# -- CDS manifest --------------------------------------------------------------
@dataclass(frozen=True)
class CdsRecord:
    id: str
    cds: NucleotideSeq
    protein: AminoAcidSeq

    @classmethod
    def from_strings(cls, id: str, cds: str, protein: str | None = None,
                     table: CodonTable | None = None) -> "CdsRecord":
        seq = NucleotideSeq.from_string(cds)
        if len(seq) % 3:
            raise LengthNotMultipleOfThree(f"CDS {id!r} has length {len(seq)}")
        translated = str(translate(seq, table))
        if protein is None:
            return cls(id, seq, AminoAcidSeq(translated))
        prot = AminoAcidSeq.from_string(protein)
        if not proteins_match(translated, str(prot)):
            raise TranslationMismatch(f"record {id!r}: CDS translates to {translated!r}, not {protein!r}")
        return cls(id, seq, AminoAcidSeq(translated))

    def aa_class_ids(self) -> np.ndarray:
        """One class id per codon, including a terminal stop when present."""
        return self.protein.class_ids()


def parse_cds_manifest(lines, tolerant: bool = False, table: CodonTable | None = None,
                       skipped: list | None = None) -> list[CdsRecord]:
    """JSON-lines records with ``id``, ``cds`` and optional ``protein``.

    The stored protein is always the translation of the CDS (so it carries
    a terminal ``*`` when the CDS ends in a stop). Under ``tolerant`` bad
    records are skipped and, when ``skipped`` is given, appended to it as
    ``(line, message)``.
    """
    records = []
    for lineno, raw in enumerate(_lines(lines), 1):
        text = raw.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise JsonSyntax(exc.msg, lineno) from None
        if not isinstance(obj, dict) or "id" not in obj or "cds" not in obj:
            raise JsonSyntax("each line must be an object with 'id' and 'cds'", lineno)
        try:
            records.append(CdsRecord.from_strings(str(obj["id"]), obj["cds"], obj.get("protein"), table))
        except (TranslationMismatch, InvalidBase, InvalidResidue, LengthNotMultipleOfThree) as exc:
            if not tolerant:
                raise TranslationMismatch(str(exc), lineno) from None
            if skipped is not None:
                skipped.append((lineno, str(exc)))
    return records


def read_cds_manifest(path, tolerant: bool = False) -> list[CdsRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_cds_manifest(fh, tolerant)


# -- vocabulary ----------------------------------------------------------------
class TokenVocab:
    """The fixed nine-token nucleotide vocabulary."""

    tokens = TOKENS
    size = len(TOKENS)
    pad, unk, cls, sep, mask = range(5)

    @staticmethod
    def encode(seq) -> np.ndarray:
        if not isinstance(seq, NucleotideSeq):
            seq = NucleotideSeq.from_string(str(seq), ambiguity="unk")
        return seq.to_tokens()

    @staticmethod
    def decode(ids) -> str:
        out = []
        for i in np.asarray(ids).tolist():
            out.append(ID_TO_BASE[i] if i in ID_TO_BASE else SPECIAL_TOKENS[i])
        return "".join(out)

    @staticmethod
    def complement(ids) -> np.ndarray:
        return COMPLEMENT_IDS[np.asarray(ids)]


# -- sample construction -----------------------------------------------------
def _check_max_len(max_len: int, minimum: int = 3):
    if not isinstance(max_len, (int, np.integer)) or max_len < minimum or max_len % 3:
        raise InvalidMaxLen(f"max_len must be a multiple of 3 and >= {minimum}, got {max_len}")


def sample_dna_window(seq: NucleotideSeq, max_len: int, rng_seed: int) -> np.ndarray:
    """A random ``max_len`` window of a long sequence, or the whole one right-padded."""
    _check_max_len(max_len)
    tokens = seq.to_tokens()
    if len(tokens) > max_len:
        start = int(np.random.default_rng(rng_seed).integers(0, len(tokens) - max_len + 1))
        return tokens[start:start + max_len].copy()
    out = np.full(max_len, PAD, dtype=np.int32)
    out[:len(tokens)] = tokens
    return out


@dataclass
class PackedSample:
    tokens: np.ndarray
    segments: list                       # (start, end, kind), end exclusive
    aa_targets: list = field(default_factory=list)      # one int32 array per CDS segment
    frame_offsets: list = field(default_factory=list)   # start index of each CDS segment
    record_ids: list = field(default_factory=list)
    truncated_bases: int = 0

    @property
    def n_cells(self) -> int:
        return len(self.tokens) // 3

    def cds_cells(self) -> list[np.ndarray]:
        """Codon-cell index of every codon, one array per CDS segment."""
        cells = []
        for start, end, kind in self.segments:
            if kind == CDS:
                cells.append((start + 1) // 3 + np.arange((end - start) // 3))
        return cells

    def cell_aa_targets(self) -> np.ndarray:
        out = np.full(self.n_cells, IGNORE_INDEX, dtype=np.int64)
        for cells, targets in zip(self.cds_cells(), self.aa_targets):
            out[cells] = targets
        return out


def dna_sample(seq: NucleotideSeq, max_len: int, rng_seed: int, record_id: str = "") -> PackedSample:
    tokens = sample_dna_window(seq, max_len, rng_seed)
    n = int(np.count_nonzero(tokens != PAD))
    return PackedSample(tokens, [(0, n, DNA)], record_ids=[record_id])


def pack_cds(records: list, max_len: int, rng_seed: int) -> list[PackedSample]:
    """Greedy first-fit packing in a seeded shuffled order.

    A record needs ``len + 1`` slots (its trailing ``[SEP]``) on top of the
    leading ``[CLS]``. Records longer than a whole sample are cut at a codon
    boundary and the dropped bases are counted in ``truncated_bases``.
    """
    if not records:
        raise EmptyInput("no CDS records to pack")
    _check_max_len(max_len, minimum=6)
    cap = max_len - 2
    cap -= cap % 3
    order = np.random.default_rng(rng_seed).permutation(len(records))
    bins: list[dict] = []
    for idx in order:
        rec = records[int(idx)]
        n = len(rec.cds)
        truncated = 0
        if n > cap:
            truncated, n = n - cap, cap
        target = None
        for b in bins:
            if b["used"] + n + 1 <= max_len:
                target = b
                break
        if target is None:
            target = {"used": 1, "items": [], "truncated": 0}
            bins.append(target)
        target["items"].append((rec, n))
        target["used"] += n + 1
        target["truncated"] += truncated
    out = []
    for b in bins:
        tokens = np.full(max_len, PAD, dtype=np.int32)
        tokens[0] = CLS
        pos = 1
        sample = PackedSample(tokens, [], truncated_bases=b["truncated"])
        for rec, n in b["items"]:
            tokens[pos:pos + n] = rec.cds.to_tokens()[:n]
            tokens[pos + n] = SEP
            sample.segments.append((pos, pos + n, CDS))
            sample.aa_targets.append(rec.aa_class_ids()[: n // 3].astype(np.int32))
            sample.frame_offsets.append(pos)
            sample.record_ids.append(rec.id)
            pos += n + 1
        out.append(sample)
    return out


def aligned_cds_sample(rec: CdsRecord, max_len: int) -> PackedSample:
    """A single CDS starting at token 0, so codon ``j`` is exactly cell ``j``.

    Used for tokenizer pre-training, where the codon cell has no wider
    context to recover the reading frame from.
    """
    _check_max_len(max_len)
    n = min(len(rec.cds), max_len)
    tokens = np.full(max_len, PAD, dtype=np.int32)
    tokens[:n] = rec.cds.to_tokens()[:n]
    return PackedSample(tokens, [(0, n, CDS)], [rec.aa_class_ids()[: n // 3].astype(np.int32)],
                        [0], [rec.id], len(rec.cds) - n)


# -- masking -------------------------------------------------------------------
@dataclass
class MaskedBatch:
    input_tokens: np.ndarray
    target_tokens: np.ndarray   # original id at masked positions, IGNORE_INDEX elsewhere
    mask_positions: np.ndarray  # boolean, same shape as the tokens

    @property
    def n_masked(self) -> int:
        return int(self.mask_positions.sum())


def eligible_positions(tokens) -> np.ndarray:
    t = np.asarray(tokens)
    return (t != PAD) & (t != CLS) & (t != SEP)


def mask_random(tokens, rate: float = 0.15, rng_seed: int = 0,
                split: tuple = (0.8, 0.1, 0.1)) -> MaskedBatch:
    """BERT-style corruption: select each eligible position with probability ``rate``.

    Selected positions become ``[MASK]``, a random base or stay unchanged
    in the proportions of ``split``.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    if abs(sum(split) - 1.0) > 1e-9 or min(split) < 0:
        raise ValueError("split must be three non-negative fractions summing to 1")
    tokens = np.asarray(tokens)
    rng = np.random.default_rng(rng_seed)
    selected = (rng.random(tokens.shape) < rate) & eligible_positions(tokens)
    how = rng.random(tokens.shape)
    random_bases = rng.integers(BASE_TO_ID["A"], BASE_TO_ID["T"] + 1, size=tokens.shape)
    inp = tokens.copy()
    to_mask = selected & (how < split[0])
    to_random = selected & (how >= split[0]) & (how < split[0] + split[1])
    inp[to_mask] = MASK
    inp[to_random] = random_bases[to_random]
    target = np.where(selected, tokens, IGNORE_INDEX).astype(np.int64)
    return MaskedBatch(inp, target, selected)


def mask_codon_span(tokens, segments, rate: float = 0.15, rng_seed: int = 0) -> MaskedBatch:
    """Mask whole codons of CDS segments, aligned to each segment's own frame.

    The number of codons is ``rate * n_codons`` rounded stochastically, so
    the expected covered fraction equals ``rate`` even for short segments.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    tokens = np.asarray(tokens)
    starts = []
    for start, end, kind in segments:
        if kind == CDS:
            starts.extend(range(start, end - 2, 3))
    rng = np.random.default_rng(rng_seed)
    k = int(np.floor(rate * len(starts) + rng.random())) if starts else 0
    k = min(k, len(starts))
    chosen = rng.choice(len(starts), size=k, replace=False) if k else np.array([], dtype=np.int64)
    selected = np.zeros(tokens.shape, dtype=bool)
    for c in np.sort(chosen):
        s = starts[int(c)]
        selected[s:s + 3] = True
    inp = tokens.copy()
    inp[selected] = MASK
    target = np.where(selected, tokens, IGNORE_INDEX).astype(np.int64)
    return MaskedBatch(inp, target, selected)


# -- dataset container -------------------------------------------------------
def save_dataset(samples: list, path, config: dict | None = None):
    """Packed samples as ``tokens``, a segment table and flat amino-acid targets."""
    if not samples:
        raise EmptyInput("no samples to save")
    tokens = np.stack([s.tokens for s in samples]).astype(np.int32)
    seg_rows, aa = [], []
    for i, s in enumerate(samples):
        cds_i = 0
        for start, end, kind in s.segments:
            n_aa = len(s.aa_targets[cds_i]) if kind == CDS else 0
            seg_rows.append((i, start, end, _KIND_CODE[kind], n_aa))
            if kind == CDS:
                aa.append(s.aa_targets[cds_i])
                cds_i += 1
    meta = {
        "record_ids": [s.record_ids for s in samples],
        "truncated_bases": [s.truncated_bases for s in samples],
        "config": config or {},
    }
    tensors = {
        "tokens": tokens,
        "segments": np.asarray(seg_rows, dtype=np.int32).reshape(-1, 5),
        "aa_targets": np.concatenate(aa).astype(np.int32) if aa else np.zeros(0, np.int32),
    }
    return write_container(path, MAGICS["dataset"], tensors, meta)


def load_dataset(path) -> list[PackedSample]:
    tensors, meta = read_container(path, MAGICS["dataset"])
    tokens = tensors["tokens"]
    samples = [PackedSample(tokens[i].copy(), [], record_ids=list(meta["record_ids"][i]),
                            truncated_bases=int(meta["truncated_bases"][i]))
               for i in range(tokens.shape[0])]
    aa, offset = tensors["aa_targets"], 0
    for i, start, end, code, n_aa in tensors["segments"].tolist():
        kind = _CODE_KIND[code]
        samples[i].segments.append((start, end, kind))
        if kind == CDS:
            samples[i].aa_targets.append(aa[offset:offset + n_aa].copy())
            samples[i].frame_offsets.append(start)
            offset += n_aa
    return samples


def write_manifest(records: Iterable[CdsRecord], path):
    with open(Path(path), "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "cds": r.cds.bases, "protein": str(r.protein)}) + "\n")


__all__ = [
    "CDS", "DNA", "CdsRecord", "FastaRecord", "MaskedBatch", "PackedSample",
    "TokenVocab", "aligned_cds_sample", "dna_sample", "eligible_positions", "iter_fasta",
    "load_dataset", "mask_codon_span", "mask_random", "pack_cds", "parse_cds_manifest",
    "parse_fasta", "read_cds_manifest", "read_fasta", "sample_dna_window", "save_dataset",
    "write_manifest",
]
