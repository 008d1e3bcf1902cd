"""Alphabets, complementation, transcription/translation and codon statistics.

All sequence types are immutable. RNA is held internally with ``T`` and only
shows ``U`` when rendered with :func:`str`.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    InvalidBase,
    InvalidResidue,
    LengthNotMultipleOfThree,
    StopInsideSequence,
)

# Nucleotide-level token vocabulary. Ids are fixed across the codebase.
PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
BASES = "ACGT"
TOKENS = SPECIAL_TOKENS + tuple(BASES)
NT_VOCAB_SIZE = len(TOKENS)
BASE_TO_ID = {b: 5 + i for i, b in enumerate(BASES)}
ID_TO_BASE = {v: k for k, v in BASE_TO_ID.items()}
UNKNOWN_BASE = "N"

# complement as a permutation of token ids: specials fixed, A<->T, C<->G
COMPLEMENT_IDS = np.array([0, 1, 2, 3, 4, 8, 7, 6, 5], dtype=np.int64)
_COMPLEMENT = {"A": "T", "C": "G", "G": "C", "T": "A", UNKNOWN_BASE: UNKNOWN_BASE}
_RC_TRANS = str.maketrans("ACGTN", "TGCAN")

# IUPAC ambiguity codes accepted on input and collapsed to the unknown slot
AMBIGUITY_CODES = frozenset("NRYKMSWBDHV")

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
STOP = "*"
AA_CLASSES = AMINO_ACIDS + STOP
AA_TO_ID = {a: i for i, a in enumerate(AA_CLASSES)}
N_AA_CLASSES = len(AA_CLASSES)

# NCBI translation table 1, codons enumerated in TCAG order
_NCBI_ORDER = "TCAG"
_NCBI_TABLE1 = "FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRRIIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG"


@dataclass(frozen=True)
class NucleotideSeq:
    """Validated nucleotide string.

    ``bases`` only ever contains ``ACGT`` plus ``N``, the placeholder that
    maps to the ``[UNK]`` token. ``alphabet`` remembers whether the sequence
    arrived (or should be shown) as RNA.
    """

    bases: str
    alphabet: str = "DNA"

    def __post_init__(self):
        if self.alphabet not in ("DNA", "RNA"):
            raise ValueError(f"unknown alphabet {self.alphabet!r}")
        bad = set(self.bases) - set("ACGTN")
        if bad:
            raise InvalidBase(f"invalid bases {sorted(bad)}")

    @classmethod
    def from_string(cls, text: str, ambiguity: str = "error") -> "NucleotideSeq":
        """Parse DNA or RNA text.

        ``ambiguity="unk"`` collapses IUPAC ambiguity codes to ``N``;
        ``"error"`` rejects them.
        """
        s = "".join(text.split()).upper()
        has_u, has_t = "U" in s, "T" in s
        if has_u and has_t:
            raise InvalidBase("sequence mixes T and U")
        alphabet = "RNA" if has_u else "DNA"
        s = s.replace("U", "T")
        out = []
        for ch in s:
            if ch in "ACGT":
                out.append(ch)
            elif ch in AMBIGUITY_CODES and ambiguity == "unk":
                out.append(UNKNOWN_BASE)
            else:
                raise InvalidBase(f"invalid base {ch!r}")
        return cls("".join(out), alphabet)

    def __len__(self) -> int:
        return len(self.bases)

    def __str__(self) -> str:
        return self.bases.replace("T", "U") if self.alphabet == "RNA" else self.bases

    def to_tokens(self) -> np.ndarray:
        return np.array([BASE_TO_ID.get(b, UNK) for b in self.bases], dtype=np.int32)


@dataclass(frozen=True)
class AminoAcidSeq:
    residues: str

    def __post_init__(self):
        bad = set(self.residues) - set(AA_CLASSES)
        if bad:
            raise InvalidResidue(f"invalid residues {sorted(bad)}")

    @classmethod
    def from_string(cls, text: str) -> "AminoAcidSeq":
        return cls("".join(text.split()).upper())

    def __len__(self) -> int:
        return len(self.residues)

    def __str__(self) -> str:
        return self.residues

    def class_ids(self) -> np.ndarray:
        return np.array([AA_TO_ID[a] for a in self.residues], dtype=np.int32)


@dataclass(frozen=True)
class CodonTable:
    """Standard genetic code plus one canonical codon per amino acid."""

    forward: Mapping[str, str]
    canonical: Mapping[str, str]
    table_id: str
    stop_codon: str = "TAA"

    def __post_init__(self):
        if len(self.forward) != 64:
            raise ValueError("forward table must cover all 64 codons")
        for aa, codon in self.canonical.items():
            if self.forward[codon] != aa:
                raise ValueError(f"canonical codon {codon} does not encode {aa}")
        if self.forward[self.stop_codon] != STOP:
            raise ValueError(f"{self.stop_codon} is not a stop codon")

    def synonymous(self, aa: str) -> list[str]:
        return sorted(c for c, a in self.forward.items() if a == aa)


def _ncbi_forward() -> dict[str, str]:
    codons = ("".join(p) for p in itertools.product(_NCBI_ORDER, repeat=3))
    return dict(zip(codons, _NCBI_TABLE1))


def parse_canonical_table(text: str) -> CodonTable:
    """Parse the ``<AA> <codon>`` data file format (header carries table_id)."""
    header: dict[str, str] = {}
    canonical: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for field in line[1:].split():
                key, _, value = field.partition("=")
                header[key] = value
            continue
        aa, codon = line.split()
        canonical[aa.upper()] = codon.upper().replace("U", "T")
    if "table_id" not in header:
        raise ValueError("canonical codon file lacks a table_id header")
    if set(canonical) != set(AMINO_ACIDS):
        raise ValueError("canonical codon file must list all 20 amino acids exactly once")
    return CodonTable(_ncbi_forward(), canonical, header["table_id"], header.get("stop", "TAA"))


@functools.lru_cache(maxsize=None)
def standard_table() -> CodonTable:
    """The shipped table: NCBI code 1 forward, human most-frequent canonical."""
    text = resources.files("lifecode.data").joinpath("canonical_codons.txt").read_text()
    return parse_canonical_table(text)


def complement(b):
    """Complement a base, a token id or a special token; specials are fixed points."""
    if isinstance(b, (int, np.integer)):
        if not 0 <= b < NT_VOCAB_SIZE:
            raise InvalidBase(f"token id {b} out of range")
        return int(COMPLEMENT_IDS[b])
    if b in SPECIAL_TOKENS:
        return b
    if b == "U":
        return "A"
    try:
        return _COMPLEMENT[b]
    except KeyError:
        raise InvalidBase(f"invalid base {b!r}") from None


def reverse_complement(s: NucleotideSeq) -> NucleotideSeq:
    return NucleotideSeq(s.bases.translate(_RC_TRANS)[::-1], s.alphabet)


def reverse_complement_tokens(tokens: np.ndarray) -> np.ndarray:
    """Token-id reverse complement along the last axis."""
    return COMPLEMENT_IDS[np.asarray(tokens)][..., ::-1].astype(np.asarray(tokens).dtype)


def transcribe(d: NucleotideSeq) -> NucleotideSeq:
    if d.alphabet != "DNA":
        raise ValueError("transcribe expects a DNA sequence")
    return NucleotideSeq(d.bases, "RNA")


def reverse_transcribe(r: NucleotideSeq) -> NucleotideSeq:
    if r.alphabet != "RNA":
        raise ValueError("reverse_transcribe expects an RNA sequence")
    return NucleotideSeq(r.bases, "DNA")


def _as_bases(seq) -> str:
    if isinstance(seq, NucleotideSeq):
        return seq.bases
    return NucleotideSeq.from_string(seq).bases


def translate(cds, table: CodonTable | None = None) -> AminoAcidSeq:
    """Translate a codon-aligned sequence; stops are emitted as ``*``.

    Codons containing the unknown placeholder translate to ``X`` and are
    therefore rejected by :class:`AminoAcidSeq`.
    """
    table = table or standard_table()
    bases = _as_bases(cds)
    if len(bases) % 3:
        raise LengthNotMultipleOfThree(f"length {len(bases)} is not a multiple of 3")
    try:
        residues = "".join(table.forward[bases[i:i + 3]] for i in range(0, len(bases), 3))
    except KeyError as exc:
        raise InvalidBase(f"untranslatable codon {exc.args[0]!r}") from None
    return AminoAcidSeq(residues)


def reverse_translate(p, table: CodonTable | None = None) -> NucleotideSeq:
    table = table or standard_table()
    residues = p.residues if isinstance(p, AminoAcidSeq) else AminoAcidSeq.from_string(p).residues
    body, tail = residues, ""
    if body.endswith(STOP):
        body, tail = body[:-1], STOP
    if STOP in body:
        raise StopInsideSequence("stop symbol before the final residue")
    codons = [table.canonical[a] for a in body]
    if tail:
        codons.append(table.stop_codon)
    return NucleotideSeq("".join(codons))


def codon_index(c: str) -> int:
    """Map a codon to ``16*v0 + 4*v1 + v2`` with A=0, C=1, G=2, T=3."""
    c = c.upper().replace("U", "T")
    if len(c) != 3:
        raise InvalidBase(f"codon must have 3 bases, got {c!r}")
    idx = 0
    for ch in c:
        v = BASES.find(ch)
        if v < 0:
            raise InvalidBase(f"invalid base {ch!r}")
        idx = 4 * idx + v
    return idx


def codon_from_index(i: int) -> str:
    if not 0 <= i < 64:
        raise ValueError(f"codon index {i} out of range")
    return BASES[i // 16] + BASES[(i // 4) % 4] + BASES[i % 4]


ALL_CODONS = tuple(codon_from_index(i) for i in range(64))


def codon_usage(corpus: Iterable, table: CodonTable | None = None) -> dict[str, dict[str, float]]:
    """Per amino acid, the percentage use of each synonymous codon.

    Amino acids never observed are omitted.
    """
    table = table or standard_table()
    counts = np.zeros(64, dtype=np.int64)
    for seq in corpus:
        bases = _as_bases(seq)
        if len(bases) % 3:
            raise LengthNotMultipleOfThree(f"length {len(bases)} is not a multiple of 3")
        for i in range(0, len(bases), 3):
            codon = bases[i:i + 3]
            if UNKNOWN_BASE not in codon:
                counts[codon_index(codon)] += 1
    usage: dict[str, dict[str, float]] = {}
    for aa in AA_CLASSES:
        syn = table.synonymous(aa)
        total = sum(counts[codon_index(c)] for c in syn)
        if total == 0:
            continue
        usage[aa] = {c: 100.0 * counts[codon_index(c)] / total for c in syn}
    return usage


def proteins_match(translated: str, protein: str) -> bool:
    """Compare protein strings, tolerating a single trailing stop on either side."""
    return translated.rstrip(STOP) == protein.rstrip(STOP) and (
        translated.count(STOP) <= 1 and protein.count(STOP) <= 1
    )
