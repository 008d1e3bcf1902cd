"""DNA/protein pair sets for the transcription-translation matching task."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidBase, LengthNotMultipleOfThree
from ..seqcore import AMINO_ACIDS, AminoAcidSeq, NucleotideSeq, proteins_match, translate

MATCH, MISMATCH = "match", "mismatch"


@dataclass(frozen=True)
class PairExample:
    dna: NucleotideSeq
    protein: AminoAcidSeq
    label: str
    core: tuple          # (start, end) of the coding part inside ``dna``
    source_id: str = ""

    def core_bases(self) -> str:
        return self.dna.bases[self.core[0]:self.core[1]]


def pair_matches(ex: PairExample) -> bool:
    """Whether the coding core translates to the paired protein."""
    try:
        return proteins_match(str(translate(ex.core_bases())), str(ex.protein))
    except (LengthNotMultipleOfThree, InvalidBase):
        return False


def _random_bases(rng, n: int) -> str:
    return "".join(np.array(list("ACGT"))[rng.integers(0, 4, size=n)])


def _corrupt_dna(core: str, rng) -> str:
    kind = rng.integers(0, 3)
    i = int(rng.integers(0, len(core)))
    if kind == 0:
        alt = "ACGT".replace(core[i], "")
        return core[:i] + alt[int(rng.integers(0, 3))] + core[i + 1:]
    if kind == 1:
        return core[:i] + _random_bases(rng, 1) + core[i:]
    return core[:i] + core[i + 1:] if len(core) > 3 else core + _random_bases(rng, 1)


def _corrupt_protein(prot: str, rng) -> str:
    kind = rng.integers(0, 3)
    body = prot.rstrip("*") or "M"
    tail = prot[len(body):]
    i = int(rng.integers(0, len(body)))
    if kind == 0:
        alt = AMINO_ACIDS.replace(body[i], "")
        body = body[:i] + alt[int(rng.integers(0, len(alt)))] + body[i + 1:]
    elif kind == 1:
        body = body[:i] + AMINO_ACIDS[int(rng.integers(0, 20))] + body[i:]
    elif len(body) > 1:
        body = body[:i] + body[i + 1:]
    else:
        body = body + AMINO_ACIDS[int(rng.integers(0, 20))]
    return body + tail


def build_dogma_pairs(records: list, neg_ratio: int = 2, seed: int = 0, flank: int = 100) -> list[PairExample]:
    """One positive and ``neg_ratio`` negatives per record.

    Positives wrap the CDS in ``flank`` random bases on each side.
    Negatives corrupt the coding core or the protein with seeded
    substitutions, insertions and deletions until the pair stops matching.
    """
    rng = np.random.default_rng(seed)
    out = []
    for rec in records:
        left, right = _random_bases(rng, flank), _random_bases(rng, flank)
        core = rec.cds.bases
        prot = str(rec.protein)

        def wrap(c: str) -> NucleotideSeq:
            return NucleotideSeq(left + c + right)

        out.append(PairExample(wrap(core), rec.protein, MATCH, (flank, flank + len(core)), rec.id))
        for _ in range(neg_ratio):
            side = int(rng.integers(0, 2))
            c, p = core, prot
            while True:
                if side == 0:
                    c = _corrupt_dna(c, rng)
                else:
                    p = _corrupt_protein(p, rng)
                ex = PairExample(wrap(c), AminoAcidSeq(p), MISMATCH, (flank, flank + len(c)), rec.id)
                if not pair_matches(ex):
                    break
            out.append(ex)
    return out
