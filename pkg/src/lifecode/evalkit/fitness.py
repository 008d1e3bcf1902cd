"""Zero-shot mutation scoring by masked marginals."""

from __future__ import annotations

import numpy as np

from ..errors import PositionOutOfRange
from ..ingest import TokenVocab
from ..model import LifeCodeModel
from ..numerics.tensor import no_grad
from ..seqcore import ALL_CODONS, MASK, NucleotideSeq, codon_index


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def _codon_ids() -> np.ndarray:
    return np.array([TokenVocab.encode(c) for c in ALL_CODONS])   # (64, 3)


def masked_codon_log_probs(model: LifeCodeModel, tokens: np.ndarray, pos: int) -> np.ndarray:
    """Log-probability of each of the 64 codons at codon ``pos`` with it masked.

    The three bases are treated as conditionally independent given the
    masked context, so a codon scores the sum of its three base reads.
    """
    masked = tokens.copy()
    masked[3 * pos:3 * pos + 3] = MASK
    with no_grad():
        logits = model.forward(masked[None, :], with_protein=False).nt_logits.data[0]
    lp = log_softmax_np(logits[3 * pos:3 * pos + 3].astype(np.float64))
    ids = _codon_ids()
    return lp[0, ids[:, 0]] + lp[1, ids[:, 1]] + lp[2, ids[:, 2]]


class FitnessScorer:
    """Caches one masked forward pass per codon position of a wild-type CDS."""

    def __init__(self, model: LifeCodeModel, wt_cds):
        seq = wt_cds if isinstance(wt_cds, NucleotideSeq) else NucleotideSeq.from_string(str(wt_cds))
        self.model = model
        self.bases = seq.bases
        self.tokens = seq.to_tokens()
        pad = (-len(self.tokens)) % 3
        if pad:
            self.tokens = np.concatenate([self.tokens, np.zeros(pad, dtype=self.tokens.dtype)])
        self.n_codons = len(seq) // 3
        self._cache: dict[int, np.ndarray] = {}

    def codon_scores(self, pos: int) -> np.ndarray:
        if not 0 <= pos < self.n_codons:
            raise PositionOutOfRange(f"codon position {pos} outside [0, {self.n_codons})")
        if pos not in self._cache:
            self._cache[pos] = masked_codon_log_probs(self.model, self.tokens, pos)
        return self._cache[pos]

    def mutation_score(self, pos: int, alt: str) -> float:
        lp = self.codon_scores(pos)
        wt = self.bases[3 * pos:3 * pos + 3]
        return float(lp[codon_index(alt.upper())] - lp[codon_index(wt)])

    def score(self, mutations) -> float:
        return float(sum(self.mutation_score(p, a) for p, a in mutations))


def zero_shot_fitness(model: LifeCodeModel, wt_cds, mutations) -> float:
    """Sum over ``(codon position, alt codon)`` of ``log p(alt) - log p(wt)``."""
    return FitnessScorer(model, wt_cds).score(mutations)
