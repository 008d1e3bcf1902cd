"""Codon embedding table export."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..container import MAGICS, write_container
from ..errors import ContainerIOError
from ..ingest import TokenVocab
from ..model import LifeCodeModel
from ..numerics.tensor import no_grad
from ..seqcore import ALL_CODONS, translate


def codon_embedding_table(model: LifeCodeModel) -> tuple[list[str], list[str], np.ndarray]:
    """Embed each of the 64 codons on its own through embed and condensation."""
    tokens = np.stack([TokenVocab.encode(c) for c in ALL_CODONS])      # (64, 3)
    with no_grad():
        vecs = model.tokenizer.tokens_to_codons(tokens).data[:, 0, :]
    labels = [str(translate(c)) for c in ALL_CODONS]
    return list(ALL_CODONS), labels, vecs


def export_codon_embeddings(model: LifeCodeModel, out_prefix) -> dict:
    """Write ``<prefix>.lcem`` (container) and ``<prefix>.csv``; returns the paths."""
    codons, labels, vecs = codon_embedding_table(model)
    prefix = Path(out_prefix)
    cont = write_container(prefix.with_suffix(".lcem"), MAGICS["embeddings"],
                           {"embeddings": vecs.astype(np.float32)},
                           {"codons": codons, "amino_acids": labels})
    csv_path = prefix.with_suffix(".csv")
    try:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["codon", "amino_acid"] + [f"e{i}" for i in range(vecs.shape[1])])
            for c, a, v in zip(codons, labels, vecs):
                w.writerow([c, a] + [repr(float(x)) for x in v])
    except OSError as exc:
        raise ContainerIOError(f"cannot write {csv_path}: {exc}") from exc
    return {"container": str(cont), "csv": str(csv_path), "rows": len(codons)}
