"""Small seeded sample data shipped with the package.

``sample.fa`` holds 50 genomic-like records and ``sample_cds.jsonl`` a few
hundred coding sequences with a skewed codon usage. Both are regenerated
bit-identically by :func:`write_fixtures`.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .seqcore import ALL_CODONS, standard_table

FASTA_NAME = "sample.fa"
CDS_NAME = "sample_cds.jsonl"
FIXTURE_SEED = 20240601


def data_path(name: str) -> Path:
    return Path(str(resources.files("lifecode.data").joinpath(name)))


def sample_fasta_path() -> Path:
    return data_path(FASTA_NAME)


def sample_cds_path() -> Path:
    return data_path(CDS_NAME)


def _biased_codons(rng: np.random.Generator):
    table = standard_table()
    by_aa: dict[str, list[str]] = {}
    for c in ALL_CODONS:
        by_aa.setdefault(table.forward[c], []).append(c)
    weights = {aa: rng.dirichlet(np.full(len(cs), 0.7)) for aa, cs in by_aa.items()}
    return by_aa, weights


def generate_cds(n: int, rng: np.random.Generator, min_codons: int = 20, max_codons: int = 120) -> list[tuple]:
    by_aa, weights = _biased_codons(rng)
    residues = [aa for aa in by_aa if aa not in ("*", "M")]
    aa_freq = rng.dirichlet(np.full(len(residues), 3.0))
    out = []
    for i in range(n):
        k = int(rng.integers(min_codons, max_codons + 1))
        prot = ["M"] + [residues[j] for j in rng.choice(len(residues), size=k - 2, p=aa_freq)] + ["*"]
        codons = [by_aa[a][int(rng.choice(len(by_aa[a]), p=weights[a]))] for a in prot]
        out.append((f"cds{i:04d}", "".join(codons), "".join(prot)))
    return out


def generate_fasta(n: int, rng: np.random.Generator, min_len: int = 400, max_len: int = 2400) -> str:
    lines = []
    for i in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        gc = rng.uniform(0.35, 0.65)
        p = np.array([1 - gc, gc, gc, 1 - gc]) / 2.0
        seq = np.array(list("ACGT"))[rng.choice(4, size=length, p=p)]
        # sprinkle a few ambiguity codes
        for j in rng.choice(length, size=int(rng.integers(0, 3)), replace=False):
            seq[j] = "N"
        text = "".join(seq)
        lines.append(f">chr_fixture_{i:02d} synthetic gc={gc:.2f}")
        lines.extend(text[k:k + 70] for k in range(0, length, 70))
    return "\n".join(lines) + "\n"


def write_fixtures(directory, seed: int = FIXTURE_SEED, n_fasta: int = 50, n_cds: int = 300):
    import json

    directory = Path(directory)
    rng = np.random.default_rng(seed)
    (directory / FASTA_NAME).write_text(generate_fasta(n_fasta, rng))
    with open(directory / CDS_NAME, "w") as fh:
        for rid, cds, prot in generate_cds(n_cds, rng):
            fh.write(json.dumps({"id": rid, "cds": cds, "protein": prot}) + "\n")


if __name__ == "__main__":
    write_fixtures(Path(__file__).parent / "data")
