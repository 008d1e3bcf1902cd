"""
The genetic code as data
========================

Translation, reverse translation and codon usage on the bundled CDS sample.
"""

from lifecode.fixtures import sample_cds_path
from lifecode.ingest import read_cds_manifest
from lifecode.seqcore import NucleotideSeq, codon_usage, reverse_complement, reverse_translate, translate

# a short open reading frame, read on both strands
orf = NucleotideSeq("ATGGCTAAAGGCTGGTAA")
print("forward  ", orf.bases, "->", translate(orf))
print("reverse  ", reverse_complement(orf).bases)

# reverse translation picks one codon per residue, so translating back is exact
protein = "MKWVTFISLL*"
dna = reverse_translate(protein)
print(protein, "->", dna.bases, "->", translate(dna))

# synonymous codon preference across the 50 bundled records
records = read_cds_manifest(sample_cds_path())
usage = codon_usage([r.cds for r in records])
for aa in ("L", "R", "S"):
    ranked = sorted(usage[aa].items(), key=lambda kv: -kv[1])
    print(aa, " ".join(f"{c}:{p:.1f}%" for c, p in ranked))
