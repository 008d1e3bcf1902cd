"""
Both strands at once
====================

Each embedding carries a forward half and a reverse-complement half. Reading
the reverse-complement sequence therefore gives the same hidden states with
the halves swapped and the positions reversed, exactly and for any weights.
"""

import dataclasses

import numpy as np

from lifecode.config import preset
from lifecode.encoder import strand_reverse
from lifecode.model import LifeCodeModel, init_model
from lifecode.numerics import no_grad
from lifecode.seqcore import NucleotideSeq, reverse_complement

mc, _ = preset("desk")
# same width for embeddings and encoder, so the encoder reads the embeddings directly
mc = dataclasses.replace(mc, encoder=dataclasses.replace(mc.encoder, model_dim=mc.tokenizer.embed_dim))
model = LifeCodeModel(mc, init_model(mc, seed=3))

seq = NucleotideSeq("ATGGCTAAAGGCTGGTAACCGATTGCA")
fwd = seq.to_tokens()[None]
rev = reverse_complement(seq).to_tokens()[None]

with no_grad():
    h_fwd = model.encoder.encode(model.tokenizer.embed(fwd)).data
    h_rev = model.encoder.encode(model.tokenizer.embed(rev)).data

print("hidden shape", h_fwd.shape)
print("max |encode(rc(x)) - R(encode(x))| =", np.abs(h_rev - strand_reverse(h_fwd)).max())
print("max |encode(rc(x)) - encode(x)|    =", np.abs(h_rev - h_fwd).max())
