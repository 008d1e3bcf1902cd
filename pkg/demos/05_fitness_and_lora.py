"""
Downstream use: mutation scores and a small fine-tune
=====================================================

Zero-shot fitness masks one codon at a time and compares the model's log
probability of the mutant and wild-type codons. LoRA fine-tuning then
trains low-rank adapters plus a pooled linear head on a GC-content task.
"""

from lifecode.config import preset
from lifecode.evalkit import FitnessScorer, encode_labeled, finetune_lora, gc_toy_task
from lifecode.model import LifeCodeModel, init_model

mc, _ = preset("desk")
model = LifeCodeModel(mc, init_model(mc, seed=0))

wt = "ATGGCTAAAGGCTGGCTGTAA"
scorer = FitnessScorer(model, wt)
for pos, alt in [(1, "GCC"), (2, "TAG"), (4, "TGT")]:
    print(f"codon {pos} {wt[3 * pos:3 * pos + 3]}->{alt}: {scorer.mutation_score(pos, alt):+.4f}")

# the base model is untrained here; adapters and head learn the task on their own
tr_seqs, tr_y = gc_toy_task(128, 150, 0)
te_seqs, te_y = gc_toy_task(64, 150, 1)
res = finetune_lora(model, (encode_labeled(tr_seqs, 153), tr_y), (encode_labeled(te_seqs, 153), te_y),
                    rank=4, epochs=3)
for h in res.history:
    print(h)
print(res.metrics)
