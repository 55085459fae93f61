"""Allophone discovery from forced alignments.

In the ``target`` language /a/ surfaces as [a] 70% and [aː] 30% of the
time, and /ə/ as [ə] 70% and [ɐ] 30%.  The pair [ɐ] -> /ə/ is left out of
the mapping table on purpose.  Closed alignments only use listed arcs;
open alignments let the phone track pick any phone, so the missing arc
shows up as a hypothesized mapping.  Takes about 15 seconds.
"""
from allograph import presets
from allograph.inventory import load_feature_table
from allograph.lingapps import discover_allophones, format_realizations
from allograph.synthetic import generate_synthetic
from allograph.training import TrainConfig, align_corpus, train

spec = presets.discovery(seed=0)
inventory = load_feature_table().subset(spec.phones)
corpus, _ = generate_synthetic(spec)
tables = spec.mapping_tables(inventory)
target = corpus.by_language("target")
print(sum(len(u.phonemes) for u in target), "phoneme tokens in the target language")

model = train(corpus, inventory, TrainConfig(epochs=5, lr=0.01, graph_lr=0.05, seed=0), mappings=tables).model

for open_phones in (False, True):
    alignments, infeasible = align_corpus(model, target, open_phones=open_phones)
    stats = discover_allophones(alignments, tables["target"])
    print("\nopen phones" if open_phones else "\nlisted arcs only")
    print(format_realizations([s for s in stats if s.phoneme in ("a", "ə")], "target"))
