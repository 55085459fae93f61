"""Learning which phone realizes which phoneme.

Language ``onetomany`` maps [k] to either /k/ or /q/ in its table but only
ever uses /k/.  In ``tagalog`` the phone [ʃ] may stand for /s/ or /ʃ/; the
corpus realizes it as /s/ most of the time.  A graph trained from phoneme
transcripts alone should recover both facts.
"""
import numpy as np

from allograph import presets
from allograph.cli import format_graph_table
from allograph.inventory import load_feature_table
from allograph.synthetic import generate_synthetic
from allograph.training import TrainConfig, train

spec = presets.disambiguation(seed=0)
inventory = load_feature_table().subset(spec.phones)
corpus, _ = generate_synthetic(spec)
print(len(corpus), "utterances in", corpus.languages)

config = TrainConfig(mode="allograph-uc", epochs=15, lr=0.01, graph_lr=0.05, seed=0)
result = train(corpus, inventory, config, mappings=spec.mapping_tables(inventory))
print("loss per epoch:", np.round(result.loss_curve, 3))

# Rows are phones; columns are the phonemes each may realize, * marks the dominant arc.
for lang in ("onetomany", "tagalog"):
    print()
    print(format_graph_table(result.model.graphs[lang]), end="")

planted = spec.implied_arc_weights("tagalog")
print("\nplanted P(/s/ | [ʃ]) in tagalog:", round(planted[("ʃ", "s")], 2))
