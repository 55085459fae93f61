"""Three ways to tie a shared phone layer to language phonemes.

allograph-uc    each phone spreads probability over its allowed phonemes
allograph-free  unnormalized arc weights, renormalized per frame
allomatrix      a dense phone-by-phoneme matrix with no mapping constraint

The one-to-many preset has phonemes with several possible phones, which is
where the constrained graphs should pay off.  Substitution error rate on a
held-out corpus, averaged over a few seeds, is printed per mode.
"""
import numpy as np

from allograph import presets
from allograph.inventory import load_feature_table
from allograph.metrics import score
from allograph.synthetic import generate_synthetic
from allograph.training import TrainConfig, decode_phonemes, train

universal = load_feature_table()
modes = ("allograph-uc", "allograph-free", "allomatrix")
ser = {m: [] for m in modes}

for seed in range(3):
    spec = presets.one_to_many(seed=seed)
    inventory = universal.subset(spec.phones)
    corpus, _ = generate_synthetic(spec)
    held_out, _ = generate_synthetic(presets.one_to_many(seed=1000 + seed))
    test = held_out.by_language("target")
    refs = {u.utterance_id: u.phonemes for u in test}
    for mode in modes:
        cfg = TrainConfig(mode=mode, epochs=15, lr=0.01, graph_lr=0.05, seed=seed)
        model = train(corpus, inventory, cfg, mappings=spec.mapping_tables(inventory)).model
        ser[mode].append(score(decode_phonemes(model, test), refs).ser)
        print(f"seed {seed}  {mode:15s} SER {ser[mode][-1]:6.2f}")

print()
for mode in modes:
    print(f"{mode:15s} mean SER {np.mean(ser[mode]):6.2f}")
