"""Quickstart: generate a tiny corpus, train an allophone-graph model, score it.

Run from the repository root:  python3 demos/quickstart.py
Everything goes through the same entry point as the ``allograph`` command.
"""
import sys
import tempfile
from pathlib import Path

from allograph import cli

work = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="allograph-"))
corpus, ck = work / "corpus", work / "ck"

# One toy language, noiseless one-hot features, identity phone-to-phoneme maps.
cli.main(["gen-synthetic", "--seed", "0", "--preset", "quickstart", "--out", str(corpus)])

# Default mode is the universal-constraint allophone graph.
cli.main(["train", "--seed", "0", "--corpus", str(corpus), "--mappings", str(corpus / "mappings.tsv"),
          "--checkpoint", str(ck), "--epochs", "30", "--lr", "0.03"])

# Phoneme error rates per language; phone reports use the hidden phone sidecar.
cli.main(["eval", "--checkpoint", str(ck), "--corpus", str(corpus), "--out", str(work / "eval"),
          "--phone-level"])

print(f"\nartifacts in {work}")
for p in sorted(work.rglob("*.txt")):
    if "features" not in p.parts:
        print("  ", p.relative_to(work))
