"""Pronunciation variants of lexicon words.

The word ``hello`` is /h e l o/, and its /e/ is spoken as [ɛ] one time in
five.  After training, the pronunciations command aligns every correctly
recognized occurrence and tallies the phone strings.
"""
import sys
import tempfile
from pathlib import Path

from allograph import cli

work = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="allograph-"))
corpus, ck, out = work / "corpus", work / "ck", work / "pronunciations.tsv"

cli.main(["gen-synthetic", "--seed", "0", "--preset", "pronunciations", "--out", str(corpus)])
cli.main(["train", "--seed", "0", "--corpus", str(corpus), "--mappings", str(corpus / "mappings.tsv"),
          "--checkpoint", str(ck), "--epochs", "10", "--lr", "0.01", "--graph-lr", "0.05"])
cli.main(["pronunciations", "--checkpoint", str(ck), "--corpus", str(corpus),
          "--lexicon", str(corpus / "lexicon.tsv"), "--out", str(out)])
print(out.read_text(encoding="utf-8"))
