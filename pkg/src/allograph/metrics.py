"""Error rates, articulatory feature distance and confusion statistics."""
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .inventory import InventoryError

MATCH, SUB, INS, DEL = "match", "sub", "ins", "del"


@dataclass
class EditAlignment:
    ops: list
    insertions: int
    deletions: int
    substitutions: int

    @property
    def distance(self):
        return self.insertions + self.deletions + self.substitutions

    def substitution_pairs(self):
        """(reference symbol, hypothesis symbol) for every substitution."""
        return [(r, h) for op, h, r in self.ops if op == SUB]


def align_edit(hyp, ref):
    """Unit-cost Levenshtein alignment of ``hyp`` against ``ref``.

    Ops are ``(kind, hyp_symbol, ref_symbol)`` with None for the missing
    side.  Among equal-cost alignments the backtrace prefers substitution,
    then insertion, then deletion.
    """
    hyp, ref = list(hyp), list(ref)
    n, m = len(hyp), len(ref)
    # plain lists: scalar numpy indexing dominates the cost at these sizes
    d = [list(range(m + 1))]
    for i in range(1, n + 1):
        prev, row, h = d[-1], [i], hyp[i - 1]
        for j in range(1, m + 1):
            row.append(min(prev[j - 1] + (h != ref[j - 1]), prev[j] + 1, row[j - 1] + 1))
        d.append(row)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1]):
            ops.append((MATCH if hyp[i - 1] == ref[j - 1] else SUB, hyp[i - 1], ref[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append((INS, hyp[i - 1], None))
            i -= 1
        else:
            ops.append((DEL, None, ref[j - 1]))
            j -= 1
    ops.reverse()
    counts = Counter(op for op, _, _ in ops)
    return EditAlignment(ops, counts[INS], counts[DEL], counts[SUB])


def afd(a, b, inventory):
    """L1 distance between the signed feature vectors of two phones."""
    if a not in inventory:
        raise InventoryError(f"no articulatory features for {a!r}")
    if b not in inventory:
        raise InventoryError(f"no articulatory features for {b!r}")
    return int(np.abs(inventory.vector(a) - inventory.vector(b)).sum())


def _rate(count, ref_len):
    # empty references count errors against a length of one
    return 100.0 * count / max(ref_len, 1)


@dataclass
class UtteranceScore:
    utterance_id: str
    ref_length: int
    insertions: int
    deletions: int
    substitutions: int
    afd_total: float

    @property
    def errors(self):
        return self.insertions + self.deletions + self.substitutions

    @property
    def per(self):
        return _rate(self.errors, self.ref_length)

    @property
    def ser(self):
        return _rate(self.substitutions, self.ref_length)

    @property
    def mean_afd(self):
        return self.afd_total / self.substitutions if self.substitutions else 0.0


@dataclass
class ScoreReport:
    utterances: list = field(default_factory=list)
    confusions: Counter = field(default_factory=Counter)
    confusion_afd: dict = field(default_factory=dict)
    missing: list = field(default_factory=list)
    label: str = "total"

    def _sum(self, attr):
        return sum(getattr(u, attr) for u in self.utterances)

    @property
    def ref_length(self):
        return self._sum("ref_length")

    @property
    def insertions(self):
        return self._sum("insertions")

    @property
    def deletions(self):
        return self._sum("deletions")

    @property
    def substitutions(self):
        return self._sum("substitutions")

    @property
    def per(self):
        return _rate(self.insertions + self.deletions + self.substitutions, self.ref_length)

    @property
    def ser(self):
        return _rate(self.substitutions, self.ref_length)

    @property
    def afd_defined(self):
        return self.substitutions > 0

    @property
    def mean_afd(self):
        """Mean AFD over all substitution pairs; 0 (with ``afd_defined`` false) when there are none."""
        subs = self.substitutions
        return self._sum("afd_total") / subs if subs else 0.0

    def top_confusions(self, k=3):
        """Most frequent (correct, incorrect) pairs; ties ordered by symbols."""
        ranked = sorted(self.confusions.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:k]


def score(hyps, refs, inventory=None, label="total"):
    """Score hypothesis sequences against references, keyed by utterance id.

    References without a hypothesis are listed in ``missing`` and excluded.
    AFD needs ``inventory``; without it AFD totals stay 0.
    """
    report = ScoreReport(label=label)
    for utt in sorted(refs):
        if utt not in hyps:
            report.missing.append(utt)
            continue
        ali = align_edit(hyps[utt], refs[utt])
        afd_total = 0.0
        for r, h in ali.substitution_pairs():
            report.confusions[(r, h)] += 1
            if inventory is not None:
                dist = afd(r, h, inventory)
                report.confusion_afd[(r, h)] = dist
                afd_total += dist
        report.utterances.append(UtteranceScore(utt, len(refs[utt]), ali.insertions, ali.deletions,
                                                ali.substitutions, afd_total))
    return report


def merge_reports(reports, label="total"):
    merged = ScoreReport(label=label)
    for rep in reports:
        merged.utterances.extend(rep.utterances)
        merged.confusions.update(rep.confusions)
        merged.confusion_afd.update(rep.confusion_afd)
        merged.missing.extend(rep.missing)
    return merged


def format_report(reports, meta=None, per_utterance=True):
    """Key-value text for one or more reports (e.g. per-language rows then a total)."""
    lines = ["# score report"]
    lines += [f"{k} = {v}" for k, v in (meta or {}).items()]
    for rep in reports:
        lines.append(f"[{rep.label}]")
        lines.append(f"utterances = {len(rep.utterances)}")
        lines.append(f"ref_length = {rep.ref_length}")
        lines.append(f"insertions = {rep.insertions}")
        lines.append(f"deletions = {rep.deletions}")
        lines.append(f"substitutions = {rep.substitutions}")
        lines.append(f"per = {rep.per:.4f}")
        lines.append(f"ser = {rep.ser:.4f}")
        lines.append(f"mean_afd = {rep.mean_afd:.4f}")
        lines.append(f"afd_defined = {str(rep.afd_defined).lower()}")
        if rep.missing:
            lines.append(f"missing = {' '.join(rep.missing)}")
        for (r, h), count in rep.top_confusions(k=len(rep.confusions)):
            dist = rep.confusion_afd.get((r, h), "")
            lines.append(f"confusion = [{r}] -> [{h}]\t{count}\t{dist}")
        if per_utterance:
            for u in rep.utterances:
                lines.append(f"utt = {u.utterance_id}\t{u.ref_length}\t{u.insertions}\t{u.deletions}\t"
                             f"{u.substitutions}\t{u.per:.1f}\t{u.ser:.1f}\t{u.mean_afd:.1f}")
    return "\n".join(lines) + "\n"


def parse_report(text):
    """Sections of a formatted report as {label: {key: value}}; header keys sit under ''.

    Repeated keys (confusion, utt) collect into lists.
    """
    sections, current = {"": {}}, ""
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = {}
            continue
        key, _, value = line.partition(" = ")
        if key in ("confusion", "utt"):
            sections[current].setdefault(key, []).append(value)
        else:
            sections[current][key] = value
    return sections
