"""Allophone discovery and pronunciation-variant collection from joint alignments."""
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .metrics import MATCH, align_edit

BOUNDARY = "#"


@dataclass
class RealizationStat:
    phoneme: str
    phone: str
    count: int
    total: int
    predefined: bool
    contexts: list = field(default_factory=list)

    @property
    def rate(self):
        """Percentage of the phoneme's aligned tokens realized as this phone."""
        return 100.0 * self.count / self.total if self.total else 0.0

    @property
    def hypothesized(self):
        return not self.predefined


@dataclass
class PronunciationEntry:
    language: str
    word: str
    phonemic: tuple
    variants: list
    count: int


def _alignments(alignments):
    return alignments.values() if isinstance(alignments, dict) else alignments


def discover_allophones(alignments, mapping, min_count=5, top_contexts=3):
    """Realization rates and triphone contexts of every (phoneme, phone) pair seen in the alignments.

    Pairs absent from ``mapping`` are hypothesized new mappings and are
    kept only with at least ``min_count`` tokens.  Contexts are taken from
    the per-token phone string with ``#`` at utterance edges.
    """
    counts = Counter()
    totals = Counter()
    contexts = defaultdict(Counter)
    for ali in _alignments(alignments):
        phones = ali.phone_string()
        phonemes = ali.phoneme_string()
        for i, (n, m) in enumerate(zip(phones, phonemes)):
            counts[(m, n)] += 1
            totals[m] += 1
            left = phones[i - 1] if i > 0 else BOUNDARY
            right = phones[i + 1] if i + 1 < len(phones) else BOUNDARY
            contexts[(m, n)][f"{left}{n}{right}"] += 1
    stats = []
    for (m, n), c in counts.items():
        predefined = mapping.has_pair(n, m)
        if not predefined and c < min_count:
            continue
        ranked = sorted(contexts[(m, n)].items(), key=lambda kv: (-kv[1], kv[0]))[:top_contexts]
        stats.append(RealizationStat(m, n, c, totals[m], predefined, ranked))
    order = {m: j for j, m in enumerate(mapping.phonemes)}
    stats.sort(key=lambda s: (order.get(s.phoneme, len(order)), s.phoneme, -s.count, s.phone))
    return stats


def correct_word_spans(recognized, reference, spans):
    """Indices of word spans whose reference phonemes were all recognized with no edits inside."""
    ali = align_edit(recognized, reference)
    ok_pos, ref_pos = set(), 0
    interior_insert = set()
    for op, _, _ in ali.ops:
        if op == MATCH:
            ok_pos.add(ref_pos)
        if op == "ins":
            interior_insert.add(ref_pos)
        else:
            ref_pos += 1
    good = []
    for k, (a, b) in enumerate(spans):
        if all(p in ok_pos for p in range(a, b)) and not any(a < p < b for p in interior_insert):
            good.append(k)
    return good


def collect_pronunciations(alignments, lexicon, utterances, recognized):
    """Phonetic variants of lexicon words over their correctly recognized occurrences.

    ``lexicon`` maps (language, word) -> phonemes; ``utterances`` carry
    words and word spans; ``recognized`` maps utt-id -> decoded phonemes.
    Returns (entries, number of word tokens skipped as absent from the lexicon).
    """
    variants = defaultdict(Counter)
    skipped = 0
    for u in utterances:
        ali = alignments.get(u.utterance_id)
        if ali is None or not u.words or u.utterance_id not in recognized:
            continue
        phones = ali.phone_string()
        good = set(correct_word_spans(recognized[u.utterance_id], u.phonemes, u.word_spans))
        for k, (word, (a, b)) in enumerate(zip(u.words, u.word_spans)):
            entry = lexicon.get((u.language, word))
            if entry is None:
                skipped += 1
                continue
            if k not in good or list(entry) != u.phonemes[a:b]:
                continue
            variants[(u.language, word)][" ".join(phones[a:b])] += 1
    entries = []
    for (lang, word), counter in sorted(variants.items()):
        total = sum(counter.values())
        ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        entries.append(PronunciationEntry(lang, word, tuple(lexicon[(lang, word)]),
                                          [(form, 100.0 * c / total) for form, c in ranked], total))
    return entries, skipped


def format_realizations(stats, language, meta=None):
    """Rows shaped like a realization table: /phoneme/ [phone] rate% mapped? contexts."""
    lines = ["# allophone realizations"]
    lines += [f"# {k} = {v}" for k, v in (meta or {}).items()]
    lines.append("language\tphoneme\tphone\tcount\trate\tpredefined\tcontexts")
    for s in stats:
        ctx = " ".join(f"[{c}]:{n}" for c, n in s.contexts)
        lines.append(f"{language}\t/{s.phoneme}/\t[{s.phone}]\t{s.count}\t{s.rate:.1f}\t"
                     f"{'yes' if s.predefined else 'hypothesized'}\t{ctx}")
    return "\n".join(lines) + "\n"


def format_pronunciations(entries, meta=None):
    lines = ["# pronunciation variants"]
    lines += [f"# {k} = {v}" for k, v in (meta or {}).items()]
    lines.append("language\tword\tphonemic\tcount\tvariants")
    for e in entries:
        forms = "\t".join(f"[{f.replace(' ', '')}] {share:.0f}%" for f, share in e.variants)
        lines.append(f"{e.language}\t{e.word}\t/{''.join(e.phonemic)}/\t{e.count}\t{forms}")
    return "\n".join(lines) + "\n"
