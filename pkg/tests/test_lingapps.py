import numpy as np
import pytest

from allograph.corpus import Utterance
from allograph.ctc import AlignmentPath, FrameRecord
from allograph.lingapps import (collect_pronunciations, correct_word_spans, discover_allophones,
                                format_pronunciations, format_realizations)

from conftest import table


def path(phones, phonemes, inv, mapping):
    """One frame per token, no blanks."""
    records = [FrameRecord(t, inv.emission_index(n), mapping.phonemes.index(m) + 1, t, 0.0)
               for t, (n, m) in enumerate(zip(phones, phonemes))]
    target = [r.phoneme for r in records]
    return AlignmentPath(records, 0.0, target, inv.symbols, mapping.phonemes)


@pytest.fixture
def setup(universal):
    inv = universal.subset(["a", "aː", "ə", "ɐ", "b", "t"])
    mapping = table(inv, [("a", "a"), ("aː", "a"), ("ə", "ə"), ("b", "b"), ("t", "t")])
    return inv, mapping


def test_identity_realized_fully(setup):
    inv, mapping = setup
    alis = [path(["b", "a", "t"], ["b", "a", "t"], inv, mapping)] * 4
    stats = discover_allophones(alis, mapping)
    assert {(s.phoneme, s.phone): s.rate for s in stats} == {("b", "b"): 100, ("a", "a"): 100, ("t", "t"): 100}


def test_rates_contexts_and_conservation(setup):
    inv, mapping = setup
    alis = [path(["b", "a", "t"], ["b", "a", "t"], inv, mapping)] * 7
    alis += [path(["b", "aː", "t"], ["b", "a", "t"], inv, mapping)] * 3
    alis += [path(["a", "b"], ["a", "b"], inv, mapping)] * 2
    stats = discover_allophones(alis, mapping)
    by = {(s.phoneme, s.phone): s for s in stats}
    assert by[("a", "a")].count == 9 and by[("a", "aː")].count == 3
    assert by[("a", "a")].rate == pytest.approx(75.0)
    assert by[("a", "aː")].contexts == [("baːt", 3)]
    assert by[("a", "a")].contexts == [("bat", 7), ("#ab", 2)]
    assert by[("t", "t")].contexts == [("at#", 7), ("aːt#", 3)]
    for m in mapping.phonemes:
        tokens = sum(ali.phoneme_string().count(m) for ali in alis)
        assert sum(s.count for s in stats if s.phoneme == m) == tokens
        assert sum(s.rate for s in stats if s.phoneme == m) <= 100 + 1e-9


def test_unmapped_phone_hypothesized(setup):
    inv, mapping = setup
    alis = [path(["ɐ", "b"], ["ə", "b"], inv, mapping)] * 5 + [path(["ə", "b"], ["ə", "b"], inv, mapping)] * 5
    stats = discover_allophones(alis, mapping, min_count=5)
    hyp = [s for s in stats if s.hypothesized]
    assert [(s.phone, s.phoneme) for s in hyp] == [("ɐ", "ə")]
    assert all(not mapping.has_pair(s.phone, s.phoneme) for s in hyp)
    assert all(mapping.has_pair(s.phone, s.phoneme) for s in stats if not s.hypothesized)
    assert "hypothesized" in format_realizations(stats, "x")


def test_rare_hypotheses_suppressed(setup):
    inv, mapping = setup
    alis = [path(["ɐ"], ["ə"], inv, mapping)] * 4 + [path(["ə"], ["ə"], inv, mapping)] * 6
    assert all(not s.hypothesized for s in discover_allophones(alis, mapping, min_count=5))
    assert any(s.hypothesized for s in discover_allophones(alis, mapping, min_count=4))


def test_empty_alignments(setup):
    assert discover_allophones([], setup[1]) == []


def test_correct_word_spans():
    spans = [(0, 2), (2, 4), (4, 5)]
    ref = ["h", "e", "l", "o", "a"]
    assert correct_word_spans(ref, ref, spans) == [0, 1, 2]
    assert correct_word_spans(["h", "x", "l", "o", "a"], ref, spans) == [1, 2]
    assert correct_word_spans(["h", "e", "l", "z", "o", "a"], ref, spans) == [0, 2]
    assert correct_word_spans(["h", "e", "l", "o"], ref, spans) == [0, 1]


def words_setup(universal):
    inv = universal.subset(["h", "e", "ɛ", "l", "o", "b", "a", "t"])
    mapping = table(inv, [("h", "h"), ("e", "e"), ("ɛ", "e"), ("l", "l"), ("o", "o"), ("b", "b"), ("a", "a"),
                          ("t", "t")])
    lexicon = {("x", "hello"): ["h", "e", "l", "o"], ("x", "bat"): ["b", "a", "t"]}
    return inv, mapping, lexicon


def utt(uid, words, lexicon):
    phonemes, spans = [], []
    for w in words:
        p = lexicon.get(("x", w), ["t"])
        spans.append((len(phonemes), len(phonemes) + len(p)))
        phonemes += p
    return Utterance(uid, "x", np.zeros((len(phonemes), 1)), phonemes, list(words), spans)


def test_pronunciation_variants(universal):
    inv, mapping, lexicon = words_setup(universal)
    utts, alis, rec = [], {}, {}
    for k in range(10):
        u = utt(f"u{k}", ["hello", "bat"], lexicon)
        phones = list(u.phonemes)
        if k < 2:
            phones[1] = "ɛ"
        utts.append(u)
        alis[u.utterance_id] = path(phones, u.phonemes, inv, mapping)
        rec[u.utterance_id] = list(u.phonemes)
    # a misrecognized occurrence contributes nothing
    rec["u9"] = ["h", "a", "l", "o", "b", "a", "t"]
    entries, skipped = collect_pronunciations(alis, lexicon, utts, rec)
    assert skipped == 0
    hello = next(e for e in entries if e.word == "hello")
    assert hello.count == 9
    assert hello.variants == [("h e l o", pytest.approx(700 / 9)), ("h ɛ l o", pytest.approx(200 / 9))]
    bat = next(e for e in entries if e.word == "bat")
    assert bat.variants == [("b a t", 100.0)]
    for e in entries:
        assert abs(sum(round(s) for _, s in e.variants) - 100) <= 0.5 * len(e.variants)
    text = format_pronunciations(entries)
    assert "x\thello\t/helo/\t9\t[helo] 78%\t[hɛlo] 22%" in text


def test_unknown_words_counted(universal):
    inv, mapping, lexicon = words_setup(universal)
    u = utt("u0", ["hello", "zzz"], lexicon)
    alis = {"u0": path(u.phonemes, u.phonemes, inv, mapping)}
    entries, skipped = collect_pronunciations(alis, lexicon, [u], {"u0": u.phonemes})
    assert skipped == 1
    assert [e.word for e in entries] == ["hello"]
