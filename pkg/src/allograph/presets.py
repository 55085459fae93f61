"""Ready-made synthetic specs used by the quickstart, demos and acceptance runs."""
from .synthetic import LanguageSpec, SyntheticSpec


def _identity(phonemes):
    return {m: {m: 1.0} for m in phonemes}


def quickstart(seed=0, noise=0.0, utterances=60):
    """One language, one-to-one mapping: a separable toy problem."""
    phones = ["p", "t", "k", "a", "i", "u"]
    return SyntheticSpec(phones, {"toy": LanguageSpec(_identity(phones))},
                         utterances_per_language=utterances, length_range=(2, 5), frames_per_phone=(2, 3),
                         noise=noise, seed=seed)


def disambiguation(seed=0, utterances=150, noise=0.2):
    """[k] maps one-to-one in ``anchor``; in ``onetomany`` it maps to /k/ and /q/ but only realizes /k/.

    ``tagalog`` maps [s] and [ʃ] to both /s/ and /ʃ/; [ʃ] realizes /s/ 75% of the time.
    """
    phones = ["k", "q", "s", "ʃ", "a", "i", "u", "t"]
    anchor = LanguageSpec(_identity(phones))
    onetomany = LanguageSpec(
        {"k": {"k": 1.0}, "q": {"q": 1.0}, "a": {"a": 1.0}, "i": {"i": 1.0}, "t": {"t": 1.0}},
        mapping=[("k", "k"), ("k", "q"), ("q", "q"), ("a", "a"), ("i", "i"), ("t", "t")])
    # P(/s/ | [ʃ]) = 0.5 w_s / (0.5 w_s + w_ʃ) = 0.75 when w_s = 6 w_ʃ
    tagalog = LanguageSpec(
        {"s": {"s": 0.5, "ʃ": 0.5}, "ʃ": {"ʃ": 1.0}, "a": {"a": 1.0}, "i": {"i": 1.0}, "u": {"u": 1.0}},
        mapping=[("s", "s"), ("s", "ʃ"), ("ʃ", "s"), ("ʃ", "ʃ"), ("a", "a"), ("i", "i"), ("u", "u")],
        phoneme_weights={"s": 3.0, "ʃ": 0.5, "a": 1.0, "i": 1.0, "u": 1.0})
    # one or two frames per phone: longer segments bias CTC toward the dominant arc
    return SyntheticSpec(phones, {"anchor": anchor, "onetomany": onetomany, "tagalog": tagalog},
                         utterances_per_language=utterances, length_range=(3, 6), frames_per_phone=(1, 2),
                         noise=noise, seed=seed)


def one_to_many(seed=0, utterances=120, noise=0.3):
    """Duplicitous phones: [k] and [q] each map to both /k/ and /q/ (likewise [s], [ʃ]).

    Each phone actually realizes a single phoneme, so a learned graph can
    disambiguate, while broadcasting gives /k/ and /q/ identical logits.
    """
    phones = ["k", "q", "s", "ʃ", "t", "a", "i", "u"]
    anchor = LanguageSpec(_identity(phones))
    pairs = [(n, m) for group in (("k", "q"), ("s", "ʃ")) for n in group for m in group]
    target = LanguageSpec(_identity(phones), mapping=pairs + [(v, v) for v in ("t", "a", "i", "u")])
    return SyntheticSpec(phones, {"anchor": anchor, "target": target},
                         utterances_per_language=utterances, length_range=(3, 6), frames_per_phone=(1, 2),
                         noise=noise, seed=seed)


def discovery(seed=0, utterances=2600, noise=0.2):
    """/a/ is realized [a] 70% and [aː] 30%; /ə/ is realized by the unmapped [ɐ] 30% of the time.

    The default size gives the target language about 10 000 phoneme tokens.
    """
    phones = ["a", "aː", "ə", "ɐ", "b", "t", "k", "i"]
    anchor = LanguageSpec(_identity(phones))
    target = LanguageSpec(
        {"a": {"a": 0.7, "aː": 0.3}, "ə": {"ə": 0.7, "ɐ": 0.3}, "b": {"b": 1.0}, "t": {"t": 1.0},
         "k": {"k": 1.0}, "i": {"i": 1.0}},
        unlisted=[("ɐ", "ə")])
    return SyntheticSpec(phones, {"anchor": anchor, "target": target},
                         utterances_per_language=utterances, length_range=(3, 5), frames_per_phone=(2, 3),
                         noise=noise, seed=seed)


def pronunciations(seed=0, utterances=300, noise=0.2):
    """Word ``hello`` /h e l o/ whose /e/ is [e] 80% and [ɛ] 20% of the time."""
    phones = ["h", "e", "ɛ", "l", "o", "b", "a", "t"]
    anchor = LanguageSpec(_identity(phones))
    target = LanguageSpec(
        {"h": {"h": 1.0}, "e": {"e": 0.8, "ɛ": 0.2}, "l": {"l": 1.0}, "o": {"o": 1.0}, "b": {"b": 1.0},
         "a": {"a": 1.0}, "t": {"t": 1.0}},
        words={"hello": ["h", "e", "l", "o"], "bat": ["b", "a", "t"], "tab": ["t", "a", "b"]})
    return SyntheticSpec(phones, {"anchor": anchor, "target": target},
                         utterances_per_language=utterances, length_range=(1, 3), frames_per_phone=(2, 3),
                         noise=noise, seed=seed)


PRESETS = {
    "quickstart": quickstart,
    "disambiguation": disambiguation,
    "one-to-many": one_to_many,
    "discovery": discovery,
    "pronunciations": pronunciations,
}
