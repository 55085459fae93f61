"""Synthetic multilingual corpora with planted phone-to-phoneme priors.

Each phone has a prototype feature vector (one-hot by default).  An
utterance is a phoneme string; every phoneme token is realized as a phone
drawn from its realization prior, and every phone emits a few noisy copies
of its prototype.  The realized phone strings are returned separately and
are meant for evaluation only.
"""
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Utterance
from .wfst import MappingTable


class SyntheticSpecError(ValueError):
    pass


@dataclass
class LanguageSpec:
    """One synthetic language.

    ``realizations`` maps phoneme -> {phone: prior}.  ``mapping`` lists the
    (phone, phoneme) tuples the learner is given; it defaults to every
    planted pair.  ``unlisted`` names planted pairs deliberately kept out of
    the mapping table (for allophone discovery).  ``words`` optionally maps
    word -> phonemes; utterances are then word sequences.
    """

    realizations: dict
    mapping: list = None
    unlisted: list = field(default_factory=list)
    phoneme_weights: dict = None
    words: dict = None

    @property
    def phonemes(self):
        return list(self.realizations)

    def mapping_pairs(self):
        if self.mapping is not None:
            return [tuple(p) for p in self.mapping]
        hidden = {tuple(p) for p in self.unlisted}
        return [(n, m) for m, prior in self.realizations.items() for n in prior if (n, m) not in hidden]


@dataclass
class SyntheticSpec:
    phones: list
    languages: dict
    utterances_per_language: int = 200
    length_range: tuple = (3, 6)
    frames_per_phone: tuple = (2, 3)
    noise: float = 0.1
    seed: int = 0
    prototypes: np.ndarray = None

    def __post_init__(self):
        if self.prototypes is None:
            self.prototypes = np.eye(len(self.phones))
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.prototypes.shape[0] != len(self.phones):
            raise SyntheticSpecError("one prototype vector per phone is required")
        known = set(self.phones)
        for lang, ls in self.languages.items():
            for m, prior in ls.realizations.items():
                if not prior or abs(sum(prior.values()) - 1.0) > 1e-9 or min(prior.values()) < 0:
                    raise SyntheticSpecError(f"{lang}: realization prior of /{m}/ must be a distribution")
                for n in prior:
                    if n not in known:
                        raise SyntheticSpecError(f"{lang}: unknown phone [{n}]")
            allowed = set(ls.mapping_pairs()) | {tuple(p) for p in ls.unlisted}
            for m, prior in ls.realizations.items():
                for n, p in prior.items():
                    if p > 0 and (n, m) not in allowed:
                        raise SyntheticSpecError(f"{lang}: planted [{n}] -> /{m}/ is not in the mapping table")
            lo, hi = self.length_range
            if lo < 1 or hi < lo:
                raise SyntheticSpecError("length_range must satisfy 1 <= lo <= hi")
        fmin, fmax = self.frames_per_phone
        if fmin < 1 or fmax < fmin:
            raise SyntheticSpecError("frames_per_phone must satisfy 1 <= lo <= hi")

    @property
    def feature_dim(self):
        return self.prototypes.shape[1]

    def mapping_tables(self, inventory):
        return {lang: MappingTable.from_symbols(lang, inventory, ls.mapping_pairs(), phonemes=tuple(ls.phonemes))
                for lang, ls in self.languages.items()}

    def implied_arc_weights(self, language):
        """Expected P(phoneme | phone) over tokens: the arc weights a UC graph should learn."""
        ls = self.languages[language]
        weights = ls.phoneme_weights or {m: 1.0 for m in ls.phonemes}
        total = sum(weights.values())
        mass = {}
        for m, prior in ls.realizations.items():
            for n, p in prior.items():
                mass[(n, m)] = mass.get((n, m), 0.0) + weights[m] / total * p
        per_phone = {}
        for (n, _), v in mass.items():
            per_phone[n] = per_phone.get(n, 0.0) + v
        return {(n, m): v / per_phone[n] for (n, m), v in mass.items() if per_phone[n] > 0}


def _sample_phonemes(rng, ls, length):
    symbols = ls.phonemes
    w = np.array([(ls.phoneme_weights or {}).get(m, 1.0) for m in symbols], dtype=np.float64)
    out = []
    for _ in range(length):
        probs = w.copy()
        if out and len(symbols) > 1:
            probs[symbols.index(out[-1])] = 0.0
        out.append(symbols[rng.choice(len(symbols), p=probs / probs.sum())])
    return out


def generate_synthetic(spec):
    """Return (corpus, phone_truth); ``phone_truth`` maps utt-id -> realized phones."""
    rng = np.random.default_rng(spec.seed)
    index = {n: i for i, n in enumerate(spec.phones)}
    gap = np.zeros(spec.feature_dim)
    utterances, truth = [], {}
    for lang in sorted(spec.languages):
        ls = spec.languages[lang]
        vocab = sorted(ls.words) if ls.words else None
        for k in range(spec.utterances_per_language):
            utt = f"{lang}_{k:05d}"
            length = int(rng.integers(spec.length_range[0], spec.length_range[1] + 1))
            words, spans = [], []
            if vocab:
                phonemes = []
                for _ in range(length):
                    word = vocab[rng.integers(len(vocab))]
                    words.append(word)
                    spans.append((len(phonemes), len(phonemes) + len(ls.words[word])))
                    phonemes.extend(ls.words[word])
            else:
                phonemes = _sample_phonemes(rng, ls, length)
            phones = []
            for m in phonemes:
                prior = ls.realizations[m]
                cands = list(prior)
                phones.append(cands[rng.choice(len(cands), p=np.array([prior[n] for n in cands]))])
            frames = []
            for j, n in enumerate(phones):
                if j and phones[j - 1] == n:
                    frames.append(gap + spec.noise * rng.standard_normal(spec.feature_dim))
                reps = int(rng.integers(spec.frames_per_phone[0], spec.frames_per_phone[1] + 1))
                proto = spec.prototypes[index[n]]
                frames.extend(proto + spec.noise * rng.standard_normal(spec.feature_dim) for _ in range(reps))
            utterances.append(Utterance(utt, lang, np.array(frames), phonemes, words, spans))
            truth[utt] = phones
    return Corpus(utterances), truth
