"""Utterance corpora and their on-disk layout.

A corpus directory holds::

    utterances.tsv      utt-id <TAB> language
    transcripts.txt     utt-id <TAB> phonemes (``|`` separates words)
    words.txt           utt-id <TAB> words            (optional)
    features/<utt>.feat packed float64 matrices, or <utt>.txt text matrices
    phones.eval.txt     utt-id <TAB> phones           (evaluation only)
    meta.txt            reproducibility keys

``#`` starts a comment line in every text file.
"""
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .acoustic import FeatureSequence

WORD_BOUNDARY = "|"
FEATURE_MAGIC = b"AGFEAT01"
_HEADER = struct.Struct("<8sII")


class CorpusError(ValueError):
    pass


@dataclass
class Utterance:
    utterance_id: str
    language: str
    features: np.ndarray
    phonemes: list
    words: list = field(default_factory=list)
    word_spans: list = field(default_factory=list)

    @property
    def num_frames(self):
        return self.features.shape[0]

    def feature_sequence(self):
        return FeatureSequence(self.utterance_id, self.language, self.features)


@dataclass
class Corpus:
    utterances: list

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @property
    def languages(self):
        return sorted({u.language for u in self.utterances})

    def by_language(self, language):
        return [u for u in self.utterances if u.language == language]

    def lookup(self):
        return {u.utterance_id: u for u in self.utterances}


def split_words(tokens):
    """Strip ``|`` boundaries; return phonemes and (start, stop) token spans per word."""
    phonemes, spans, start = [], [], 0
    for tok in tokens:
        if tok == WORD_BOUNDARY:
            if len(phonemes) > start:
                spans.append((start, len(phonemes)))
            start = len(phonemes)
        else:
            phonemes.append(tok)
    if len(phonemes) > start:
        spans.append((start, len(phonemes)))
    return phonemes, spans


def join_words(phonemes, spans):
    if not spans:
        return list(phonemes)
    out = []
    for k, (a, b) in enumerate(spans):
        if k:
            out.append(WORD_BOUNDARY)
        out.extend(phonemes[a:b])
    return out


# -- features --------------------------------------------------------------

def write_features(path, frames):
    frames = np.ascontiguousarray(frames, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, frames.shape[0], frames.shape[1]))
        fh.write(frames.tobytes())


def read_features(path):
    if path.endswith(".txt"):
        return read_text_features(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise CorpusError(f"{path}: truncated feature header")
        magic, T, F = _HEADER.unpack(head)
        if magic != FEATURE_MAGIC:
            raise CorpusError(f"{path}: not a packed feature file")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != T * F:
        raise CorpusError(f"{path}: header declares {T}x{F} values, found {data.size}")
    return data.reshape(T, F).astype(np.float64)


def write_text_features(path, frames):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{frames.shape[0]} {frames.shape[1]}\n")
        for row in frames:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_text_features(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    T, F = (int(v) for v in lines[0].split())
    data = np.array([[float(v) for v in ln.split()] for ln in lines[1:]], dtype=np.float64)
    if data.shape != (T, F):
        raise CorpusError(f"{path}: header declares {T}x{F}, found {data.shape}")
    return data


# -- tables ----------------------------------------------------------------

def read_table(path, columns=2):
    """Rows of a tab-separated file, skipping blanks and ``#`` comments."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != columns:
                raise CorpusError(f"{path}:{lineno}: expected {columns} tab-separated columns")
            rows.append(parts)
    return rows


def header_lines(meta):
    return [f"# {k} = {v}" for k, v in (meta or {}).items()]


def write_lines(path, lines, meta=None):
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines(meta) + list(lines):
            fh.write(line + "\n")


def read_transcripts(path):
    """utt-id -> list of symbols (``|`` boundaries kept)."""
    return {utt: text.split() for utt, text in read_table(path)}


def write_transcripts(path, transcripts, meta=None):
    write_lines(path, [f"{utt}\t{' '.join(sym)}" for utt, sym in transcripts.items()], meta)


def read_lexicon(path):
    """(language, word) -> phoneme list."""
    return {(lang, word): phon.split() for lang, word, phon in read_table(path, 3)}


def write_lexicon(path, lexicon, meta=None):
    write_lines(path, [f"{lang}\t{word}\t{' '.join(p)}" for (lang, word), p in lexicon.items()], meta)


def read_meta(path):
    meta = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                key, sep, value = line.strip().lstrip("# ").partition(" = ")
                if sep:
                    meta[key] = value
    return meta


def save_corpus(corpus, directory, phone_truth=None, meta=None, binary=True):
    os.makedirs(os.path.join(directory, "features"), exist_ok=True)
    write_lines(os.path.join(directory, "utterances.tsv"),
                [f"{u.utterance_id}\t{u.language}" for u in corpus], meta)
    write_transcripts(os.path.join(directory, "transcripts.txt"),
                      {u.utterance_id: join_words(u.phonemes, u.word_spans) for u in corpus}, meta)
    if any(u.words for u in corpus):
        write_transcripts(os.path.join(directory, "words.txt"),
                          {u.utterance_id: u.words for u in corpus if u.words}, meta)
    for u in corpus:
        stem = os.path.join(directory, "features", u.utterance_id)
        if binary:
            write_features(stem + ".feat", u.features)
        else:
            write_text_features(stem + ".txt", u.features)
    if phone_truth is not None:
        write_transcripts(os.path.join(directory, "phones.eval.txt"), phone_truth, meta)
    write_lines(os.path.join(directory, "meta.txt"), [f"{k} = {v}" for k, v in (meta or {}).items()])


def load_corpus(directory):
    """Load a corpus directory; the evaluation-only phone sidecar is never read here."""
    langs = read_table(os.path.join(directory, "utterances.tsv"))
    trans = read_transcripts(os.path.join(directory, "transcripts.txt"))
    words_path = os.path.join(directory, "words.txt")
    words = read_transcripts(words_path) if os.path.exists(words_path) else {}
    utterances = []
    for utt, lang in langs:
        if utt not in trans:
            raise CorpusError(f"{utt}: no transcript")
        phonemes, spans = split_words(trans[utt])
        stem = os.path.join(directory, "features", utt)
        path = stem + ".feat" if os.path.exists(stem + ".feat") else stem + ".txt"
        if not os.path.exists(path):
            raise CorpusError(f"{utt}: no feature file")
        utt_words = words.get(utt, [])
        if utt_words and len(utt_words) != len(spans):
            raise CorpusError(f"{utt}: {len(utt_words)} words but {len(spans)} word spans")
        utterances.append(Utterance(utt, lang, read_features(path), phonemes, utt_words,
                                    spans if utt_words else []))
    return Corpus(utterances)


def load_phone_truth(directory):
    """Hidden phone strings of a synthetic corpus, for evaluation only."""
    path = os.path.join(directory, "phones.eval.txt")
    return read_transcripts(path) if os.path.exists(path) else {}
