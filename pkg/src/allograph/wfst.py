"""Phone-to-phoneme mappings as single-state weighted transducers.

An :class:`AllophoneGraph` is a grouped arc list: one arc per (phone,
phoneme) mapping pair plus a fixed blank-to-blank arc.  Composing a
phone emission lattice with it is a per-frame log-semiring
matrix-vector product, done with differentiable ops so that gradients
reach both the emissions and the arc weight parameters.

Emission index 0 is the blank in both phone space and phoneme space.
"""
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .inventory import BLANK, BLANK_SYMBOL, InventoryError

FREE = "free"
UC = "uc"
MODES = (FREE, UC)

LOGIT = "logit"
LOG_POSTERIOR = "log-posterior"


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class MappingTable:
    """Phone-to-phoneme tuples of one language.

    ``pairs`` holds (inventory position of phone, position of phoneme in
    ``phonemes``).
    """

    language: str
    inventory: object
    phonemes: tuple
    pairs: tuple

    def __post_init__(self):
        if not self.phonemes:
            raise MappingError(f"{self.language}: empty phoneme set")
        if len(set(self.pairs)) != len(self.pairs):
            raise MappingError(f"{self.language}: duplicate mapping tuple")
        if len(set(self.phonemes)) != len(self.phonemes):
            raise MappingError(f"{self.language}: duplicate phoneme symbol")
        covered = {j for _, j in self.pairs}
        missing = [m for j, m in enumerate(self.phonemes) if j not in covered]
        if missing:
            raise MappingError(f"{self.language}: phonemes without a phone realization: {missing}")
        for i, j in self.pairs:
            if not (0 <= i < len(self.inventory)) or not (0 <= j < len(self.phonemes)):
                raise MappingError(f"{self.language}: mapping tuple ({i}, {j}) out of range")

    @classmethod
    def from_symbols(cls, language, inventory, pairs, phonemes=None):
        pairs = list(pairs)
        if phonemes is None:
            phonemes = tuple(dict.fromkeys(m for _, m in pairs))
        pos = {m: j for j, m in enumerate(phonemes)}
        indexed = []
        for n, m in pairs:
            if m not in pos:
                raise MappingError(f"{language}: phoneme {m!r} not in phoneme list")
            indexed.append((inventory.index(n), pos[m]))
        return cls(language, inventory, tuple(phonemes), tuple(indexed))

    def phoneme_index(self, symbol):
        try:
            return self.phonemes.index(symbol)
        except ValueError:
            raise MappingError(f"{self.language}: unknown phoneme {symbol!r}") from None

    @property
    def phone_positions(self):
        """Sorted inventory positions of the phones this language uses (N')."""
        return sorted({i for i, _ in self.pairs})

    def symbol_pairs(self):
        return [(self.inventory.symbols[i], self.phonemes[j]) for i, j in self.pairs]

    def has_pair(self, phone, phoneme):
        try:
            key = (self.inventory.index(phone), self.phonemes.index(phoneme))
        except (InventoryError, ValueError):
            return False
        return key in set(self.pairs)


@dataclass
class EmissionLattice:
    """T x (1 + symbols) matrix of per-frame scores; column 0 is the blank."""

    values: ad.Tensor
    symbols: tuple
    space: str = LOG_POSTERIOR

    def __post_init__(self):
        if self.values.data.ndim != 2 or self.values.shape[1] != len(self.symbols) + 1:
            raise ad.ShapeError(f"lattice over {len(self.symbols)} symbols + blank "
                                f"needs {len(self.symbols) + 1} columns, got {self.values.shape}")

    @property
    def num_frames(self):
        return self.values.shape[0]

    def probabilities(self):
        if self.space != LOG_POSTERIOR:
            raise ValueError("probabilities are only defined in log-posterior space")
        return np.exp(self.values.data)

    def symbol(self, k):
        return BLANK_SYMBOL if k == BLANK else self.symbols[k - 1]


@dataclass
class AllophoneGraph:
    """Single-state WFST from universal phones to one language's phonemes."""

    mapping: MappingTable
    mode: str = UC
    params: ad.Tensor = None
    src: np.ndarray = field(init=False)
    dst: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise MappingError(f"unknown graph mode {self.mode!r}")
        self.src = np.array([i + 1 for i, _ in self.mapping.pairs], dtype=np.intp)
        self.dst = np.array([j + 1 for _, j in self.mapping.pairs], dtype=np.intp)
        if self.params is None:
            self.params = ad.Tensor(np.zeros(len(self.src)), requires_grad=True,
                                    name=f"graph:{self.language}")
        elif self.params.shape != (len(self.src),):
            raise ad.ShapeError(f"graph needs {len(self.src)} arc parameters, got {self.params.shape}")

    @property
    def language(self):
        return self.mapping.language

    @property
    def inventory(self):
        return self.mapping.inventory

    @property
    def phonemes(self):
        return self.mapping.phonemes

    @property
    def num_arcs(self):
        return len(self.src)

    def arcs(self):
        """(phone, phoneme, raw parameter) triples in arc order, blank arc excluded."""
        return [(self.inventory.symbols[s - 1], self.phonemes[d - 1], float(p))
                for s, d, p in zip(self.src, self.dst, self.params.data)]


def log_weights(graph):
    """Per-arc log effective weights as a differentiable (A,) tensor."""
    if graph.mode == FREE:
        return graph.params
    per_phone = ad.segment_logsumexp(_as_row(graph.params), graph.src, graph.inventory.num_emissions)
    norm = ad.take(per_phone, graph.src, axis=1)
    return _as_vector(_as_row(graph.params) - norm)


def _as_row(t):
    return ad.record("as_row", (t,), t.data.reshape(1, -1), lambda g: (g.reshape(-1),))


def _as_vector(t):
    return ad.record("as_vector", (t,), t.data.reshape(-1), lambda g: (g.reshape(1, -1),))


def effective_weights(graph):
    """Arc weights in linear space: exp(parameter) in free mode, per-phone softmax in UC mode."""
    return ad.exp(log_weights(graph))


def dense_weight_matrix(graph):
    """(|N|+1) x (|M|+1) matrix of effective weights including the blank arc."""
    w = np.zeros((graph.inventory.num_emissions, len(graph.phonemes) + 1))
    w[BLANK, BLANK] = 1.0
    np.add.at(w, (graph.src, graph.dst), effective_weights(graph).data)
    return w


def compose(emissions, graph):
    """Transduce a phone log-posterior lattice into a phoneme log-posterior lattice.

    Phoneme log-mass per frame is the log-sum-exp over incoming arcs of
    (log arc weight + phone log-mass); blank passes through a unit arc.
    Free-mode output is renormalized per frame.
    """
    if emissions.space != LOG_POSTERIOR:
        raise ValueError("compose expects log-posterior phone emissions")
    if tuple(emissions.symbols) != graph.inventory.symbols:
        raise InventoryError(f"lattice symbols do not match the inventory of graph {graph.language!r}")
    src = np.concatenate([[BLANK], graph.src])
    dst = np.concatenate([[BLANK], graph.dst])
    logw = ad.concat([ad.Tensor(np.zeros(1)), log_weights(graph)])
    scores = ad.take(emissions.values, src, axis=1) + logw
    out = ad.segment_logsumexp(scores, dst, len(graph.phonemes) + 1)
    if graph.mode == FREE:
        out = ad.log_softmax(out, axis=1)
    return EmissionLattice(out, graph.phonemes, LOG_POSTERIOR)


@dataclass(frozen=True)
class AlloMatrix:
    """Binary |N| x |M| pass-through matrix."""

    mapping: MappingTable
    matrix: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.zeros((len(self.mapping.inventory), len(self.mapping.phonemes)), dtype=np.int64)
        for i, j in self.mapping.pairs:
            a[i, j] = 1
        object.__setattr__(self, "matrix", a)

    @property
    def language(self):
        return self.mapping.language

    @property
    def phonemes(self):
        return self.mapping.phonemes

    def extended(self):
        """Matrix with the blank row/column prepended (blank copied through)."""
        n, m = self.matrix.shape
        ext = np.zeros((n + 1, m + 1))
        ext[BLANK, BLANK] = 1.0
        ext[1:, 1:] = self.matrix
        return ext


def allomatrix_project(logits, allomatrix):
    """Phoneme logits as sums of the logits of mapped phones; blank copied through."""
    if logits.space != LOGIT:
        raise ValueError("allomatrix_project expects phone logits")
    if tuple(logits.symbols) != allomatrix.mapping.inventory.symbols:
        raise InventoryError(f"lattice symbols do not match the inventory of {allomatrix.language!r}")
    out = ad.matmul(logits.values, ad.Tensor(allomatrix.extended()))
    return EmissionLattice(out, allomatrix.phonemes, LOGIT)


def unmapped_mask(mapping):
    """Boolean row over phone emissions, true where the phone is outside N'."""
    mask = np.ones(mapping.inventory.num_emissions, dtype=bool)
    mask[BLANK] = False
    mask[np.asarray(mapping.phone_positions, dtype=np.intp) + 1] = False
    return mask


def mask_unmapped(logits, mapping):
    """Push logits of phones the language does not use to -inf; blank is never masked."""
    if logits.space != LOGIT:
        raise ValueError("masking applies to logits before softmax")
    mask = unmapped_mask(mapping)
    if not mask.any():
        return logits
    return EmissionLattice(ad.masked_fill(logits.values, mask[None, :], -np.inf), logits.symbols, LOGIT)


def log_softmax_lattice(logits):
    return EmissionLattice(ad.log_softmax(logits.values, axis=1), logits.symbols, LOG_POSTERIOR)


# -- files -----------------------------------------------------------------

def parse_mappings(lines, inventory):
    """Parse ``language<TAB>phone<TAB>phoneme`` lines into per-language tables."""
    by_lang = {}
    seen = set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].rstrip("\n")
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 3 or not all(parts):
            raise MappingError(f"line {lineno}: expected 'language<TAB>phone<TAB>phoneme'")
        lang, phone, phoneme = parts
        if phone not in inventory:
            raise MappingError(f"line {lineno}: unknown phone symbol {phone!r}")
        if (lang, phone, phoneme) in seen:
            raise MappingError(f"line {lineno}: duplicate tuple ({phone} -> {phoneme}) for {lang}")
        seen.add((lang, phone, phoneme))
        by_lang.setdefault(lang, []).append((phone, phoneme))
    return {lang: MappingTable.from_symbols(lang, inventory, pairs) for lang, pairs in by_lang.items()}


def load_mappings(path, inventory):
    with open(path, encoding="utf-8") as fh:
        return parse_mappings(fh, inventory)


def format_mappings(tables):
    out = []
    for table in tables:
        out.extend(f"{table.language}\t{n}\t{m}" for n, m in table.symbol_pairs())
    return "\n".join(out) + "\n"


def format_graph(graph, meta=None):
    lines = ["# allophone graph checkpoint"]
    for key, value in (meta or {}).items():
        lines.append(f"{key} = {value}")
    lines.append(f"language = {graph.language}")
    lines.append(f"mode = {graph.mode}")
    lines.append(f"phonemes = {' '.join(graph.phonemes)}")
    lines.append(f"arcs = {graph.num_arcs}")
    for phone, phoneme, p in graph.arcs():
        lines.append(f"arc = {phone}\t{phoneme}\t{p:.17g}")
    return "\n".join(lines) + "\n"


def parse_graph(lines, inventory):
    fields, arcs = {}, []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise MappingError(f"line {lineno}: expected 'key = value'")
        if key == "arc":
            phone, phoneme, p = value.split("\t")
            if phone not in inventory:
                raise MappingError(f"line {lineno}: unknown phone symbol {phone!r}")
            arcs.append((phone, phoneme, float(p)))
        else:
            fields[key] = value
    for key in ("language", "mode", "phonemes"):
        if key not in fields:
            raise MappingError(f"graph file lacks '{key}'")
    if "arcs" in fields and int(fields["arcs"]) != len(arcs):
        raise MappingError(f"graph file declares {fields['arcs']} arcs but lists {len(arcs)}")
    mapping = MappingTable.from_symbols(fields["language"], inventory, [(n, m) for n, m, _ in arcs],
                                        phonemes=tuple(fields["phonemes"].split()))
    params = ad.Tensor(np.array([p for _, _, p in arcs], dtype=np.float64), requires_grad=True,
                       name=f"graph:{fields['language']}")
    graph = AllophoneGraph(mapping, fields["mode"], params)
    meta = {k: v for k, v in fields.items() if k not in ("language", "mode", "phonemes", "arcs")}
    return graph, meta


def save_graph(graph, path, meta=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph(graph, meta))


def load_graph(path, inventory):
    with open(path, encoding="utf-8") as fh:
        graph, _ = parse_graph(fh, inventory)
    return graph
