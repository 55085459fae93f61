"""Universal phone inventory with signed articulatory feature vectors."""
from dataclasses import dataclass
from importlib import resources

import numpy as np

NUM_FEATURES = 22
BLANK = 0
BLANK_SYMBOL = "∅"


class InventoryError(ValueError):
    pass


@dataclass(frozen=True)
class PhoneInventory:
    """Ordered phone set.

    Emission index ``i + 1`` belongs to ``symbols[i]``; index 0 is the CTC blank.
    """

    symbols: tuple
    features: np.ndarray

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise InventoryError("duplicate phone symbols in inventory")
        if self.features.shape != (len(self.symbols), NUM_FEATURES):
            raise InventoryError(f"feature matrix must be {len(self.symbols)}x{NUM_FEATURES}, "
                                 f"got {self.features.shape}")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, symbol):
        return symbol in self._index

    def __eq__(self, other):
        return (isinstance(other, PhoneInventory) and self.symbols == other.symbols
                and np.array_equal(self.features, other.features))

    def __hash__(self):
        return hash(self.symbols)

    @property
    def num_emissions(self):
        return len(self.symbols) + 1

    def index(self, symbol):
        """Position of ``symbol`` in the inventory (not its emission index)."""
        try:
            return self._index[symbol]
        except KeyError:
            raise InventoryError(f"unknown phone {symbol!r}") from None

    def emission_index(self, symbol):
        return self.index(symbol) + 1

    def emission_symbol(self, k):
        return BLANK_SYMBOL if k == BLANK else self.symbols[k - 1]

    def vector(self, symbol):
        return self.features[self.index(symbol)]

    def subset(self, symbols):
        """Inventory restricted to ``symbols``, in the order given."""
        rows = [self.index(s) for s in symbols]
        return PhoneInventory(tuple(symbols), self.features[rows].copy())


def parse_feature_table(lines):
    symbols, vectors = [], []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InventoryError(f"line {lineno}: expected 'symbol<TAB>values'")
        symbol, values = parts[0].strip(), parts[1].split(",")
        if len(values) != NUM_FEATURES:
            raise InventoryError(f"line {lineno}: {symbol!r} has {len(values)} features, "
                                 f"expected {NUM_FEATURES}")
        try:
            vec = [int(v) for v in values]
        except ValueError:
            raise InventoryError(f"line {lineno}: non-integer feature value for {symbol!r}") from None
        if any(v not in (-1, 0, 1) for v in vec):
            raise InventoryError(f"line {lineno}: feature values must be -1, 0 or 1")
        if symbol in symbols:
            raise InventoryError(f"line {lineno}: duplicate symbol {symbol!r}")
        symbols.append(symbol)
        vectors.append(vec)
    return PhoneInventory(tuple(symbols), np.array(vectors, dtype=np.int64).reshape(-1, NUM_FEATURES))


def load_feature_table(path=None):
    """Read a feature table; without ``path`` the bundled table is used."""
    if path is None:
        text = resources.files("allograph.data").joinpath("phone_features.tsv").read_text(encoding="utf-8")
        return parse_feature_table(text.splitlines())
    with open(path, encoding="utf-8") as fh:
        return parse_feature_table(fh)


def format_feature_table(inventory):
    lines = [f"{s}\t{','.join(str(int(v)) for v in inventory.features[i])}"
             for i, s in enumerate(inventory.symbols)]
    return "\n".join(lines) + "\n"


def save_feature_table(inventory, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_feature_table(inventory))
