import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from allograph import autodiff as ad
from allograph.inventory import PhoneInventory
from allograph.wfst import (FREE, LOGIT, UC, AllophoneGraph, AlloMatrix, EmissionLattice, MappingError,
                            MappingTable, allomatrix_project, compose, dense_weight_matrix, effective_weights,
                            format_graph, format_mappings, load_graph, load_mappings, log_softmax_lattice,
                            mask_unmapped, parse_graph, parse_mappings, save_graph)

from conftest import table


def lattice(probs, symbols):
    return EmissionLattice(ad.Tensor(np.log(np.asarray(probs, dtype=float))), tuple(symbols))


def random_posteriors(rng, frames, width):
    return rng.dirichlet(np.ones(width), size=frames)


@pytest.fixture
def kq(universal):
    return universal.subset(["k", "q", "kʰ"])


def test_uc_equal_parameters_split_evenly(kq):
    g = AllophoneGraph(table(kq, [("k", "k"), ("k", "q"), ("q", "q")]), UC)
    assert np.allclose(effective_weights(g).data, [0.5, 0.5, 1.0], rtol=0, atol=1e-15)


def test_uc_single_arc_weight_one(kq):
    g = AllophoneGraph(table(kq, [("k", "k")]), UC, ad.Tensor([3.7]))
    assert effective_weights(g).item() == 1.0


def test_free_weights_are_exp(kq):
    g = AllophoneGraph(table(kq, [("k", "k"), ("k", "q"), ("q", "q")]), FREE, ad.Tensor([0.0, -1.0, 2.0]))
    assert np.allclose(effective_weights(g).data, np.exp([0.0, -1.0, 2.0]))


def test_parameters_start_at_zero(kq):
    g = AllophoneGraph(table(kq, [("k", "k"), ("k", "q"), ("q", "q")]))
    assert np.array_equal(g.params.data, np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=5, max_size=5))
def test_uc_weights_sum_to_one_per_phone(universal, params):
    inv = universal.subset(["s", "ʃ", "a"])
    g = AllophoneGraph(table(inv, [("s", "s"), ("s", "ʃ"), ("ʃ", "s"), ("ʃ", "ʃ"), ("a", "a")]), UC,
                       ad.Tensor(params))
    w = effective_weights(g).data
    sums = np.zeros(inv.num_emissions)
    np.add.at(sums, g.src, w)
    assert np.all(w >= 0)
    assert np.allclose(sums[1:], 1.0, atol=1e-9)


def test_identity_composition(universal):
    inv = universal.subset(["a", "b"])
    g = AllophoneGraph(table(inv, [("a", "a"), ("b", "b")]))
    frame = lattice([[0.1, 0.7, 0.2]], inv.symbols)
    out = compose(frame, g)
    assert np.allclose(np.exp(out.values.data), [[0.1, 0.7, 0.2]], atol=1e-15)


def test_one_to_many_with_learned_weights(kq):
    # [k] -> /k/ 1.0, /q/ 0.0
    g = AllophoneGraph(table(kq, [("k", "k"), ("k", "q"), ("q", "q")]), UC, ad.Tensor([0.0, -np.inf, 0.0]))
    frame = lattice([[0.1, 0.6, 0.3, 1e-300]], kq.symbols)
    p = np.exp(compose(frame, g).values.data[0])
    assert p[1] == pytest.approx(0.6, abs=1e-12)
    assert p[2] == pytest.approx(0.3, abs=1e-12)


def test_many_to_one_sums_allophones(universal):
    inv = universal.subset(["a", "aː", "i"])
    g = AllophoneGraph(table(inv, [("a", "a"), ("aː", "a"), ("i", "i")]))
    probs = np.array([[0.05, 0.30, 0.25, 0.40]])
    out = np.exp(compose(lattice(probs, inv.symbols), g).values.data)
    assert out[0, 1] == pytest.approx(0.55, abs=1e-12)
    assert np.allclose(out, probs @ dense_weight_matrix(g), atol=1e-12)


def test_one_to_many_split_follows_weights(universal, rng):
    inv = universal.subset(["s", "ʃ"])
    g = AllophoneGraph(table(inv, [("s", "s"), ("s", "ʃ"), ("ʃ", "ʃ")]), UC, ad.Tensor([0.4, -0.3, 0.0]))
    probs = np.array([[0.0, 1.0, 0.0]])
    out = np.exp(compose(lattice(probs + 1e-300, inv.symbols), g).values.data[0])
    w = effective_weights(g).data
    assert out[1] == pytest.approx(w[0], abs=1e-12)
    assert out[2] == pytest.approx(w[1], abs=1e-12)


def random_graph(universal, rng, mode):
    inv = universal.subset(["p", "b", "t", "d", "k", "g"])
    phonemes = ["P", "T", "K"]
    pairs = [(n, phonemes[i // 2]) for i, n in enumerate(inv.symbols)]
    pairs += [("b", "T"), ("g", "P"), ("d", "K")]
    return AllophoneGraph(table(inv, pairs, phonemes=phonemes), mode, ad.Tensor(rng.uniform(-2, 2, len(pairs))))


@pytest.mark.parametrize("mode", [UC, FREE])
def test_compose_matches_dense_oracle(universal, rng, mode):
    g = random_graph(universal, rng, mode)
    probs = random_posteriors(rng, 1000, g.inventory.num_emissions)
    out = np.exp(compose(lattice(probs, g.inventory.symbols), g).values.data)
    oracle = probs @ dense_weight_matrix(g)
    if mode == FREE:
        oracle /= oracle.sum(axis=1, keepdims=True)
    assert np.max(np.abs(out - oracle)) < 1e-10


def test_uc_mass_conservation(universal, rng):
    g = random_graph(universal, rng, UC)
    probs = random_posteriors(rng, 200, g.inventory.num_emissions)
    out = np.exp(compose(lattice(probs, g.inventory.symbols), g).values.data)
    assert np.max(np.abs(out.sum(axis=1) - 1)) < 1e-9


def test_compose_rejects_inventory_mismatch(universal):
    inv = universal.subset(["a", "b"])
    g = AllophoneGraph(table(inv, [("a", "a"), ("b", "b")]))
    with pytest.raises(ValueError):
        compose(lattice([[0.2, 0.3, 0.5]], ["a", "p"]), g)


def test_compose_requires_posteriors(universal):
    inv = universal.subset(["a"])
    g = AllophoneGraph(table(inv, [("a", "a")]))
    with pytest.raises(ValueError):
        compose(EmissionLattice(ad.Tensor(np.zeros((1, 2))), inv.symbols, LOGIT), g)


def logits(values, symbols):
    return EmissionLattice(ad.Tensor(np.asarray(values, dtype=float)), tuple(symbols), LOGIT)


def test_allomatrix_permutation(universal):
    inv = universal.subset(["a", "i", "u"])
    m = AlloMatrix(table(inv, [("u", "U"), ("a", "A"), ("i", "I")], phonemes=["U", "A", "I"]))
    out = allomatrix_project(logits([[0.5, 1.0, 2.0, 3.0]], inv.symbols), m)
    assert np.array_equal(out.values.data, [[0.5, 3.0, 1.0, 2.0]])


def test_allomatrix_many_to_many_ambiguity(universal):
    inv = universal.subset(["s", "ʃ"])
    m = AlloMatrix(table(inv, [("s", "s"), ("s", "ʃ"), ("ʃ", "s"), ("ʃ", "ʃ")]))
    out = allomatrix_project(logits([[0.0, 2.0, 1.0]], inv.symbols), m)
    assert np.array_equal(out.values.data[0, 1:], [3.0, 3.0])


def test_allomatrix_dense_oracle(universal, rng):
    inv = universal.subset(["p", "t", "k", "a", "i"])
    pairs = [(n, m) for n in inv.symbols for m in "XYZ" if rng.random() < 0.5]
    pairs += [("p", "X"), ("t", "Y"), ("k", "Z")]
    m = AlloMatrix(table(inv, list(dict.fromkeys(pairs)), phonemes=list("XYZ")))
    x = rng.normal(size=(7, 6))
    oracle = np.column_stack([x[:, 0], x[:, 1:] @ m.matrix])
    assert np.allclose(allomatrix_project(logits(x, inv.symbols), m).values.data, oracle, atol=1e-12)


def test_allomatrix_one_to_one_softmax_equals_permuted(universal, rng):
    inv = universal.subset(["a", "i", "u"])
    m = AlloMatrix(table(inv, [("i", "I"), ("u", "U"), ("a", "A")], phonemes=["I", "U", "A"]))
    x = rng.normal(size=(4, 4))
    out = log_softmax_lattice(allomatrix_project(logits(x, inv.symbols), m)).values.data
    perm = x[:, [0, 2, 3, 1]]
    assert np.allclose(np.exp(out), np.exp(perm) / np.exp(perm).sum(1, keepdims=True), atol=1e-14)


def test_allomatrix_binary_entries(universal):
    inv = universal.subset(["k", "q"])
    m = AlloMatrix(table(inv, [("k", "k"), ("k", "q"), ("q", "q")]))
    assert np.array_equal(m.matrix, [[1, 1], [0, 1]])


def test_mask_all_used_is_identity(universal, rng):
    inv = universal.subset(["a", "i"])
    x = logits(rng.normal(size=(3, 3)), inv.symbols)
    assert mask_unmapped(x, table(inv, [("a", "a"), ("i", "i")])) is x


def test_mask_one_unused_phone(universal, rng):
    inv = universal.subset(["a", "i"])
    x = logits(rng.normal(size=(3, 3)), inv.symbols)
    p = np.exp(log_softmax_lattice(mask_unmapped(x, table(inv, [("a", "a")]))).values.data)
    assert np.all(p[:, 2] == 0)
    assert np.allclose(p[:, :2].sum(axis=1), 1, atol=1e-15)


def test_mask_equals_reduced_softmax(universal, rng):
    inv = universal.subset(["a", "i", "u"])
    x = rng.normal(size=(5, 4))
    p = np.exp(log_softmax_lattice(mask_unmapped(logits(x, inv.symbols), table(inv, [("a", "a"), ("u", "u")]))).values.data)
    keep = x[:, [0, 1, 3]]
    ref = np.exp(keep) / np.exp(keep).sum(axis=1, keepdims=True)
    assert np.allclose(p[:, [0, 1, 3]], ref, atol=1e-14)
    assert np.all(p[:, 2] == 0)


def test_mask_gradient_finite(universal, rng):
    inv = universal.subset(["a", "i"])
    w = ad.Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    out = log_softmax_lattice(mask_unmapped(EmissionLattice(w, inv.symbols, LOGIT), table(inv, [("a", "a")])))
    ad.backward(ad.reduce_sum(ad.take(out.values, np.array([0, 1]), axis=1)))
    assert np.all(np.isfinite(w.grad))
    assert np.all(w.grad[:, 2] == 0)


@pytest.mark.parametrize("mode", [UC, FREE])
def test_graph_gradients(universal, rng, mode):
    g = random_graph(universal, rng, mode)
    probs = lattice(random_posteriors(rng, 3, g.inventory.num_emissions), g.inventory.symbols)
    weights = rng.uniform(-1, 1, (3, 4))
    report = ad.gradcheck(lambda: ad.reduce_sum(compose(probs, g).values * weights), [g.params])
    assert report.passed, report.max_rel_error


def test_mapping_table_rejects_empty():
    inv = PhoneInventory(("a",), np.zeros((1, 22), dtype=int))
    with pytest.raises(MappingError):
        MappingTable("x", inv, (), ())


def test_mapping_table_rejects_uncovered_phoneme(universal):
    with pytest.raises(MappingError):
        table(universal, [("a", "a")], phonemes=["a", "b"])


def test_mapping_table_rejects_duplicates(universal):
    with pytest.raises(MappingError):
        table(universal, [("a", "a"), ("a", "a")])


MAPPING_FILE = """# Javanese-like
jv\tkʰ\tk
jv\tk\tk
jv\tk\tq
"""


def test_load_mappings_counts_arcs(universal):
    tables = parse_mappings(io.StringIO(MAPPING_FILE), universal)
    jv = tables["jv"]
    assert len(jv.pairs) == 3
    assert len(jv.phone_positions) == 2
    assert jv.phonemes == ("k", "q")


def test_mapping_unknown_phone_reports_line(universal):
    with pytest.raises(MappingError, match=r"line 2: unknown phone symbol 'ʘ'"):
        parse_mappings(io.StringIO("x\ta\ta\nx\tʘ\ta\n"), universal)


def test_mapping_duplicate_rejected(universal):
    with pytest.raises(MappingError, match="line 3: duplicate"):
        parse_mappings(io.StringIO("x\ta\ta\n\nx\ta\ta\n"), universal)


def test_mapping_malformed_line(universal):
    with pytest.raises(MappingError, match="line 1"):
        parse_mappings(io.StringIO("x a a\n"), universal)


def test_mapping_file_round_trip(universal, tmp_path):
    tables = parse_mappings(io.StringIO(MAPPING_FILE + "tl\ts\ts\ntl\tʃ\ts\n"), universal)
    path = tmp_path / "m.tsv"
    path.write_text(format_mappings(tables.values()), encoding="utf-8")
    again = load_mappings(path, universal)
    assert again == tables


def test_graph_round_trip_bit_exact(universal, rng, tmp_path):
    inv = universal.subset(universal.symbols[:12])
    pairs = [(n, f"M{i % 5}") for i, n in enumerate(inv.symbols)]
    pairs += [(inv.symbols[i], f"M{(i + 1) % 5}") for i in range(8)]
    g = AllophoneGraph(table(inv, pairs), FREE, ad.Tensor(rng.normal(size=20) * 1e3 ** rng.uniform(-1, 1, 20)))
    assert g.num_arcs == 20
    path = tmp_path / "g.graph"
    save_graph(g, path, {"seed": 3})
    back = load_graph(path, inv)
    assert back.arcs() == g.arcs()
    assert back.mode == g.mode
    assert np.array_equal(back.params.data, g.params.data)


def test_graph_meta_preserved(universal):
    inv = universal.subset(["a"])
    g = AllophoneGraph(table(inv, [("a", "a")]))
    _, meta = parse_graph(io.StringIO(format_graph(g, {"toolkit_version": "0.1.0", "seed": 7})), inv)
    assert meta == {"toolkit_version": "0.1.0", "seed": "7"}


def test_graph_file_arc_count_checked(universal):
    inv = universal.subset(["a"])
    text = format_graph(AllophoneGraph(table(inv, [("a", "a")]))).replace("arcs = 1", "arcs = 2")
    with pytest.raises(MappingError):
        parse_graph(io.StringIO(text), inv)


def test_lattice_shape_checked():
    with pytest.raises(ad.ShapeError):
        EmissionLattice(ad.Tensor(np.zeros((2, 2))), ("a", "b"))
