"""Multilingual phone recognizer with per-language phone-to-phoneme layers."""
import hashlib
import json
import os
import shutil
import tempfile

import numpy as np

from . import __version__
from .acoustic import Encoder, EncoderConfig, OutputLayer, uniform_init
from .inventory import load_feature_table, save_feature_table
from .wfst import (FREE, UC, AllophoneGraph, AlloMatrix, allomatrix_project,
                   compose, format_mappings, load_graph, load_mappings, log_softmax_lattice, mask_unmapped,
                   save_graph)

ALLOGRAPH_FREE = "allograph-free"
ALLOGRAPH_UC = "allograph-uc"
ALLOMATRIX = "allomatrix"
PHONEME_ONLY = "phoneme-only"
MODES = (ALLOGRAPH_FREE, ALLOGRAPH_UC, ALLOMATRIX, PHONEME_ONLY)


class NoPhonePredictions(Exception):
    """Phoneme-only models have no universal phone layer."""


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


class Model:
    """Shared encoder and phone layer plus one phone-to-phoneme layer per language.

    Parameters are drawn from one seeded generator in a fixed order
    (encoder, phone layer, then per-language heads), so modes that share a
    seed start from the same encoder.  Phoneme-only heads copy the phone
    layer column of any phone with the same symbol.
    """

    def __init__(self, inventory, mode, encoder_config, seed, mappings=None, phoneme_sets=None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.inventory = inventory
        self.mode = mode
        self.seed = seed
        self.mappings = dict(mappings or {})
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(encoder_config, rng)
        d = encoder_config.output_dim
        self.phone_head = OutputLayer(d, inventory.symbols, rng, name="phones")
        self.graphs, self.matrices, self.heads = {}, {}, {}
        if mode == PHONEME_ONLY:
            sets = dict(phoneme_sets or {})
            for lang, table in self.mappings.items():
                sets.setdefault(lang, table.phonemes)
            for lang in sorted(sets):
                self.heads[lang] = self._phoneme_head(lang, sets[lang], rng)
        else:
            for lang in sorted(self.mappings):
                table = self.mappings[lang]
                if mode == ALLOMATRIX:
                    self.matrices[lang] = AlloMatrix(table)
                else:
                    self.graphs[lang] = AllophoneGraph(table, FREE if mode == ALLOGRAPH_FREE else UC)

    def _phoneme_head(self, lang, phonemes, rng):
        d = self.encoder.config.output_dim
        w = uniform_init(rng, d, (d, len(phonemes) + 1))
        b = uniform_init(rng, d, len(phonemes) + 1)
        w[:, 0], b[0] = self.phone_head.weight.data[:, 0], self.phone_head.bias.data[0]
        for j, m in enumerate(phonemes, 1):
            if m in self.inventory:
                k = self.inventory.emission_index(m)
                w[:, j], b[j] = self.phone_head.weight.data[:, k], self.phone_head.bias.data[k]
        return OutputLayer(d, phonemes, name=f"head:{lang}", weight=w, bias=b)

    @property
    def languages(self):
        return sorted(self.heads or self.graphs or self.matrices)

    def phonemes(self, lang):
        if self.mode == PHONEME_ONLY:
            return self.heads[lang].symbols
        return self.mappings[lang].phonemes

    def parameters(self):
        """(group, tensor) pairs; group is 'graph' for arc weights, 'net' otherwise."""
        out = [("net", p) for p in self.encoder.parameters()]
        if self.mode != PHONEME_ONLY:
            out += [("net", p) for p in self.phone_head.parameters()]
        for lang in sorted(self.heads):
            out += [("net", p) for p in self.heads[lang].parameters()]
        for lang in sorted(self.graphs):
            out.append(("graph", self.graphs[lang].params))
        return out

    def zero_grad(self):
        for _, p in self.parameters():
            p.zero_grad()

    def _check_language(self, lang):
        if lang not in self.languages:
            raise KeyError(f"model has no phoneme layer for language {lang!r}")

    def phoneme_lattice(self, h, lang):
        """Log posteriors over ``lang``'s phonemes plus blank."""
        self._check_language(lang)
        if self.mode == PHONEME_ONLY:
            return self.heads[lang](h)
        logits = self.phone_head.logits(h)
        if self.mode == ALLOMATRIX:
            return log_softmax_lattice(allomatrix_project(logits, self.matrices[lang]))
        phones = log_softmax_lattice(mask_unmapped(logits, self.mappings[lang]))
        return compose(phones, self.graphs[lang])

    def phone_lattice(self, h, lang=None):
        """Log posteriors over universal phones; masked to ``lang``'s phones when given."""
        if self.mode == PHONEME_ONLY:
            raise NoPhonePredictions("phoneme-only model has no phone predictions")
        logits = self.phone_head.logits(h)
        if lang is not None and lang in self.mappings:
            logits = mask_unmapped(logits, self.mappings[lang])
        return log_softmax_lattice(logits)


# -- checkpoints -----------------------------------------------------------

def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _arrays(tensors):
    return [t.data.tolist() for t in tensors]


def save_checkpoint(model, directory, train_config=None, optimizer_state=None, loss_curve=None):
    """Write a checkpoint directory atomically (nothing is left behind on failure)."""
    config = {
        "mode": model.mode,
        "seed": model.seed,
        "encoder": vars(model.encoder.config),
        "languages": model.languages,
        "train": train_config or {},
    }
    meta = {"toolkit_version": __version__, "config_hash": config_hash(config), "seed": model.seed}
    parent = os.path.dirname(os.path.abspath(directory))
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".ckpt-", dir=parent)
    try:
        _dump_json(os.path.join(tmp, "config.json"), dict(config, **meta))
        save_feature_table(model.inventory, os.path.join(tmp, "inventory.tsv"))
        if model.mappings:
            with open(os.path.join(tmp, "mappings.tsv"), "w", encoding="utf-8") as fh:
                fh.write("".join(f"# {k} = {v}\n" for k, v in meta.items()))
                fh.write(format_mappings([model.mappings[k] for k in sorted(model.mappings)]))
        params = {"encoder": _arrays(model.encoder.parameters()),
                  "phones": _arrays(model.phone_head.parameters()),
                  "heads": {lang: {"symbols": list(h.symbols), "params": _arrays(h.parameters())}
                            for lang, h in model.heads.items()}}
        _dump_json(os.path.join(tmp, "encoder.json"), dict(params, **meta))
        if model.graphs:
            os.makedirs(os.path.join(tmp, "graphs"))
            for lang, graph in model.graphs.items():
                save_graph(graph, os.path.join(tmp, "graphs", f"{lang}.graph"), meta)
        if optimizer_state is not None:
            _dump_json(os.path.join(tmp, "optimizer.json"), dict(optimizer_state.to_dict(), **meta))
        if loss_curve is not None:
            with open(os.path.join(tmp, "loss_curve.tsv"), "w", encoding="utf-8") as fh:
                fh.write("".join(f"# {k} = {v}\n" for k, v in meta.items()))
                fh.write("".join(f"{i + 1}\t{v!r}\n" for i, v in enumerate(loss_curve)))
        if os.path.exists(directory):
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return meta


def load_checkpoint(directory):
    """Rebuild a model from a checkpoint; returns (model, config dict)."""
    config = _load_json(os.path.join(directory, "config.json"))
    inventory = load_feature_table(os.path.join(directory, "inventory.tsv"))
    mpath = os.path.join(directory, "mappings.tsv")
    mappings = load_mappings(mpath, inventory) if os.path.exists(mpath) else {}
    params = _load_json(os.path.join(directory, "encoder.json"))
    phoneme_sets = {lang: tuple(h["symbols"]) for lang, h in params["heads"].items()}
    model = Model(inventory, config["mode"], EncoderConfig(**config["encoder"]), config["seed"],
                  mappings=mappings, phoneme_sets=phoneme_sets)
    for t, values in zip(model.encoder.parameters(), params["encoder"]):
        t.data = np.array(values, dtype=np.float64)
    for t, values in zip(model.phone_head.parameters(), params["phones"]):
        t.data = np.array(values, dtype=np.float64)
    for lang, h in params["heads"].items():
        for t, values in zip(model.heads[lang].parameters(), h["params"]):
            t.data = np.array(values, dtype=np.float64)
    for lang in model.graphs:
        graph = load_graph(os.path.join(directory, "graphs", f"{lang}.graph"), inventory)
        model.graphs[lang].params.data = graph.params.data
        model.graphs[lang].mode = graph.mode
    return model, config


def load_optimizer_state(directory):
    from .training import AdamState
    path = os.path.join(directory, "optimizer.json")
    return AdamState.from_dict(_load_json(path)) if os.path.exists(path) else None


def read_loss_curve(directory):
    path = os.path.join(directory, "loss_curve.tsv")
    with open(path, encoding="utf-8") as fh:
        return [float(line.split("\t")[1]) for line in fh if line.strip() and not line.startswith("#")]

