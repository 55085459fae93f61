"""Command-line entry points.

Every subcommand takes long-form flags only; ``--config FILE`` (JSON) sets
the same keys and overrides the flags.  Failures exit nonzero with a single
``error: <category>: <message>`` line, the category being one of config,
data, numeric or infeasible.
"""
import argparse
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__, presets
from . import autodiff as ad
from .corpus import CorpusError, load_corpus, load_phone_truth, read_lexicon, save_corpus, write_lexicon
from .ctc import InfeasibleTarget, ctc_loss
from .inventory import InventoryError, load_feature_table, save_feature_table
from .lingapps import collect_pronunciations, discover_allophones, format_pronunciations, format_realizations
from .metrics import format_report, merge_reports, score
from .model import NoPhonePredictions, config_hash, load_checkpoint, load_optimizer_state, read_loss_curve, save_checkpoint
from .synthetic import LanguageSpec, SyntheticSpec, SyntheticSpecError, generate_synthetic
from .training import TrainConfig, align_corpus, decode_phonemes, decode_phones, train
from .wfst import MappingError, effective_weights, format_mappings, load_mappings

EXIT_CODES = {"config": 2, "data": 3, "numeric": 4, "infeasible": 5}


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def _meta(config, seed):
    return {"toolkit_version": __version__, "config_hash": config_hash(config), "seed": seed}


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _require(path, what):
    if not path or not os.path.exists(path):
        raise CliError("config", f"{what} not found: {path}")
    return path


def _load_model(path):
    _require(path, "checkpoint")
    try:
        return load_checkpoint(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError("data", f"unreadable checkpoint {path}: {exc}") from None


def _load_corpus_for(model, path):
    _require(path, "corpus")
    corpus = load_corpus(path)
    inv_path = os.path.join(path, "inventory.tsv")
    if os.path.exists(inv_path) and load_feature_table(inv_path) != model.inventory:
        raise CliError("data", "phone inventory of corpus and checkpoint differ")
    dim = model.encoder.config.input_dim
    for u in corpus:
        if u.features.shape[1] != dim:
            raise CliError("data", f"{u.utterance_id}: feature dimension {u.features.shape[1]} != model input {dim}")
        if u.language in model.languages:
            unknown = set(u.phonemes) - set(model.phonemes(u.language))
            if unknown:
                raise CliError("data", f"{u.utterance_id}: phonemes {sorted(unknown)} not in model for {u.language}")
    return corpus


# -- subcommands -------------------------------------------------------------

def spec_from_json(d):
    languages = {name: LanguageSpec(**lang) for name, lang in d.pop("languages").items()}
    for key in ("length_range", "frames_per_phone"):
        if key in d:
            d[key] = tuple(d[key])
    return SyntheticSpec(languages=languages, **d)


def cmd_gen_synthetic(args):
    if args.spec:
        with open(_require(args.spec, "spec file"), encoding="utf-8") as fh:
            spec = spec_from_json(json.load(fh))
        spec.seed = args.seed
    else:
        if args.preset not in presets.PRESETS:
            raise CliError("config", f"unknown preset {args.preset!r}; choose from {sorted(presets.PRESETS)}")
        kwargs = {"seed": args.seed}
        if args.utterances:
            kwargs["utterances"] = args.utterances
        if args.noise is not None:
            kwargs["noise"] = args.noise
        spec = presets.PRESETS[args.preset](**kwargs)
    inventory = load_feature_table(args.feature_table).subset(spec.phones)
    corpus, truth = generate_synthetic(spec)
    meta = _meta({"preset": args.preset, "spec": args.spec, "utterances": spec.utterances_per_language,
                  "noise": spec.noise}, args.seed)
    save_corpus(corpus, args.out, phone_truth=truth, meta=meta, binary=not args.text_features)
    save_feature_table(inventory, os.path.join(args.out, "inventory.tsv"))
    tables = spec.mapping_tables(inventory)
    _write_atomic(os.path.join(args.out, "mappings.tsv"),
                  "".join(f"# {k} = {v}\n" for k, v in meta.items()) + format_mappings(tables.values()))
    lexicon = {(lang, w): p for lang, ls in spec.languages.items() for w, p in (ls.words or {}).items()}
    if lexicon:
        write_lexicon(os.path.join(args.out, "lexicon.tsv"), lexicon, meta)
    print(f"wrote {len(corpus)} utterances in {len(spec.languages)} languages to {args.out}")


def cmd_train(args):
    if args.seed is None:
        raise CliError("config", "--seed is required for train")
    cfg = TrainConfig(mode=args.mode, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                      graph_lr=args.graph_lr, warmup_steps=args.warmup_steps, seed=args.seed,
                      languages=args.languages, hidden_dims=args.hidden_dims, subsampling=args.subsampling,
                      nonlinearity=args.nonlinearity)
    corpus = load_corpus(_require(args.corpus, "corpus"))
    inv_path = args.inventory or os.path.join(args.corpus, "inventory.tsv")
    inventory = load_feature_table(_require(inv_path, "phone inventory"))
    mappings = None
    if cfg.mode != "phoneme-only":
        mappings = load_mappings(_require(args.mappings, "mapping file"), inventory)
    elif args.mappings and os.path.exists(args.mappings):
        mappings = load_mappings(args.mappings, inventory)
    model, state, curve = None, None, []
    if args.resume and os.path.exists(os.path.join(args.checkpoint, "config.json")):
        model, _ = load_checkpoint(args.checkpoint)
        state = load_optimizer_state(args.checkpoint)
        curve = read_loss_curve(args.checkpoint)
    try:
        result = train(corpus, inventory, cfg, mappings=mappings, model=model, state=state,
                       start_epoch=len(curve))
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    curve += result.loss_curve
    if not all(np.isfinite(curve)):
        raise CliError("numeric", "training produced a non-finite loss")
    meta = save_checkpoint(result.model, args.checkpoint, cfg.to_dict(), result.optimizer_state, curve)
    print(f"trained {cfg.mode} for {cfg.epochs} epochs in {result.seconds:.1f}s; "
          f"final loss {curve[-1]:.6f}; skipped {len(result.skipped_utterances)} infeasible; "
          f"config_hash {meta['config_hash']}")


def cmd_eval(args):
    model, config = _load_model(args.checkpoint)
    corpus = _load_corpus_for(model, args.corpus)
    meta = {"toolkit_version": __version__, "config_hash": config["config_hash"], "seed": config["seed"]}
    os.makedirs(args.out, exist_ok=True)
    seen = [lang for lang in corpus.languages if lang in model.languages]
    reports = []
    for lang in seen:
        utts = corpus.by_language(lang)
        hyp = decode_phonemes(model, utts)
        reports.append(score(hyp, {u.utterance_id: u.phonemes for u in utts}, _afd_inventory(model), lang))
    if reports:
        text = format_report(reports + [merge_reports(reports)], meta, per_utterance=args.per_utterance)
        _write_atomic(os.path.join(args.out, "phoneme_report.txt"), text)
    refs = load_phone_truth(args.corpus)
    if args.phone_refs:
        refs = {utt: syms for utt, syms in _read_refs(args.phone_refs).items()}
    phone_langs = [lang for lang in corpus.languages if lang not in model.languages or args.phone_level]
    phone_utts = [u for lang in phone_langs for u in corpus.by_language(lang) if u.utterance_id in refs]
    if phone_utts:
        path = os.path.join(args.out, "phone_report.txt")
        try:
            hyp = decode_phones(model, phone_utts)
        except NoPhonePredictions:
            _write_atomic(path, "# score report\n" + "".join(f"{k} = {v}\n" for k, v in meta.items())
                          + "status = no-phone-predictions\n")
            print("phone evaluation: no phone predictions (phoneme-only model)")
        else:
            preps = []
            for lang in phone_langs:
                utts = [u for u in phone_utts if u.language == lang]
                if utts:
                    preps.append(score({u.utterance_id: hyp[u.utterance_id] for u in utts},
                                       {u.utterance_id: refs[u.utterance_id] for u in utts}, model.inventory, lang))
            _write_atomic(path, format_report(preps + [merge_reports(preps)], meta,
                                              per_utterance=args.per_utterance))
    for rep in reports:
        print(f"{rep.label}\tPER {rep.per:.2f}\tSER {rep.ser:.2f}")
    if reports:
        total = merge_reports(reports)
        print(f"total\tPER {total.per:.2f}\tSER {total.ser:.2f}")


def _afd_inventory(model):
    return model.inventory if all(m in model.inventory for lang in model.languages
                                  for m in model.phonemes(lang)) else None


def _read_refs(path):
    from .corpus import read_transcripts
    return read_transcripts(path)


def cmd_align(args):
    model, config = _load_model(args.checkpoint)
    corpus = _load_corpus_for(model, args.corpus)
    lines = [f"# {k} = {v}" for k, v in
             {"toolkit_version": __version__, "config_hash": config["config_hash"], "seed": config["seed"]}.items()]
    alis, failed = _align(model, corpus, args.open_phones)
    for utt, ali in alis.items():
        phones = " ".join(ali.phone_symbols[r.phone - 1] if r.phone else "∅" for r in ali.records)
        phonemes = " ".join(ali.phoneme_symbols[r.phoneme - 1] if r.phoneme else "∅" for r in ali.records)
        lines.append(f"{utt}\tphones\t{phones}")
        lines.append(f"{utt}\tphonemes\t{phonemes}")
        lines.append(f"{utt}\tscore\t{ali.score:.6f}")
    if failed:
        lines.append(f"# infeasible = {len(failed)}")
    _write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"aligned {len(alis)} utterances; {len(failed)} infeasible")


def _align(model, corpus, open_phones):
    utts = [u for u in corpus if u.language in model.graphs]
    if not model.graphs:
        raise CliError("config", f"forced alignment needs an allophone-graph checkpoint (mode {model.mode})")
    return align_corpus(model, utts, open_phones)


def format_graph_table(graph, dominant=0.5):
    """Per-phone arc listing with effective weights; arcs above ``dominant`` are starred."""
    weights = effective_weights(graph).data
    rows = {}
    for (phone, phoneme, _), w in zip(graph.arcs(), weights):
        rows.setdefault(phone, []).append((phoneme, w))
    lines = [f"# graph {graph.language} ({graph.mode})"]
    for phone in graph.inventory.symbols:
        if phone not in rows:
            continue
        arcs = sorted(rows[phone], key=lambda a: (-a[1], a[0]))
        cells = "  ".join(f"/{m}/ {w:.2f}{' *' if w > dominant and len(arcs) > 1 else ''}" for m, w in arcs)
        lines.append(f"[{phone}]\t{cells}")
    return "\n".join(lines) + "\n"


def cmd_inspect_graph(args):
    model, _ = _load_model(args.checkpoint)
    if args.language not in model.graphs:
        raise CliError("config", f"no allophone graph for language {args.language!r}")
    sys.stdout.write(format_graph_table(model.graphs[args.language]))


def cmd_discover(args):
    model, config = _load_model(args.checkpoint)
    corpus = _load_corpus_for(model, args.corpus)
    meta = {"toolkit_version": __version__, "config_hash": config["config_hash"], "seed": config["seed"]}
    alis, failed = _align(model, corpus, args.open_phones)
    parts = []
    for lang in sorted(model.graphs):
        lang_alis = [alis[u.utterance_id] for u in corpus.by_language(lang) if u.utterance_id in alis]
        if not lang_alis:
            continue
        stats = discover_allophones(lang_alis, model.mappings[lang], min_count=args.min_count)
        parts.append(format_realizations(stats, lang, meta))
    # one header block, then the rows of every language
    text = parts[0] if parts else format_realizations([], "", meta)
    for part in parts[1:]:
        text += "".join(line + "\n" for line in part.splitlines()[len(meta) + 2:])
    if failed:
        text += f"# infeasible = {len(failed)}\n"
    _write_atomic(args.out, text)
    print(f"aligned {len(alis)} utterances; {len(failed)} infeasible")


def cmd_pronunciations(args):
    model, config = _load_model(args.checkpoint)
    corpus = _load_corpus_for(model, args.corpus)
    lexicon = read_lexicon(_require(args.lexicon, "lexicon"))
    meta = {"toolkit_version": __version__, "config_hash": config["config_hash"], "seed": config["seed"]}
    alis, failed = _align(model, corpus, False)
    utts = [u for u in corpus if u.utterance_id in alis]
    entries, skipped = collect_pronunciations(alis, lexicon, utts, decode_phonemes(model, utts))
    text = format_pronunciations(entries, meta)
    text += f"# skipped_words = {skipped}\n# infeasible = {len(failed)}\n"
    _write_atomic(args.out, text)
    print(f"{len(entries)} words; {skipped} word tokens not in lexicon; {len(failed)} infeasible")


def builtin_gradchecks(seed=0, step=1e-5, tolerance=1e-4, pipeline_tolerance=1e-3):
    """Finite-difference checks of CTC, graph composition (both modes) and the full pipeline."""
    from .acoustic import Encoder, EncoderConfig, OutputLayer, softmax_out
    from .inventory import PhoneInventory
    from .wfst import FREE, UC, AllophoneGraph, EmissionLattice, MappingTable, compose, log_softmax_lattice

    rng = np.random.default_rng(seed)
    results = {}
    lp = ad.Tensor(np.log(rng.dirichlet(np.ones(4), size=5)), name="log_emissions")
    results["ctc"] = ad.gradcheck(lambda: ctc_loss(EmissionLattice(lp, ("a", "b", "c")), [1, 2, 1]),
                                  [lp], step, tolerance)
    inv = PhoneInventory(("a", "b", "c"), np.zeros((3, 22), dtype=np.int64))
    mapping = MappingTable(
        "x", inv, ("A", "B"), ((0, 0), (1, 0), (1, 1), (2, 1)))
    phones = log_softmax_lattice(EmissionLattice(ad.Tensor(rng.uniform(-2, 2, (4, 4))), inv.symbols, "logit"))
    for mode in (FREE, UC):
        graph = AllophoneGraph(mapping, mode, ad.Tensor(rng.uniform(-2, 2, 4)))
        results[f"graph-{mode}"] = ad.gradcheck(lambda: ctc_loss(compose(phones, graph), [1, 2]),
                                                [graph.params], step, tolerance)
    enc = Encoder(EncoderConfig(3, [4], seed=seed))
    head = OutputLayer(4, inv.symbols, rng)
    graph = AllophoneGraph(mapping, UC, ad.Tensor(rng.uniform(-2, 2, 4)))
    x = rng.uniform(-2, 2, (2, 3))
    results["end-to-end"] = ad.gradcheck(
        lambda: ctc_loss(compose(softmax_out(enc(x), head), graph), [2]),
        enc.parameters() + head.parameters() + [graph.params], step, pipeline_tolerance)
    return results


def cmd_gradcheck(args):
    results = builtin_gradchecks(args.seed, args.step, args.tolerance)
    failed = False
    for name, rep in results.items():
        status = "pass" if rep.passed else "FAIL"
        failed |= not rep.passed
        print(f"{name}\t{status}\tmax_rel_error {rep.worst:.3e}\ttolerance {rep.tolerance:g}")
    if failed:
        raise CliError("numeric", "gradient check failed")


# -- parser --------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="allograph", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        p.add_argument("--config", help="JSON file whose keys override flags")
        p.set_defaults(func=fn)
        return p

    p = add("gen-synthetic", cmd_gen_synthetic, "write a synthetic corpus with planted priors")
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", default="quickstart")
    p.add_argument("--spec", help="JSON synthetic spec instead of a preset")
    p.add_argument("--utterances", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--feature-table")
    p.add_argument("--text-features", action="store_true")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a model")
    p.add_argument("--seed", type=int)
    p.add_argument("--corpus", required=True)
    p.add_argument("--inventory")
    p.add_argument("--mappings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", default="allograph-uc")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--graph-lr", type=float)
    p.add_argument("--warmup-steps", type=int, default=0)
    p.add_argument("--hidden-dims", type=int, nargs="+", default=[32])
    p.add_argument("--subsampling", type=int, default=1)
    p.add_argument("--nonlinearity", default="tanh")
    p.add_argument("--languages", nargs="+")
    p.add_argument("--resume", action="store_true")

    p = add("eval", cmd_eval, "score phoneme (seen) and phone (unseen) decodes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--phone-refs")
    p.add_argument("--phone-level", action="store_true", help="also score phones of seen languages")
    p.add_argument("--per-utterance", action="store_true")

    p = add("align", cmd_align, "dump joint phone/phoneme alignments")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--open-phones", action="store_true")

    p = add("inspect-graph", cmd_inspect_graph, "print learned arc weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--language", required=True)

    p = add("discover", cmd_discover, "allophone realization rates and contexts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--open-phones", action="store_true")

    p = add("pronunciations", cmd_pronunciations, "pronunciation variants of lexicon words")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", required=True)

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def _apply_config(parser, args):
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError("config", f"cannot read config {args.config}: {exc}") from None
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise CliError("config", f"unknown config key {key!r}")
        setattr(args, attr, value)
    return args


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config(parser, args)
        if args.command == "gen-synthetic" and args.seed is None:
            raise CliError("config", "--seed is required for gen-synthetic")
        args.func(args)
    except CliError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except (MappingError, InventoryError, SyntheticSpecError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except CorpusError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_CODES["data"]
    except InfeasibleTarget as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_CODES["infeasible"]
    except FloatingPointError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_CODES["numeric"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
