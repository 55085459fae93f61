"""Multilingual CTC training of the encoder, phone layer and allophone graphs."""
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .acoustic import EncoderConfig, subsampled_length
from .ctc import InfeasibleTarget, best_path_decode, ctc_loss_batch, forced_align, min_frames
from .model import ALLOMATRIX, MODES, PHONEME_ONLY, Model, NoPhonePredictions

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    mode: str = "allograph-uc"
    epochs: int = 20
    batch_size: int = 16
    lr: float = 0.01
    graph_lr: float = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 0
    seed: int = 0
    languages: list = None
    hidden_dims: list = field(default_factory=lambda: [32])
    subsampling: int = 1
    nonlinearity: str = "tanh"
    bucket_factor: int = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown training mode {self.mode!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")

    def to_dict(self):
        return asdict(self)

    def encoder_config(self, input_dim):
        return EncoderConfig(input_dim, list(self.hidden_dims), self.subsampling, self.nonlinearity,
                             seed=self.seed)


@dataclass
class AdamState:
    step: int = 0
    m: list = None
    v: list = None
    skipped: int = 0

    def to_dict(self):
        return {"step": self.step, "skipped": self.skipped,
                "m": [a.tolist() for a in self.m or []], "v": [a.tolist() for a in self.v or []]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["step"], [np.array(a) for a in d["m"]], [np.array(a) for a in d["v"]], d.get("skipped", 0))


def step_optimizer(params, grads, state, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (new params, new state).

    ``lr`` may be a scalar or one rate per parameter.  A non-finite
    gradient skips the whole step.
    """
    if state.m is None:
        state = AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], state.skipped)
    if not all(np.all(np.isfinite(g)) for g in grads):
        log.warning("non-finite gradient at step %d; update skipped", state.step + 1)
        return list(params), AdamState(state.step, state.m, state.v, state.skipped + 1)
    rates = np.broadcast_to(np.asarray(lr, dtype=np.float64), (len(params),))
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v, rate in zip(params, grads, state.m, state.v, rates):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_p.append(p - rate * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(t, new_m, new_v, state.skipped)


@dataclass
class TrainResult:
    model: Model
    loss_curve: list
    optimizer_state: AdamState
    skipped_utterances: list
    seconds: float


def targets_for(model, utterance):
    phonemes = model.phonemes(utterance.language)
    return [phonemes.index(m) + 1 for m in utterance.phonemes]


def encoded_length(model, utterance):
    return subsampled_length(utterance.num_frames, model.encoder.config.subsampling)


def batch_loss(model, utterances):
    """Mean over utterances of CTC loss divided by target length (one language per batch)."""
    lang = utterances[0].language
    h, spans = model.encoder.batch([u.features for u in utterances])
    lattice = model.phoneme_lattice(h, lang)
    targets = [targets_for(model, u) for u in utterances]
    weights = [1.0 / (len(t) * len(utterances)) for t in targets]
    return ctc_loss_batch(lattice.values, spans, targets, weights)


def make_batches(utterances, languages, batch_size, rng, bucket_factor=4):
    """Single-language batches, bucketed by length, languages interleaved round-robin."""
    per_lang = []
    for lang in languages:
        utts = [u for u in utterances if u.language == lang]
        order = rng.permutation(len(utts))
        utts = [utts[i] for i in order]
        chunk = batch_size * bucket_factor
        batches = []
        for start in range(0, len(utts), chunk):
            bucket = sorted(utts[start:start + chunk], key=lambda u: u.num_frames)
            batches += [bucket[i:i + batch_size] for i in range(0, len(bucket), batch_size)]
        per_lang.append(batches)
    out = []
    for k in range(max((len(b) for b in per_lang), default=0)):
        out += [b[k] for b in per_lang if k < len(b)]
    return out


def feasible(model, utterances):
    ok, skipped = [], []
    for u in utterances:
        if not u.phonemes or min_frames(targets_for(model, u)) > encoded_length(model, u):
            skipped.append(u.utterance_id)
        else:
            ok.append(u)
    return ok, skipped


def build_model(corpus, inventory, config, mappings=None, phoneme_sets=None):
    languages = config.languages or corpus.languages
    mappings = dict(mappings or {})
    if config.mode != PHONEME_ONLY:
        missing = [lang for lang in languages if lang not in mappings]
        if missing:
            raise ValueError(f"no mapping table for languages {missing}")
        mappings = {lang: mappings[lang] for lang in languages}
    else:
        sets = dict(phoneme_sets or {})
        for lang in languages:
            if lang not in sets and lang not in mappings:
                sets[lang] = tuple(dict.fromkeys(m for u in corpus.by_language(lang) for m in u.phonemes))
        phoneme_sets = sets
        mappings = {lang: mappings[lang] for lang in languages if lang in mappings}
    input_dim = corpus.utterances[0].features.shape[1]
    return Model(inventory, config.mode, config.encoder_config(input_dim), config.seed,
                 mappings=mappings, phoneme_sets=phoneme_sets)


def train(corpus, inventory, config, mappings=None, phoneme_sets=None, model=None, state=None,
          progress=None, start_epoch=0):
    """Train on ``corpus`` (which carries phoneme transcripts only).

    Returns a :class:`TrainResult` whose ``loss_curve`` holds the mean
    per-utterance normalized loss of every epoch.  Batch order depends only
    on the seed and the absolute epoch number, so resuming a run with its
    optimizer state and ``start_epoch`` continues it exactly.
    """
    started = time.perf_counter()
    if model is None:
        model = build_model(corpus, inventory, config, mappings, phoneme_sets)
    languages = config.languages or corpus.languages
    utterances, skipped = feasible(model, [u for u in corpus if u.language in languages])
    if skipped:
        log.info("skipping %d infeasible utterances", len(skipped))
    groups = model.parameters()
    tensors = [t for _, t in groups]
    graph_lr = config.lr if config.graph_lr is None else config.graph_lr
    state = state or AdamState()
    curve = []
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        rng = np.random.default_rng([config.seed, 1, start_epoch + epoch])
        for batch in make_batches(utterances, languages, config.batch_size, rng, config.bucket_factor):
            model.zero_grad()
            loss = batch_loss(model, batch)
            ad.backward(loss)
            warm = min(1.0, (state.step + 1) / config.warmup_steps) if config.warmup_steps else 1.0
            rates = [warm * (graph_lr if g == "graph" else config.lr) for g, _ in groups]
            grads = [np.zeros(t.shape) if t.grad is None else t.grad for t in tensors]
            new, state = step_optimizer([t.data for t in tensors], grads, state, rates,
                                        config.beta1, config.beta2, config.eps)
            for t, value in zip(tensors, new):
                t.data = value
            total += loss.item() * len(batch)
            count += len(batch)
        curve.append(total / max(count, 1))
        if progress:
            progress(start_epoch + epoch + 1, curve[-1])
        log.debug("epoch %d loss %.6f", start_epoch + epoch + 1, curve[-1])
    model.zero_grad()
    return TrainResult(model, curve, state, skipped, time.perf_counter() - started)


def evaluate_loss(model, utterances, batch_size=64):
    """Mean per-utterance normalized CTC loss; infeasible utterances are skipped."""
    ok, _ = feasible(model, list(utterances))
    total = 0.0
    for lang in sorted({u.language for u in ok}):
        utts = [u for u in ok if u.language == lang]
        for i in range(0, len(utts), batch_size):
            chunk = utts[i:i + batch_size]
            total += batch_loss(model, chunk).item() * len(chunk)
    return total / max(len(ok), 1)


def _hidden(model, utterance):
    h, _ = model.encoder.batch([utterance.features])
    return h


def decode_phonemes(model, utterances):
    """utt-id -> greedy phoneme decode through the language's phoneme layer."""
    out = {}
    for u in utterances:
        lattice = model.phoneme_lattice(_hidden(model, u), u.language)
        out[u.utterance_id] = [lattice.symbol(k) for k in best_path_decode(lattice)]
    return out


def decode_phones(model, utterances, masked=False):
    """utt-id -> greedy universal phone decode (unmasked unless ``masked``)."""
    if model.mode == PHONEME_ONLY:
        raise NoPhonePredictions("phoneme-only model has no phone predictions")
    out = {}
    for u in utterances:
        lattice = model.phone_lattice(_hidden(model, u), u.language if masked else None)
        out[u.utterance_id] = [lattice.symbol(k) for k in best_path_decode(lattice)]
    return out


def align(model, utterance, open_phones=False):
    """Joint phone/phoneme forced alignment of one utterance (allophone-graph modes only)."""
    if model.mode in (PHONEME_ONLY, ALLOMATRIX):
        raise ValueError(f"forced alignment needs an allophone graph; model mode is {model.mode}")
    h = _hidden(model, utterance)
    phones = model.phone_lattice(h, utterance.language)
    track = model.phone_lattice(h) if open_phones else None
    return forced_align(phones, model.graphs[utterance.language], targets_for(model, utterance),
                        open_phones=open_phones, track_emissions=track)


def align_corpus(model, utterances, open_phones=False):
    """Alignments keyed by utt-id plus the ids that could not be aligned."""
    out, failed = {}, []
    for u in utterances:
        try:
            out[u.utterance_id] = align(model, u, open_phones)
        except InfeasibleTarget:
            failed.append(u.utterance_id)
    return out, failed
