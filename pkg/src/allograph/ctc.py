"""CTC loss, greedy decoding and joint phone/phoneme forced alignment.

Labels follow the usual topology: the target ``y`` is interleaved with
blanks into an extended sequence of length ``2S + 1``; blanks are optional
between labels and mandatory between repeated labels.  Everything runs in
log space.
"""
from dataclasses import dataclass, field
from collections import Counter

import numpy as np

from . import autodiff as ad
from .inventory import BLANK
from .wfst import LOG_POSTERIOR, compose, log_weights


class InfeasibleTarget(ValueError):
    """The target cannot be emitted in the available number of frames."""

    def __init__(self, frames, needed):
        super().__init__(f"target needs at least {needed} frames, lattice has {frames}")
        self.frames = frames
        self.needed = needed


def min_frames(target):
    """Fewest frames able to emit ``target`` (one extra per adjacent repeat)."""
    target = list(target)
    return len(target) + sum(a == b for a, b in zip(target, target[1:]))


def _extend(target):
    ext = np.zeros(2 * len(target) + 1, dtype=np.intp)
    ext[1::2] = target
    skip = np.zeros(len(ext), dtype=bool)
    skip[3::2] = ext[3::2] != ext[1:-2:2]
    return ext, skip


def _check_target(target, frames):
    if len(target) < 1:
        raise ValueError("CTC target must contain at least one label")
    if any(int(k) == BLANK for k in target):
        raise ValueError("CTC target may not contain the blank")
    needed = min_frames(target)
    if needed > frames:
        raise InfeasibleTarget(frames, needed)


def forward_variables(logp, ext, skip):
    T, L = logp.shape[0], len(ext)
    alpha = np.full((T, L), -np.inf)
    alpha[0, 0] = logp[0, ext[0]]
    if L > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = a + logp[t, ext]
    return alpha


def backward_variables(logp, ext, skip):
    """beta[t, s]: log-probability of frames t+1.. given extended state s at t."""
    T, L = logp.shape[0], len(ext)
    beta = np.full((T, L), -np.inf)
    beta[T - 1, L - 1] = 0.0
    beta[T - 1, L - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + logp[t + 1, ext]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        b[:-2] = np.where(skip[2:], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = b
    return beta


def _nll_and_grad(logp, target):
    ext, skip = _extend(np.asarray(target, dtype=np.intp))
    alpha = forward_variables(logp, ext, skip)
    beta = backward_variables(logp, ext, skip)
    loglik = np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    with np.errstate(invalid="ignore"):
        occupancy = np.exp(alpha + beta - loglik)
    occupancy = np.nan_to_num(occupancy)
    grad = np.zeros_like(logp)
    np.add.at(grad.T, ext, -occupancy.T)
    return -loglik, grad


def ctc_loss_batch(values, spans, targets, weights=None):
    """Weighted sum of CTC losses of several utterances stored row-wise in one tensor.

    ``spans`` are (start, stop) row ranges of ``values``; ``targets`` the
    matching label sequences.  Gradient is taken with respect to the
    log-emissions as given (no renormalization is assumed).
    """
    values = ad.as_tensor(values)
    weights = np.ones(len(spans)) if weights is None else np.asarray(weights, dtype=np.float64)
    total, grad = 0.0, np.zeros(values.shape)
    for (start, stop), target, w in zip(spans, targets, weights):
        _check_target(target, stop - start)
        nll, g = _nll_and_grad(values.data[start:stop], target)
        total += w * nll
        grad[start:stop] += w * g
    return ad.record("ctc_loss", (values,), np.array(total), lambda g: (g * grad,))


def ctc_loss(emissions, target):
    """Negative log-likelihood of ``target`` (emission indices, no blanks) under the lattice.

    Raises :class:`InfeasibleTarget` when the lattice is too short.
    """
    if emissions.space != LOG_POSTERIOR:
        raise ValueError("ctc_loss expects log-posterior emissions")
    return ctc_loss_batch(emissions.values, [(0, emissions.num_frames)], [list(target)])


def collapse(labels, blank=BLANK):
    """Merge adjacent repeats, then drop blanks."""
    out, prev = [], None
    for k in labels:
        k = int(k)
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return out


def best_path_decode(emissions):
    """Greedy CTC decode: framewise argmax, merge repeats, remove blanks."""
    return collapse(np.argmax(emissions.values.data, axis=1))


@dataclass
class FrameRecord:
    frame: int
    phone: int
    phoneme: int
    position: int
    log_score: float


@dataclass
class AlignmentPath:
    """Joint phone/phoneme framewise labeling from forced alignment.

    ``phone``/``phoneme`` are emission indices (0 = blank); ``position`` is
    the index of the aligned target token or -1 on blank frames.
    ``token_phones`` has one phone per target token (the most frequent phone
    over the token's frames, earliest on ties).
    """

    records: list
    score: float
    target: list
    phone_symbols: tuple
    phoneme_symbols: tuple
    token_phones: list = field(default_factory=list)

    def __post_init__(self):
        if not self.token_phones:
            self.token_phones = _token_phones(self.records, len(self.target))

    @property
    def phone_track(self):
        return [r.phone for r in self.records]

    @property
    def phoneme_track(self):
        return [r.phoneme for r in self.records]

    @property
    def collapsed_phonemes(self):
        """Phoneme of every target token, in order (reproduces the target)."""
        out, last = [], -1
        for r in self.records:
            if r.position >= 0 and r.position != last:
                out.append(r.phoneme)
                last = r.position
        return out

    def phone_string(self):
        return [self.phone_symbols[k - 1] for k in self.token_phones]

    def phoneme_string(self):
        return [self.phoneme_symbols[k - 1] for k in self.collapsed_phonemes]


def _token_phones(records, num_tokens):
    per_token = [[] for _ in range(num_tokens)]
    for r in records:
        if r.position >= 0:
            per_token[r.position].append(r.phone)
    out = []
    for phones in per_token:
        counts = Counter(phones)
        best = max(counts.values())
        out.append(next(p for p in phones if counts[p] == best))
    return out


def viterbi(logp, target):
    """Best CTC alignment of ``target``; returns (score, framewise extended states).

    Ties prefer the lowest extended-state index.
    """
    target = np.asarray(target, dtype=np.intp)
    _check_target(target, logp.shape[0])
    ext, skip = _extend(target)
    T, L = logp.shape[0], len(ext)
    delta = np.full((T, L), -np.inf)
    back = np.zeros((T, L), dtype=np.intp)
    delta[0, 0] = logp[0, ext[0]]
    delta[0, 1] = logp[0, ext[1]]
    idx = np.arange(L)
    for t in range(1, T):
        prev = delta[t - 1]
        cand = np.full((3, L), -np.inf)
        cand[0, 2:] = np.where(skip[2:], prev[:-2], -np.inf)
        cand[1, 1:] = prev[:-1]
        cand[2] = prev
        choice = np.argmax(cand, axis=0)
        choice[np.isneginf(cand.max(axis=0))] = 2
        back[t] = idx - 2 + choice
        delta[t] = cand[choice, idx] + logp[t, ext]
    last = L - 2 if delta[-1, L - 2] >= delta[-1, L - 1] else L - 1
    states = [last]
    for t in range(T - 1, 0, -1):
        states.append(back[t, states[-1]])
    states.reverse()
    return float(delta[-1, last]), np.array(states), ext


def forced_align(phone_emissions, graph, target, open_phones=False, track_emissions=None):
    """Viterbi-align ``target`` to the composed lattice and recover the phone track.

    On every non-blank frame the phone is the argmax over phones of
    (phone log-posterior + log arc weight into the aligned phoneme), lowest
    phone index on ties.  With ``open_phones`` the phone is instead the
    argmax of the phone posterior over all non-blank phones, so phones the
    language does not map can surface; ``track_emissions`` (e.g. an unmasked
    phone lattice) then supplies that posterior.
    """
    phoneme_emissions = compose(phone_emissions, graph)
    logp_m = phoneme_emissions.values.data
    logp_n = phone_emissions.values.data
    if open_phones and track_emissions is not None:
        logp_n = track_emissions.values.data
    score, states, ext = viterbi(logp_m, target)
    logw = log_weights(graph).data
    records = []
    for t, s in enumerate(states):
        m = int(ext[s])
        if m == BLANK:
            records.append(FrameRecord(t, BLANK, BLANK, -1, float(logp_m[t, BLANK])))
            continue
        if open_phones:
            n = 1 + int(np.argmax(logp_n[t, 1:]))
        else:
            into = graph.dst == m
            scores = logp_n[t, graph.src[into]] + logw[into]
            best = np.flatnonzero(scores == scores.max())
            n = int(np.min(graph.src[into][best]))
        records.append(FrameRecord(t, n, m, s // 2, float(logp_m[t, m])))
    return AlignmentPath(records, score, [int(k) for k in target], graph.inventory.symbols, graph.phonemes)
