"""Sentence-level match-mismatch training and evaluation.

A paired example couples one sentence's EEG with its own spectrogram
(matched) and with another sentence from the same trial (mismatched).
Mismatch partners are assigned along small cycles, which keeps the
marginal distribution uniform over the other sentences while letting
batches stay closed under the partner relation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import torch

from .corpus import SentenceRecord
from .encoder import (
    SIMILARITIES,
    BaselineModel,
    EncoderConfig,
    MatchMismatchModel,
    StreamBatch,
    pooling_matrix,
    save_checkpoint,
)
from .segmentation import (
    random_boundaries,
    random_count_boundaries,
    skip_boundaries,
)
from .validation import check_in, check_int

STRATEGIES = ("random_same_trial", "next_sentence")
BOUNDARY_MODES = ("annotated", "random_fixed", "random_count", "skip")
MODELS = ("proposed", "baseline")
LOSS_EPS = 1e-7


@dataclass(frozen=True)
class PairedExample:
    """Indices into a record list: the sentence and its mismatch partner."""

    record: int
    mismatch: int


@dataclass(frozen=True)
class FoldSplit:
    train_subjects: tuple
    test_subjects: tuple


@dataclass(frozen=True)
class TrainConfig:
    model: str = "proposed"
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    similarity: str = "manhattan"
    strategy: str = "random_same_trial"
    boundary_mode: str = "annotated"
    boundary_param: object = None
    seed: int = 0
    encoder: Optional[dict] = None

    def validate(self) -> "TrainConfig":
        check_in(self.model, MODELS, name="model")
        check_int(self.epochs, name="epochs", minimum=1)
        check_int(self.batch_size, name="batch_size", minimum=1)
        check_int(self.seed, name="seed", minimum=0)
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must not be negative, got {self.weight_decay}")
        check_in(self.similarity, SIMILARITIES, name="similarity")
        check_in(self.strategy, STRATEGIES, name="strategy")
        _check_boundary_args(self.boundary_mode, self.boundary_param)
        if self.model == "baseline" and self.boundary_mode != "annotated":
            raise ValueError(
                "the baseline model does not pool over word boundaries; "
                "boundary modes other than annotated are meaningless for it"
            )
        if self.encoder is not None:
            allowed = set(EncoderConfig.__dataclass_fields__) - {"in_channels"}
            unknown = set(self.encoder) - allowed
            if unknown:
                raise ValueError(f"unknown encoder fields: {sorted(unknown)}")
        return self

    def snapshot(self) -> dict:
        param = self.boundary_param
        if isinstance(param, tuple):
            param = list(param)
        return {
            "model": self.model,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "similarity": self.similarity,
            "strategy": self.strategy,
            "boundary_mode": self.boundary_mode,
            "boundary_param": param,
            "seed": self.seed,
            "encoder": dict(self.encoder) if self.encoder else None,
        }


@dataclass
class FoldResult:
    fold_index: int
    train_subjects: tuple
    test_subjects: tuple
    seed: int
    config: dict
    epoch_losses: list = field(default_factory=list)
    epoch_accuracies: list = field(default_factory=list)
    accuracy: float = 0.0
    per_subject: dict = field(default_factory=dict)
    n_train_pairs: int = 0
    n_test_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "fold_index": self.fold_index,
            "train_subjects": list(self.train_subjects),
            "test_subjects": list(self.test_subjects),
            "seed": self.seed,
            "config": self.config,
            "epoch_losses": list(self.epoch_losses),
            "epoch_accuracies": list(self.epoch_accuracies),
            "accuracy": self.accuracy,
            "per_subject": dict(self.per_subject),
            "n_train_pairs": self.n_train_pairs,
            "n_test_pairs": self.n_test_pairs,
        }


def _check_boundary_args(mode: str, param) -> None:
    check_in(mode, BOUNDARY_MODES, name="boundary_mode")
    if mode == "annotated":
        if param is not None:
            raise ValueError("annotated boundaries take no parameter")
    elif mode == "random_fixed":
        check_int(param, name="boundary_param", minimum=1)
    elif mode == "random_count":
        if not (isinstance(param, (tuple, list)) and len(param) == 2):
            raise ValueError("random_count needs a (lo, hi) word-count range")
        lo, hi = (check_int(v, name="boundary_param", minimum=1) for v in param)
        if hi < lo:
            raise ValueError(f"boundary_param: lo must not exceed hi, got ({lo}, {hi})")
    else:
        check_int(param, name="boundary_param", minimum=2)


def _subject_entropy(subject_id: str) -> int:
    digest = hashlib.blake2s(subject_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def apply_boundary_mode(records: Sequence[SentenceRecord], mode: str, param,
                        *, seed: int):
    """Replace each record's pooled-grid word spans per the ablation mode.

    Random modes draw one stream per sentence, keyed by subject, trial and
    sentence index, so a sentence's spans do not depend on which other
    records are present. Requested word counts are capped at the pooled
    length, where spans cannot be narrower than one step.
    """
    _check_boundary_args(mode, param)
    if mode == "annotated":
        return list(records)
    out = []
    for record in records:
        pooled_len = math.ceil(record.eeg_feat.shape[1] / 3)
        if mode == "skip":
            spans = skip_boundaries(record.word_bounds_feat, param)
        else:
            rng = np.random.default_rng(
                [seed, _subject_entropy(record.subject_id), record.trial_id,
                 record.sentence_index])
            if mode == "random_fixed":
                spans = random_boundaries(pooled_len, min(param, pooled_len),
                                          seed=rng)
            else:
                lo, hi = param
                hi = min(hi, pooled_len)
                spans = random_count_boundaries(pooled_len, (min(lo, hi), hi),
                                                seed=rng)
        out.append(replace(record, word_bounds_feat=list(spans)))
    return out


def _cycle_sizes(n: int):
    # fours, with the remainder absorbed as a single block of 5, 2 or 3
    if n < 2:
        raise ValueError(
            f"a trial needs at least 2 sentences to draw mismatches, got {n}"
        )
    blocks, remainder = divmod(n, 4)
    if remainder == 0:
        return [4] * blocks
    if remainder == 1:
        return [4] * (blocks - 1) + [5]
    return [4] * blocks + [remainder]


def build_pairs(records: Sequence[SentenceRecord], strategy: str, *, seed):
    """Assign each sentence a same-trial mismatch partner.

    ``random_same_trial`` draws seeded random cycles, giving every other
    sentence of the trial equal probability of being the partner;
    ``next_sentence`` walks the trial in sentence order, wrapping at the
    end.
    """
    check_in(strategy, STRATEGIES, name="strategy")
    groups = {}
    for index, record in enumerate(records):
        groups.setdefault((record.subject_id, record.trial_id), []).append(index)
    rng = np.random.default_rng(seed)
    pairs = []
    for key in sorted(groups):
        group = sorted(groups[key], key=lambda i: records[i].sentence_index)
        n = len(group)
        if n < 2:
            raise ValueError(
                f"trial {key[1]} of subject {key[0]} has a single sentence; "
                "no within-trial mismatch exists"
            )
        if strategy == "next_sentence":
            order = np.arange(n)
            sizes = [n]
        else:
            order = rng.permutation(n)
            sizes = _cycle_sizes(n)
        pos = 0
        for size in sizes:
            block = order[pos:pos + size]
            for i, p in enumerate(block):
                partner = block[(i + 1) % size]
                pairs.append(PairedExample(group[int(p)], group[int(partner)]))
            pos += size
    return pairs


def mismatch_components(pairs: Sequence[PairedExample]):
    """Group pair indices whose records are linked by the partner relation."""
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for pair in pairs:
        a, b = find(pair.record), find(pair.mismatch)
        if a != b:
            parent[b] = a
    components = {}
    for index, pair in enumerate(pairs):
        components.setdefault(find(pair.record), []).append(index)
    return [components[root] for root in
            sorted(components, key=lambda r: components[r][0])]


def batch_compose(pairs: Sequence[PairedExample], batch_size: int, *, seed):
    """Pack partner-closed components into batches of at most `batch_size`.

    Components are shuffled, then placed first-fit; a component larger
    than the batch size becomes its own oversized batch.
    """
    check_int(batch_size, name="batch_size", minimum=1)
    components = mismatch_components(pairs)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(components))
    batches = []
    for comp_index in order:
        component = components[int(comp_index)]
        if len(component) > batch_size:
            batches.append(list(component))
            continue
        for batch in batches:
            if len(batch) + len(component) <= batch_size:
                batch.extend(component)
                break
        else:
            batches.append(list(component))
    return batches


def _stream(arrays, spans_list, dtype):
    lengths = [a.shape[1] for a in arrays]
    max_len = max(lengths)
    feats = torch.zeros((len(arrays), arrays[0].shape[0], max_len), dtype=dtype)
    for i, array in enumerate(arrays):
        feats[i, :, : array.shape[1]] = torch.as_tensor(array, dtype=dtype)
    pooled = [math.ceil(length / 3) for length in lengths]
    pool = pooling_matrix(spans_list, pooled,
                          max_length=math.ceil(max_len / 3), dtype=dtype)
    counts = torch.as_tensor([len(s) for s in spans_list])
    return StreamBatch(feats, pool, counts, torch.as_tensor(lengths))


def make_batch(records: Sequence[SentenceRecord], pairs: Sequence[PairedExample],
               indices: Sequence[int], *, dtype=torch.float32):
    """Tensors for one batch: EEG, matched mel, mismatched mel streams."""
    own = [records[pairs[i].record] for i in indices]
    other = [records[pairs[i].mismatch] for i in indices]
    response = _stream([r.eeg_feat for r in own],
                       [r.word_bounds_feat for r in own], dtype)
    matched = _stream([r.mel_feat for r in own],
                      [r.word_bounds_feat for r in own], dtype)
    mismatched = _stream([r.mel_feat for r in other],
                         [r.word_bounds_feat for r in other], dtype)
    return response, matched, mismatched


def bce_loss(d_plus: torch.Tensor, d_minus: torch.Tensor) -> torch.Tensor:
    """Mean of ``-log d+ - log(1 - d-)``, clamped away from log(0)."""
    return -(torch.log(d_plus.clamp(min=LOSS_EPS))
             + torch.log((1.0 - d_minus).clamp(min=LOSS_EPS))).mean()


def evaluate(model: MatchMismatchModel, records, pairs, *, batch_size: int = 32):
    """Accuracy (percent) of ``d+ > d-``; ties count as errors.

    Returns the overall accuracy and a per-subject breakdown.
    """
    if not pairs:
        raise ValueError("no pairs to evaluate")
    model.eval()
    correct = np.zeros(len(pairs), dtype=bool)
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            indices = range(start, min(start + batch_size, len(pairs)))
            response, matched, mismatched = make_batch(records, pairs, indices)
            d_plus, d_minus = model.score_pairs(response, matched, mismatched)
            correct[start : start + len(indices)] = (d_plus > d_minus).numpy()
    subjects = np.array([records[pair.record].subject_id for pair in pairs])
    per_subject = {subject: float(100.0 * correct[subjects == subject].mean())
                   for subject in sorted(set(subjects))}
    return float(100.0 * correct.mean()), per_subject


def make_folds(subjects: Iterable[str], n_folds: int = 3):
    """Split subjects into cross-validation folds by sorted order.

    Fold sizes differ by at most one, with earlier folds taking the
    larger share.
    """
    unique = sorted(set(subjects))
    check_int(n_folds, name="n_folds", minimum=2, maximum=len(unique))
    base, extra = divmod(len(unique), n_folds)
    splits = []
    start = 0
    for i in range(n_folds):
        size = base + (1 if i < extra else 0)
        test = tuple(unique[start : start + size])
        train = tuple(s for s in unique if s not in test)
        splits.append(FoldSplit(train_subjects=train, test_subjects=test))
        start += size
    return splits


def _encoder_config(n_channels: int, overrides: Optional[dict]) -> EncoderConfig:
    return EncoderConfig(in_channels=n_channels, **(overrides or {})).validate()


def build_model(records: Sequence[SentenceRecord], config: TrainConfig):
    response = _encoder_config(records[0].eeg_feat.shape[0], config.encoder)
    stimulus = _encoder_config(records[0].mel_feat.shape[0], config.encoder)
    if config.model == "baseline":
        return BaselineModel(response, stimulus)
    return MatchMismatchModel(response, stimulus, similarity=config.similarity)


def train_epochs(model, train_records: Sequence[SentenceRecord],
                 config: TrainConfig, *, fold_index: int = 0, on_epoch=None):
    """Run the epoch loop on prepared records; returns per-epoch mean losses.

    `train_records` must already carry the run's boundary transform.
    `on_epoch(epoch, n_pairs, mean_loss)` fires after each epoch's
    optimizer steps; it may evaluate the model without touching the
    training RNG streams (pair order is seeded per epoch, not drawn from
    shared state).
    """
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                                 weight_decay=config.weight_decay)
    epoch_losses = []
    for epoch in range(config.epochs):
        pairs = build_pairs(train_records, config.strategy,
                            seed=[config.seed, fold_index, epoch])
        batches = batch_compose(pairs, config.batch_size,
                                seed=[config.seed, fold_index, epoch, 1])
        model.train()
        losses = []
        for batch in batches:
            response, matched, mismatched = make_batch(train_records, pairs, batch)
            d_plus, d_minus = model.score_pairs(response, matched, mismatched)
            loss = bce_loss(d_plus, d_minus)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        epoch_losses.append(float(np.mean(losses)))
        if on_epoch is not None:
            on_epoch(epoch, len(pairs), epoch_losses[-1])
    return epoch_losses


def run_fold(records: Sequence[SentenceRecord], split: FoldSplit,
             config: TrainConfig, *, fold_index: int = 0,
             checkpoint_dir=None, log=None) -> FoldResult:
    """Train on the split's train subjects and track test accuracy per epoch.

    With `checkpoint_dir` set, the model is checkpointed after every epoch.
    """
    config.validate()
    train_set = set(split.train_subjects)
    test_set = set(split.test_subjects)
    train_records = [r for r in records if r.subject_id in train_set]
    test_records = [r for r in records if r.subject_id in test_set]
    if not train_records or not test_records:
        raise ValueError("both fold sides need at least one subject's records")

    train_records = apply_boundary_mode(train_records, config.boundary_mode,
                                        config.boundary_param, seed=config.seed)
    test_records = apply_boundary_mode(test_records, config.boundary_mode,
                                       config.boundary_param, seed=config.seed)

    torch.manual_seed(config.seed)
    model = build_model(train_records, config)
    test_pairs = build_pairs(test_records, config.strategy,
                             seed=[config.seed, fold_index, 2**32 - 1])

    result = FoldResult(fold_index=fold_index,
                        train_subjects=split.train_subjects,
                        test_subjects=split.test_subjects,
                        seed=config.seed, config=config.snapshot(),
                        n_test_pairs=len(test_pairs))

    def on_epoch(epoch, n_pairs, mean_loss):
        accuracy, per_subject = evaluate(model, test_records, test_pairs,
                                         batch_size=config.batch_size)
        result.n_train_pairs = n_pairs
        result.epoch_losses.append(mean_loss)
        result.epoch_accuracies.append(accuracy)
        result.accuracy = accuracy
        result.per_subject = per_subject
        if log is not None:
            log(f"fold {fold_index} epoch {epoch + 1}/{config.epochs}: "
                f"loss {mean_loss:.4f}, test accuracy {accuracy:.2f}%")
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_checkpoint(path / f"fold{fold_index}_epoch{epoch + 1:02d}.pt",
                            model, extra={"fold_index": fold_index,
                                          "epoch": epoch + 1,
                                          "config": config.snapshot(),
                                          "accuracy": accuracy})

    train_epochs(model, train_records, config, fold_index=fold_index,
                 on_epoch=on_epoch)
    return result
