"""Fixed-length-window baseline on the shared 64 Hz feature grid.

Windows are cut inside sentences; the mismatched stimulus for a window
is the nearest non-overlapping later window of the same sentence,
wrapping to a non-overlapping earlier one when the sentence ends too
soon. Windows without any non-overlapping partner are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .eeg_preproc import FEATURE_RATE_HZ
from .encoder import save_checkpoint
from .matchmismatch import FoldResult, FoldSplit, TrainConfig, bce_loss, build_model
from .validation import check_int

EVAL_STEP_S = 0.5
TRAIN_OVERLAP = 0.9
WINDOW_CHOICES_S = (1.0, 3.0, 5.0)


@dataclass(frozen=True)
class WindowExample:
    """A matched EEG/speech window and its mismatched stimulus start."""

    record: int
    start: int
    mismatch_start: int


def window_starts(n_frames: int, window: int, step: int):
    check_int(window, name="window", minimum=1)
    check_int(step, name="step", minimum=1)
    return list(range(0, n_frames - window + 1, step))


def window_pairs(records, window: int, step: int):
    """Enumerate windows with a non-overlapping same-sentence partner."""
    examples = []
    for index, record in enumerate(records):
        starts = window_starts(record.eeg_feat.shape[1], window, step)
        for s in starts:
            later = [t for t in starts if t >= s + window]
            earlier = [t for t in starts if t + window <= s]
            if later:
                partner = later[0]
            elif earlier:
                partner = earlier[0]
            else:
                continue
            examples.append(WindowExample(index, s, partner))
    return examples


def _stack(records, examples: Sequence[WindowExample], window: int):
    eeg = torch.stack([
        torch.as_tensor(records[e.record].eeg_feat[:, e.start : e.start + window])
        for e in examples])
    matched = torch.stack([
        torch.as_tensor(records[e.record].mel_feat[:, e.start : e.start + window])
        for e in examples])
    mismatched = torch.stack([
        torch.as_tensor(records[e.record].mel_feat[
            :, e.mismatch_start : e.mismatch_start + window])
        for e in examples])
    return eeg, matched, mismatched


def _evaluate_windows(model, records, examples, window, batch_size):
    model.eval()
    correct = np.zeros(len(examples), dtype=bool)
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            eeg, matched, mismatched = _stack(records, chunk, window)
            p_plus = model.score(eeg, matched)
            p_minus = model.score(eeg, mismatched)
            correct[start : start + len(chunk)] = (p_plus > p_minus).numpy()
    subjects = np.array([records[e.record].subject_id for e in examples])
    per_subject = {subject: float(100.0 * correct[subjects == subject].mean())
                   for subject in sorted(set(subjects))}
    return float(100.0 * correct.mean()), per_subject


def run_fixed_window(records, split: FoldSplit, config: TrainConfig,
                     window_s: float, *, eval_step_s: float = EVAL_STEP_S,
                     fold_index: int = 0, checkpoint_dir=None,
                     log=None) -> FoldResult:
    """Train and evaluate the baseline on `window_s`-second windows."""
    config.validate()
    if config.model != "baseline":
        raise ValueError("fixed-window training runs the baseline model only")
    if window_s <= 0 or eval_step_s <= 0:
        raise ValueError("window and step must be positive durations")
    window = int(round(window_s * FEATURE_RATE_HZ))
    eval_step = int(round(eval_step_s * FEATURE_RATE_HZ))
    train_step = max(1, int(round(window * (1.0 - TRAIN_OVERLAP))))

    train_set = set(split.train_subjects)
    test_set = set(split.test_subjects)
    train_records = [r for r in records if r.subject_id in train_set]
    test_records = [r for r in records if r.subject_id in test_set]
    if not train_records or not test_records:
        raise ValueError("both fold sides need at least one subject's records")
    train_windows = window_pairs(train_records, window, train_step)
    test_windows = window_pairs(test_records, window, eval_step)
    if not train_windows or not test_windows:
        raise ValueError(
            f"no usable {window_s:g} s windows: every sentence is shorter "
            "than two windows"
        )

    torch.manual_seed(config.seed)
    model = build_model(train_records, config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                                 weight_decay=config.weight_decay)
    result = FoldResult(fold_index=fold_index,
                        train_subjects=split.train_subjects,
                        test_subjects=split.test_subjects,
                        seed=config.seed,
                        config={**config.snapshot(), "window_s": window_s,
                                "eval_step_s": eval_step_s},
                        n_train_pairs=len(train_windows),
                        n_test_pairs=len(test_windows))
    order_rng = np.random.default_rng([config.seed, fold_index])
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(train_windows))
        model.train()
        losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = [train_windows[int(i)] for i in order[start : start + config.batch_size]]
            eeg, matched, mismatched = _stack(train_records, chunk, window)
            loss = bce_loss(model.score(eeg, matched), model.score(eeg, mismatched))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        accuracy, per_subject = _evaluate_windows(model, test_records,
                                                  test_windows, window,
                                                  config.batch_size)
        result.epoch_losses.append(float(np.mean(losses)))
        result.epoch_accuracies.append(accuracy)
        result.accuracy = accuracy
        result.per_subject = per_subject
        if log is not None:
            log(f"fold {fold_index} epoch {epoch + 1}/{config.epochs}: "
                f"loss {result.epoch_losses[-1]:.4f}, "
                f"test accuracy {accuracy:.2f}%")
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_checkpoint(path / f"fold{fold_index}_epoch{epoch + 1:02d}.pt",
                            model, extra={"fold_index": fold_index,
                                          "epoch": epoch + 1,
                                          "config": result.config,
                                          "accuracy": accuracy})
    return result
