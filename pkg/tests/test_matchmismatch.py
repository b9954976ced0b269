import math
from collections import Counter

import numpy as np
import pytest
import torch

from eegmatch.matchmismatch import (
    FoldSplit,
    PairedExample,
    TrainConfig,
    apply_boundary_mode,
    batch_compose,
    bce_loss,
    build_pairs,
    evaluate,
    make_batch,
    make_folds,
    mismatch_components,
    run_fold,
)
from eegmatch.corpus import SentenceRecord
from eegmatch.segmentation import random_boundaries

TINY_ENCODER = {"conv1_kernels": 2, "conv1_width": 3, "conv2_kernels": 2,
                "conv2_height": 4, "conv2_width": 3, "lstm_hidden": 4,
                "dropout": 0.0}


def make_record(rng, subject, trial, sentence, n_frames=24, n_words=3,
                n_eeg=6, n_mel=4):
    pooled = math.ceil(n_frames / 3)
    bounds_feat = random_boundaries(pooled, n_words, seed=rng)
    bounds_64 = [(3 * a, 3 * b) for a, b in bounds_feat]
    return SentenceRecord(
        subject_id=subject, trial_id=trial, sentence_index=sentence,
        eeg_feat=rng.standard_normal((n_eeg, n_frames)).astype(np.float32),
        mel_feat=rng.standard_normal((n_mel, n_frames)).astype(np.float32),
        word_bounds_64=bounds_64, word_bounds_feat=bounds_feat)


def small_corpus(rng, subjects=("s0", "s1"), trials=(0, 1), sentences=6):
    return [make_record(rng, subject, trial, index)
            for subject in subjects for trial in trials
            for index in range(sentences)]


def test_pairs_form_derangement_within_trials():
    rng = np.random.default_rng(0)
    records = small_corpus(rng, sentences=7)
    for strategy in ("random_same_trial", "next_sentence"):
        pairs = build_pairs(records, strategy, seed=5)
        assert len(pairs) == len(records)
        assert sorted(p.record for p in pairs) == list(range(len(records)))
        assert sorted(p.mismatch for p in pairs) == list(range(len(records)))
        for pair in pairs:
            own, other = records[pair.record], records[pair.mismatch]
            assert pair.record != pair.mismatch
            assert own.subject_id == other.subject_id
            assert own.trial_id == other.trial_id


def test_pairs_determinism_and_seed_sensitivity():
    rng = np.random.default_rng(1)
    records = small_corpus(rng, sentences=12)
    first = build_pairs(records, "random_same_trial", seed=3)
    again = build_pairs(records, "random_same_trial", seed=3)
    other = build_pairs(records, "random_same_trial", seed=4)
    assert first == again
    assert first != other


def test_next_sentence_partner_is_successor():
    rng = np.random.default_rng(2)
    records = small_corpus(rng, subjects=("s0",), trials=(0,), sentences=5)
    pairs = build_pairs(records, "next_sentence", seed=0)
    for pair in pairs:
        own, other = records[pair.record], records[pair.mismatch]
        assert other.sentence_index == (own.sentence_index + 1) % 5


def test_two_sentence_trial_pairs_mutually():
    rng = np.random.default_rng(3)
    records = small_corpus(rng, subjects=("s0",), trials=(0,), sentences=2)
    pairs = build_pairs(records, "random_same_trial", seed=0)
    assert {(p.record, p.mismatch) for p in pairs} == {(0, 1), (1, 0)}


def test_single_sentence_trial_rejected():
    rng = np.random.default_rng(4)
    records = small_corpus(rng, subjects=("s0",), trials=(0,), sentences=1)
    with pytest.raises(ValueError, match="single sentence"):
        build_pairs(records, "random_same_trial", seed=0)


def test_random_partner_marginal_is_uniform():
    rng = np.random.default_rng(5)
    records = small_corpus(rng, subjects=("s0",), trials=(0,), sentences=10)
    counts = Counter()
    draws = 1000
    for seed in range(draws):
        pairs = build_pairs(records, "random_same_trial", seed=seed)
        partner = next(p.mismatch for p in pairs if p.record == 0)
        counts[partner] += 1
    expected = draws / 9.0
    chi2 = sum((counts[t] - expected) ** 2 / expected for t in range(1, 10))
    # 99th percentile of chi-squared with 8 degrees of freedom
    assert chi2 < 20.09


def test_components_are_cycles():
    rng = np.random.default_rng(6)
    records = small_corpus(rng, subjects=("s0",), trials=(0,), sentences=11)
    pairs = build_pairs(records, "random_same_trial", seed=9)
    components = mismatch_components(pairs)
    assert sorted(len(c) for c in components) == [3, 4, 4]
    for component in components:
        members = {pairs[i].record for i in component}
        partners = {pairs[i].mismatch for i in component}
        assert members == partners


def test_batch_compose_packs_four_cycles_exactly():
    rng = np.random.default_rng(7)
    records = small_corpus(rng, subjects=("s0", "s1"), trials=(0, 1),
                           sentences=16)
    pairs = build_pairs(records, "random_same_trial", seed=2)
    assert len(pairs) == 64
    batches = batch_compose(pairs, 32, seed=0)
    assert sorted(len(b) for b in batches) == [32, 32]
    covered = sorted(i for batch in batches for i in batch)
    assert covered == list(range(64))


def test_batches_closed_under_partner_relation():
    rng = np.random.default_rng(8)
    records = small_corpus(rng, subjects=("s0", "s1", "s2"), trials=(0, 1),
                           sentences=9)
    pairs = build_pairs(records, "random_same_trial", seed=1)
    for batch in batch_compose(pairs, 32, seed=4):
        members = {pairs[i].record for i in batch}
        partners = {pairs[i].mismatch for i in batch}
        assert partners <= members


def test_oversized_component_stays_whole():
    rng = np.random.default_rng(9)
    records = small_corpus(rng, subjects=("s0",), trials=(0,), sentences=40)
    pairs = build_pairs(records, "next_sentence", seed=0)
    batches = batch_compose(pairs, 32, seed=0)
    assert [len(b) for b in batches] == [40]


def test_bce_loss_closed_forms():
    half = torch.tensor([0.5])
    assert float(bce_loss(half, half)) == pytest.approx(2.0 * math.log(2.0), abs=1e-7)
    zero = float(bce_loss(torch.tensor([1.0]), torch.tensor([0.0])))
    assert zero == pytest.approx(0.0, abs=1e-7)
    clamped = float(bce_loss(torch.tensor([1.0]), torch.tensor([1.0])))
    assert clamped == pytest.approx(-math.log(1e-7), rel=1e-6)
    mixed = float(bce_loss(torch.tensor([0.5, 1.0]), torch.tensor([0.5, 0.0])))
    assert mixed == pytest.approx(math.log(2.0), abs=1e-6)


def test_apply_boundary_mode_annotated_is_identity():
    rng = np.random.default_rng(10)
    records = small_corpus(rng)
    out = apply_boundary_mode(records, "annotated", None, seed=0)
    assert [r.word_bounds_feat for r in out] == [r.word_bounds_feat for r in records]


def test_apply_boundary_mode_random_fixed():
    rng = np.random.default_rng(11)
    records = small_corpus(rng)
    out = apply_boundary_mode(records, "random_fixed", 2, seed=1)
    for before, after in zip(records, out):
        pooled = math.ceil(before.eeg_feat.shape[1] / 3)
        assert len(after.word_bounds_feat) == 2
        assert after.word_bounds_feat[0][0] == 0
        assert after.word_bounds_feat[-1][1] == pooled
        assert before.word_bounds_64 == after.word_bounds_64
    again = apply_boundary_mode(records, "random_fixed", 2, seed=1)
    assert [r.word_bounds_feat for r in again] == [r.word_bounds_feat for r in out]
    reseeded = apply_boundary_mode(records, "random_fixed", 2, seed=2)
    assert [r.word_bounds_feat for r in reseeded] != [r.word_bounds_feat for r in out]


def test_apply_boundary_mode_independent_of_other_records():
    rng = np.random.default_rng(12)
    records = small_corpus(rng)
    full = apply_boundary_mode(records, "random_fixed", 3, seed=7)
    subset = apply_boundary_mode(records[5:9], "random_fixed", 3, seed=7)
    for a, b in zip(full[5:9], subset):
        assert a.word_bounds_feat == b.word_bounds_feat


def test_apply_boundary_mode_caps_word_count():
    rng = np.random.default_rng(13)
    record = make_record(rng, "s0", 0, 0, n_frames=12, n_words=2)
    out = apply_boundary_mode([record], "random_fixed", 50, seed=0)
    assert len(out[0].word_bounds_feat) == 4
    out = apply_boundary_mode([record], "random_count", (50, 60), seed=0)
    assert len(out[0].word_bounds_feat) == 4


def test_apply_boundary_mode_random_count_range():
    rng = np.random.default_rng(14)
    records = small_corpus(rng)
    out = apply_boundary_mode(records, "random_count", (1, 4), seed=3)
    counts = {len(r.word_bounds_feat) for r in out}
    assert counts <= {1, 2, 3, 4}
    assert len(counts) > 1


def test_apply_boundary_mode_skip():
    rng = np.random.default_rng(15)
    record = make_record(rng, "s0", 0, 0, n_frames=24, n_words=4)
    out = apply_boundary_mode([record], "skip", 2, seed=0)
    assert len(out[0].word_bounds_feat) == 2
    assert out[0].word_bounds_feat[0][0] == record.word_bounds_feat[0][0]
    assert out[0].word_bounds_feat[-1][1] == record.word_bounds_feat[-1][1]


def test_boundary_mode_validation():
    with pytest.raises(ValueError, match="no parameter"):
        apply_boundary_mode([], "annotated", 3, seed=0)
    with pytest.raises(ValueError, match="boundary_param"):
        apply_boundary_mode([], "random_fixed", 0, seed=0)
    with pytest.raises(ValueError, match="range"):
        apply_boundary_mode([], "random_count", 3, seed=0)
    with pytest.raises(ValueError, match="lo must not exceed"):
        apply_boundary_mode([], "random_count", (4, 2), seed=0)
    with pytest.raises(ValueError, match="boundary_mode"):
        apply_boundary_mode([], "shuffled", None, seed=0)


def test_make_batch_routes_partner_features():
    rng = np.random.default_rng(16)
    records = small_corpus(rng, subjects=("s0",), trials=(0,), sentences=4)
    pairs = build_pairs(records, "next_sentence", seed=0)
    response, matched, mismatched = make_batch(records, pairs, range(len(pairs)))
    for row, pair in enumerate(pairs):
        own, other = records[pair.record], records[pair.mismatch]
        t = own.eeg_feat.shape[1]
        np.testing.assert_array_equal(response.feats[row, :, :t].numpy(),
                                      own.eeg_feat)
        np.testing.assert_array_equal(matched.feats[row, :, :t].numpy(),
                                      own.mel_feat)
        np.testing.assert_array_equal(
            mismatched.feats[row, :, : other.mel_feat.shape[1]].numpy(),
            other.mel_feat)
        assert int(mismatched.word_counts[row]) == len(other.word_bounds_feat)


def test_make_folds_sizes_and_coverage():
    many = [f"sub{i:02d}" for i in range(19)]
    folds = make_folds(many, 3)
    assert [len(f.test_subjects) for f in folds] == [7, 6, 6]
    few = make_folds([f"s{i}" for i in range(10)], 3)
    assert [len(f.test_subjects) for f in few] == [4, 3, 3]
    seen = [s for f in few for s in f.test_subjects]
    assert sorted(seen) == sorted({f"s{i}" for i in range(10)})
    for fold in few:
        assert set(fold.train_subjects).isdisjoint(fold.test_subjects)
        assert len(fold.train_subjects) + len(fold.test_subjects) == 10


def test_make_folds_errors():
    with pytest.raises(ValueError):
        make_folds(["a", "b", "c"], 1)
    with pytest.raises(ValueError):
        make_folds(["a", "b"], 3)


class _StubModel:
    def __init__(self, d_plus, d_minus):
        self.d_plus = torch.as_tensor(d_plus, dtype=torch.float64)
        self.d_minus = torch.as_tensor(d_minus, dtype=torch.float64)
        self.offset = 0

    def eval(self):
        return self

    def score_pairs(self, response, matched, mismatched):
        n = response.feats.shape[0]
        sl = slice(self.offset, self.offset + n)
        self.offset += n
        return self.d_plus[sl], self.d_minus[sl]


def test_evaluate_counts_ties_as_errors():
    rng = np.random.default_rng(17)
    records = small_corpus(rng, subjects=("s0", "s1"), trials=(0,), sentences=2)
    pairs = build_pairs(records, "next_sentence", seed=0)
    assert len(pairs) == 4
    model = _StubModel([0.9, 0.5, 0.2, 0.8], [0.1, 0.5, 0.9, 0.2])
    accuracy, per_subject = evaluate(model, records, pairs, batch_size=3)
    assert accuracy == pytest.approx(50.0)
    assert per_subject == {"s0": pytest.approx(50.0), "s1": pytest.approx(50.0)}
    with pytest.raises(ValueError, match="no pairs"):
        evaluate(model, records, [], batch_size=3)


def test_train_config_validation():
    TrainConfig().validate()
    with pytest.raises(ValueError, match="similarity"):
        TrainConfig(similarity="dot").validate()
    with pytest.raises(ValueError, match="strategy"):
        TrainConfig(strategy="shuffle").validate()
    with pytest.raises(ValueError, match="learning_rate"):
        TrainConfig(learning_rate=0.0).validate()
    with pytest.raises(ValueError, match="unknown encoder fields"):
        TrainConfig(encoder={"in_channels": 4}).validate()
    with pytest.raises(ValueError, match="boundary_param"):
        TrainConfig(boundary_mode="skip", boundary_param=1).validate()


def test_run_fold_trains_and_is_deterministic(tmp_path):
    rng = np.random.default_rng(18)
    records = small_corpus(rng, subjects=("s0", "s1", "s2"), trials=(0,),
                           sentences=6)
    split = FoldSplit(train_subjects=("s0", "s1"), test_subjects=("s2",))
    config = TrainConfig(epochs=2, batch_size=8, seed=5, encoder=TINY_ENCODER)
    result = run_fold(records, split, config, fold_index=1,
                      checkpoint_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.glob("*.pt")) == [
        "fold1_epoch01.pt", "fold1_epoch02.pt"]
    assert len(result.epoch_losses) == 2
    assert len(result.epoch_accuracies) == 2
    assert result.accuracy == result.epoch_accuracies[-1]
    assert set(result.per_subject) == {"s2"}
    assert result.n_train_pairs == 12
    assert result.n_test_pairs == 6
    assert result.config["similarity"] == "manhattan"
    again = run_fold(records, split, config, fold_index=1)
    assert again.epoch_losses == result.epoch_losses
    assert again.epoch_accuracies == result.epoch_accuracies
    assert again.per_subject == result.per_subject


def test_run_fold_requires_records_on_both_sides():
    rng = np.random.default_rng(19)
    records = small_corpus(rng, subjects=("s0", "s1"), trials=(0,), sentences=4)
    split = FoldSplit(train_subjects=("s0", "s1"), test_subjects=("missing",))
    with pytest.raises(ValueError, match="both fold sides"):
        run_fold(records, split, TrainConfig(epochs=1, encoder=TINY_ENCODER))
