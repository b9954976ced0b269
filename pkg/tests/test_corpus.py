import json

import numpy as np
import pytest

from eegmatch.corpus import (
    RawTrial,
    SentenceAnnotation,
    SentenceRecord,
    SyntheticSpec,
    WordSpan,
    corpus_fingerprint,
    load_broderick,
    load_corpus,
    load_record,
    load_trial,
    save_corpus,
    save_record,
    synthesize_corpus,
)
from eegmatch.errors import DataError

TINY = SyntheticSpec(n_subjects=2, n_trials=2, sentences_per_trial=4,
                     words_per_sentence=(2, 3), word_len_frames=(6, 9),
                     coupling=1.0, noise_sigma=0.1, seed=7)


@pytest.fixture(scope="module")
def tiny_corpus():
    return synthesize_corpus(TINY)


class TestSyntheticSpec:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SyntheticSpec(coupling=1.5).validate()
        with pytest.raises(ValueError):
            SyntheticSpec(noise_sigma=-0.1).validate()
        with pytest.raises(ValueError):
            SyntheticSpec(coupling=0.0, noise_sigma=0.0).validate()
        with pytest.raises(ValueError):
            SyntheticSpec(words_per_sentence=(5, 2)).validate()


class TestSynthesize:
    def test_structure(self, tiny_corpus):
        assert len(tiny_corpus) == TINY.n_subjects * TINY.n_trials
        for trial in tiny_corpus:
            trial.validate()
            assert trial.eeg.shape[0] == 128
            assert len(trial.sentences) == TINY.sentences_per_trial
            assert trial.eeg_rate_hz == 512.0 and trial.audio_rate_hz == 16000.0

    def test_bit_identical_for_same_seed(self, tiny_corpus):
        again = synthesize_corpus(TINY)
        for a, b in zip(tiny_corpus, again):
            assert (a.subject_id, a.trial_id) == (b.subject_id, b.trial_id)
            assert np.array_equal(a.eeg, b.eeg)
            assert np.array_equal(a.audio, b.audio)

    def test_seed_changes_content(self, tiny_corpus):
        other = synthesize_corpus(SyntheticSpec(**{**TINY.__dict__, "seed": 8}))
        assert not np.array_equal(other[0].eeg, tiny_corpus[0].eeg)
        assert not np.array_equal(other[0].audio, tiny_corpus[0].audio)

    def test_audio_shared_across_subjects(self, tiny_corpus):
        by_key = {(t.subject_id, t.trial_id): t for t in tiny_corpus}
        a = by_key[("sub00", 0)]
        b = by_key[("sub01", 0)]
        assert np.array_equal(a.audio, b.audio)
        assert not np.array_equal(a.eeg, b.eeg)

    def test_zero_noise_is_deterministic_transform(self):
        spec = SyntheticSpec(**{**TINY.__dict__, "noise_sigma": 0.0})
        trials = synthesize_corpus(spec)
        e0, e1 = trials[0].eeg, trials[1].eeg
        # both subjects see the same source up to fixed channel gains
        for c in (0, 31, 64, 100):
            r = np.corrcoef(e0[c], e1[c])[0, 1]
            assert r > 0.999999

    def test_coupling_controls_stimulus_dependence(self, tiny_corpus):
        def envelope_correlation(trial):
            power = (trial.eeg ** 2).mean(axis=0)
            eeg_env = power.reshape(-1, 8).mean(axis=1)
            audio_env = (trial.audio ** 2).reshape(-1, 250).mean(axis=1)
            return np.corrcoef(eeg_env, audio_env)[0, 1]

        coupled = envelope_correlation(tiny_corpus[0])
        spec0 = SyntheticSpec(**{**TINY.__dict__, "coupling": 0.0})
        uncoupled = envelope_correlation(synthesize_corpus(spec0)[0])
        assert coupled > 0.5
        assert abs(uncoupled) < 0.15


def write_layout(root, trials, audio_kind="npy", eeg_kind="npy"):
    for trial in trials:
        eeg_dir = root / "eeg" / trial.subject_id
        eeg_dir.mkdir(parents=True, exist_ok=True)
        if eeg_kind == "npy":
            np.save(eeg_dir / f"trial_{trial.trial_id:02d}.npy", trial.eeg)
        else:
            from scipy.io import savemat
            savemat(eeg_dir / f"trial_{trial.trial_id:02d}.mat",
                    {"eegData": trial.eeg.T, "fs": 512.0})
        audio_dir = root / "audio"
        audio_dir.mkdir(exist_ok=True)
        if audio_kind == "npy":
            np.save(audio_dir / f"trial_{trial.trial_id:02d}.npy", trial.audio)
        else:
            from scipy.io import wavfile
            pcm = np.clip(trial.audio, -1, 1)
            wavfile.write(audio_dir / f"trial_{trial.trial_id:02d}.wav", 16000,
                          (pcm * 32767).astype(np.int16))
        align_dir = root / "alignments"
        align_dir.mkdir(exist_ok=True)
        payload = {"sentences": [
            {"start": s.start_s, "end": s.end_s,
             "words": [{"start": w.start_s, "end": w.end_s, "token": w.token}
                       for w in s.words]}
            for s in trial.sentences
        ]}
        (align_dir / f"trial_{trial.trial_id:02d}.json").write_text(json.dumps(payload))


class TestLoader:
    def test_round_trip_npy(self, tiny_corpus, tmp_path):
        write_layout(tmp_path, tiny_corpus)
        loaded = load_broderick(tmp_path)
        assert len(loaded) == len(tiny_corpus)
        by_key = {(t.subject_id, t.trial_id): t for t in loaded}
        for trial in tiny_corpus:
            twin = by_key[(trial.subject_id, trial.trial_id)]
            assert np.allclose(twin.eeg, trial.eeg)
            assert np.allclose(twin.audio, trial.audio)
            assert len(twin.sentences) == len(trial.sentences)

    def test_mat_and_wav_variants(self, tiny_corpus, tmp_path):
        write_layout(tmp_path, tiny_corpus[:1], audio_kind="wav", eeg_kind="mat")
        trial = load_trial(tmp_path, tiny_corpus[0].subject_id, 0)
        assert np.allclose(trial.eeg, tiny_corpus[0].eeg)
        assert np.allclose(trial.audio, tiny_corpus[0].audio, atol=2e-4)

    def test_missing_eeg_file(self, tiny_corpus, tmp_path):
        write_layout(tmp_path, tiny_corpus)
        (tmp_path / "eeg" / "sub00" / "trial_00.npy").unlink()
        with pytest.raises(DataError):
            load_trial(tmp_path, "sub00", 0)

    def test_truncated_audio_is_misaligned(self, tiny_corpus, tmp_path):
        write_layout(tmp_path, tiny_corpus[:1])
        trial = tiny_corpus[0]
        np.save(tmp_path / "audio" / "trial_00.npy", trial.audio[: len(trial.audio) // 2])
        with pytest.raises(DataError):
            load_trial(tmp_path, trial.subject_id, 0)

    def test_word_outside_sentence_rejected(self, tiny_corpus, tmp_path):
        write_layout(tmp_path, tiny_corpus[:1])
        path = tmp_path / "alignments" / "trial_00.json"
        payload = json.loads(path.read_text())
        payload["sentences"][0]["words"][0]["start"] = \
            payload["sentences"][0]["start"] - 0.5
        path.write_text(json.dumps(payload))
        with pytest.raises(DataError):
            load_trial(tmp_path, tiny_corpus[0].subject_id, 0)

    def test_not_a_dataset(self, tmp_path):
        with pytest.raises(DataError):
            load_broderick(tmp_path)


def make_record(subject="sub00", trial=0, index=0, n_frames=30, seed=0):
    rng = np.random.default_rng(seed)
    return SentenceRecord(
        subject_id=subject, trial_id=trial, sentence_index=index,
        eeg_feat=rng.standard_normal((128, n_frames)).astype(np.float32),
        mel_feat=rng.standard_normal((28, n_frames)).astype(np.float32),
        word_bounds_64=[(0, 15), (15, n_frames)],
        word_bounds_feat=[(0, 5), (5, n_frames // 3)],
    )


def fake_report(subject="sub00", trial=0):
    from eegmatch.eeg_preproc import PreprocReport
    return PreprocReport(subject_id=subject, trial_id=trial,
                         channel_variance=[1.0] * 128,
                         channel_kurtosis=[0.0] * 128,
                         bad_channels=[])


class TestStore:
    def test_record_round_trip(self, tmp_path):
        record = make_record()
        save_record(tmp_path, record)
        twin = load_record(tmp_path / "sub00__t00__s000.npz")
        assert twin.key() == record.key()
        assert np.array_equal(twin.eeg_feat, record.eeg_feat)
        assert np.array_equal(twin.mel_feat, record.mel_feat)
        assert twin.word_bounds_64 == record.word_bounds_64
        assert twin.word_bounds_feat == record.word_bounds_feat

    def test_corpus_round_trip_and_fingerprint(self, tmp_path):
        records = [make_record(index=i, seed=i) for i in range(3)]
        results = [(records, fake_report())]
        meta1 = save_corpus(tmp_path / "a", iter(results), {"kind": "test"})
        meta2 = save_corpus(tmp_path / "b", iter(results), {"kind": "test"})
        assert meta1["fingerprint"] == meta2["fingerprint"]
        assert meta1["n_records"] == 3
        loaded = load_corpus(tmp_path / "a")
        assert [r.key() for r in loaded] == [r.key() for r in records]
        assert corpus_fingerprint(tmp_path / "a") == meta1["fingerprint"]

    def test_fingerprint_tracks_content(self, tmp_path):
        save_corpus(tmp_path / "a", [([make_record(seed=1)], fake_report())], {})
        save_corpus(tmp_path / "b", [([make_record(seed=2)], fake_report())], {})
        assert corpus_fingerprint(tmp_path / "a") != corpus_fingerprint(tmp_path / "b")

    def test_load_rejects_missing_meta(self, tmp_path):
        with pytest.raises(DataError):
            load_corpus(tmp_path)

    def test_load_rejects_record_count_mismatch(self, tmp_path):
        save_corpus(tmp_path, [([make_record()], fake_report())], {})
        (tmp_path / "records" / "sub00__t00__s000.npz").unlink()
        with pytest.raises(DataError):
            load_corpus(tmp_path)

    def test_load_rejects_corrupt_record(self, tmp_path):
        save_corpus(tmp_path, [([make_record()], fake_report())], {})
        path = tmp_path / "records" / "sub00__t00__s000.npz"
        path.write_bytes(path.read_bytes()[:100])
        with pytest.raises(DataError):
            load_record(path)
