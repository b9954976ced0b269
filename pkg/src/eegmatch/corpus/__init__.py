from .broderick import discover, load_broderick, load_trial
from .store import (
    corpus_fingerprint,
    load_corpus,
    load_meta,
    load_record,
    load_reports,
    save_corpus,
    save_record,
)
from .synthetic import iter_synthetic_trials, synthesize_corpus
from .types import (
    AUDIO_RATE_HZ,
    EEG_RATE_HZ,
    FEATURE_RATE_HZ,
    N_EEG_CHANNELS,
    RawTrial,
    SentenceAnnotation,
    SentenceRecord,
    SyntheticSpec,
    WordSpan,
)

__all__ = [
    "AUDIO_RATE_HZ",
    "EEG_RATE_HZ",
    "FEATURE_RATE_HZ",
    "N_EEG_CHANNELS",
    "RawTrial",
    "SentenceAnnotation",
    "SentenceRecord",
    "SyntheticSpec",
    "WordSpan",
    "corpus_fingerprint",
    "discover",
    "iter_synthetic_trials",
    "load_broderick",
    "load_corpus",
    "load_meta",
    "load_record",
    "load_reports",
    "load_trial",
    "save_corpus",
    "save_record",
    "synthesize_corpus",
]
