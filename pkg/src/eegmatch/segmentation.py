"""Word-boundary handling and boundary-aware pooling.

Spans are half-open frame intervals ``[start, end)`` over a feature
sequence. They are ordered and non-overlapping but not necessarily
contiguous; frames outside every span (pauses) are simply ignored by
pooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_array, check_int

#: ratio between the 64 Hz feature rate and the post-stride pooling rate
FEATURE_RATE_DIVISOR = 3


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_spans(spans, *, name="spans"):
    out = []
    prev_end = None
    for i, (start, end) in enumerate(spans):
        start, end = int(start), int(end)
        if start < 0:
            raise ValueError(f"{name}[{i}]: negative start {start}")
        if end <= start:
            raise ValueError(f"{name}[{i}]: empty span ({start}, {end})")
        if prev_end is not None and start < prev_end:
            raise ValueError(f"{name}[{i}]: overlaps previous span ending at {prev_end}")
        out.append((start, end))
        prev_end = end
    if not out:
        raise ValueError(f"{name}: at least one span required")
    return out


@dataclass(frozen=True)
class WordBoundaries:
    """Ordered word spans at a given frame rate."""

    spans: list
    rate_hz: float

    def validate(self, seq_len: int) -> "WordBoundaries":
        spans = _check_spans(self.spans)
        if spans[-1][1] > seq_len:
            raise ValueError(
                f"last span ends at {spans[-1][1]} but the sequence has {seq_len} frames"
            )
        return self

    def __len__(self):
        return len(self.spans)


def to_feature_rate(spans, feature_len: int | None = None):
    """Project 64 Hz word spans onto the 64/3 Hz pooled feature grid.

    Each span maps to ``(floor(start/3), max(start'+1, floor(end/3)))`` so
    no word collapses to an empty span. Collisions introduced by the
    rounding are repaired by advancing the start to the previous end,
    keeping the result ordered and non-overlapping.
    """
    spans = _check_spans(spans)
    out = []
    prev_end = 0
    for start, end in spans:
        start_f = start // FEATURE_RATE_DIVISOR
        if start_f < prev_end:
            start_f = prev_end
        end_f = max(start_f + 1, end // FEATURE_RATE_DIVISOR)
        out.append((start_f, end_f))
        prev_end = end_f
    if feature_len is not None and out[-1][1] > feature_len:
        raise ValueError(
            f"{len(spans)} words cannot be represented in {feature_len} pooled frames; "
            f"projected spans end at {out[-1][1]}"
        )
    return out


def word_pool(features, spans):
    """Average feature columns within each word span.

    `features` is ``[n_features, n_frames]``; returns ``[n_features, n_words]``
    where column ``w`` is the mean of frames in ``[start_w, end_w)``.
    """
    feats = check_array(features, name="features", ndim=2)
    spans = _check_spans(spans)
    if spans[-1][1] > feats.shape[1]:
        raise ValueError(
            f"spans end at {spans[-1][1]} but features have {feats.shape[1]} frames"
        )
    out = np.empty((feats.shape[0], len(spans)), dtype=feats.dtype)
    for w, (start, end) in enumerate(spans):
        out[:, w] = feats[:, start:end].mean(axis=1)
    return out


def random_boundaries(seq_len: int, n_words: int, *, seed):
    """Partition ``[0, seq_len)`` into `n_words` contiguous random spans.

    Cut points are drawn uniformly without replacement from the interior
    positions, so every composition with positive-width words is possible.
    """
    seq_len = check_int(seq_len, name="seq_len", minimum=1)
    n_words = check_int(n_words, name="n_words", minimum=1, maximum=seq_len)
    rng = _as_rng(seed)
    cuts = np.sort(rng.choice(np.arange(1, seq_len), size=n_words - 1, replace=False))
    edges = np.concatenate(([0], cuts, [seq_len]))
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def random_count_boundaries(seq_len: int, count_range, *, seed):
    """Like :func:`random_boundaries` with the word count itself drawn
    uniformly from ``count_range = (lo, hi)`` inclusive."""
    lo, hi = (check_int(v, name="count_range", minimum=1) for v in count_range)
    if hi < lo:
        raise ValueError(f"count_range: lo must not exceed hi, got ({lo}, {hi})")
    if hi > seq_len:
        raise ValueError(f"count_range: hi={hi} exceeds sequence length {seq_len}")
    rng = _as_rng(seed)
    n_words = int(rng.integers(lo, hi + 1))
    return random_boundaries(seq_len, n_words, seed=rng)


def skip_boundaries(spans, n: int):
    """Merge every n-th word (1-based) into its successor.

    The boundary after word ``w`` is removed whenever ``w % n == 0``; if
    that word is the last one, the boundary before it is removed instead
    so it merges backward. ``n`` above the word count leaves the spans
    unchanged.
    """
    spans = _check_spans(spans)
    n = check_int(n, name="n", minimum=2)
    n_words = len(spans)
    # boundary i sits between word i and word i+1 (1-based words)
    removed = set()
    for w in range(n, n_words + 1, n):
        removed.add(w if w < n_words else n_words - 1)
    out = []
    group_start = spans[0][0]
    for w in range(1, n_words + 1):
        if w in removed:
            continue
        out.append((group_start, spans[w - 1][1]))
        if w < n_words:
            group_start = spans[w][0]
    return out
