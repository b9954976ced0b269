"""Dual-stream sentence encoders and embedding similarities.

Each stream (EEG response, speech stimulus) runs its own encoder with a
disjoint parameter set:

    1-D conv over channels -> ReLU -> stack the feature maps as the
    height of a one-channel image -> 2-D conv with time stride 3 ->
    ReLU -> flatten per step -> word-boundary average pooling ->
    LSTM over word vectors -> last hidden state.

Both convolutions zero-pad by kernel - 1 in total, so a T-frame input
keeps T steps through the first conv and leaves the strided conv with
ceil(T / 3) steps, the grid the pooled word spans refer to. The pad is
split the same way for every T, which keeps an embedding independent
of how far its batch was padded.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .validation import check_in, check_int

CHECKPOINT_FORMAT = 1

SIMILARITIES = ("manhattan", "euclidean", "cosine")


@dataclass(frozen=True)
class EncoderConfig:
    in_channels: int
    conv1_kernels: int = 8
    conv1_width: int = 8
    conv2_kernels: int = 16
    conv2_height: int = 16
    conv2_width: int = 9
    time_stride: int = 3
    lstm_hidden: int = 32
    dropout: float = 0.2

    def validate(self) -> "EncoderConfig":
        for name in ("in_channels", "conv1_kernels", "conv1_width", "conv2_kernels",
                     "conv2_height", "conv2_width", "time_stride", "lstm_hidden"):
            check_int(getattr(self, name), name=name, minimum=1)
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        return self

    @property
    def frame_features(self) -> int:
        return self.conv2_kernels * self.conv1_kernels

    @property
    def embed_dim(self) -> int:
        return self.lstm_hidden

    @property
    def min_frames(self) -> int:
        return max(self.conv1_width, self.conv2_width, self.time_stride)

    def pooled_length(self, n_frames: int) -> int:
        return math.ceil(n_frames / self.time_stride)


def _pad(kernel: int):
    return (kernel - 1) // 2, kernel - 1 - (kernel - 1) // 2


class StreamBatch(NamedTuple):
    """One stream's padded batch: features, pooling matrices, lengths."""

    feats: torch.Tensor
    pool: torch.Tensor
    word_counts: torch.Tensor
    lengths: Optional[torch.Tensor] = None


class SentenceEncoder(nn.Module):
    """Encode one stream's ``[batch, channels, frames]`` into embeddings."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config.validate()
        self.conv1 = nn.Conv1d(config.in_channels, config.conv1_kernels,
                               config.conv1_width)
        self.conv2 = nn.Conv2d(1, config.conv2_kernels,
                               (config.conv2_height, config.conv2_width),
                               stride=(1, config.time_stride))
        self.dropout = nn.Dropout(config.dropout)
        self.lstm = nn.LSTM(config.frame_features, config.lstm_hidden,
                            batch_first=True)

    def frame_encode(self, feats: torch.Tensor, lengths=None) -> torch.Tensor:
        """Conv body only: ``[B, C, T] -> [B, frame_features, ceil(T/3)]``."""
        cfg = self.config
        if feats.shape[-1] < cfg.min_frames:
            raise ValueError(
                f"{feats.shape[-1]} frames is below the encoder minimum "
                f"{cfg.min_frames}"
            )
        x = F.pad(feats, _pad(cfg.conv1_width))
        x = F.relu(self.conv1(x))
        if lengths is not None:
            # the conv bias leaks ReLU(bias) into frames past an item's true
            # length; zeroing them keeps embeddings batch-padding invariant
            steps = torch.arange(x.shape[-1], device=x.device)
            x = x * (steps < lengths.to(x.device)[:, None]).unsqueeze(1)
        x = x.unsqueeze(1)
        x = F.pad(x, _pad(cfg.conv2_width) + _pad(cfg.conv2_height))
        x = F.relu(self.conv2(x))
        return x.flatten(1, 2)

    def frame_states(self, feats: torch.Tensor, lengths=None) -> torch.Tensor:
        """LSTM state at every conv step, ``[B, ceil(T/3), hidden]``.

        Bypasses word pooling; states at steps past an item's true pooled
        length are meaningless and must be masked by the caller.
        """
        frames = self.frame_encode(feats, lengths)
        outputs, _ = self.lstm(frames.transpose(1, 2))
        return outputs

    def forward(self, feats, pool, word_counts, lengths=None) -> torch.Tensor:
        """Embed each sentence; `pool` is ``[B, max_words, ceil(T/3)]``."""
        frames = self.frame_encode(feats, lengths)
        words = torch.einsum("bft,bwt->bwf", frames, pool)
        words = self.dropout(words)
        packed = nn.utils.rnn.pack_padded_sequence(
            words, word_counts.cpu(), batch_first=True, enforce_sorted=False)
        _, (hidden, _) = self.lstm(packed)
        return hidden[-1]


def pooling_matrix(bounds_per_item, pooled_lengths, *, max_words=None,
                   max_length=None, dtype=torch.float32):
    """Build the averaging matrices word pooling multiplies by.

    Row ``w`` of item ``i`` holds ``1 / width`` over that word's span and
    zero elsewhere, so padded frames and inter-word gaps contribute
    nothing. Rows beyond an item's word count stay zero.
    """
    n = len(bounds_per_item)
    max_words = max_words or max(len(b) for b in bounds_per_item)
    max_length = max_length or max(pooled_lengths)
    pool = torch.zeros((n, max_words, max_length), dtype=dtype)
    for i, (bounds, length) in enumerate(zip(bounds_per_item, pooled_lengths)):
        if not bounds:
            raise ValueError(f"item {i}: no word spans")
        if bounds[-1][1] > length:
            raise ValueError(
                f"item {i}: spans end at {bounds[-1][1]} but the pooled "
                f"sequence has {length} steps"
            )
        for w, (start, end) in enumerate(bounds):
            pool[i, w, start:end] = 1.0 / (end - start)
    return pool


class MatchMismatchModel(nn.Module):
    """Two disjoint encoders plus a fixed embedding similarity."""

    def __init__(self, response_config: EncoderConfig, stimulus_config: EncoderConfig,
                 similarity: str = "manhattan"):
        super().__init__()
        check_in(similarity, SIMILARITIES, name="similarity")
        if response_config.lstm_hidden != stimulus_config.lstm_hidden:
            raise ValueError("streams must embed into the same dimension")
        self.similarity = similarity
        self.response_encoder = SentenceEncoder(response_config)
        self.stimulus_encoder = SentenceEncoder(stimulus_config)

    def score_pairs(self, response, stimulus_pos, stimulus_neg):
        """Similarities of (EEG, matched) and (EEG, mismatched) batches.

        Each argument is a ``(feats, pool, word_counts)`` triple.
        """
        embedded = self.response_encoder(*response)
        d_plus = similarity_scores(embedded, self.stimulus_encoder(*stimulus_pos),
                                   self.similarity)
        d_minus = similarity_scores(embedded, self.stimulus_encoder(*stimulus_neg),
                                    self.similarity)
        return d_plus, d_minus


class BaselineModel(nn.Module):
    """Frame-level dual-stream classifier without word pooling.

    Each stream runs the conv body and an LSTM over every conv step; the
    two state sequences are multiplied element-wise, averaged over the
    overlapping valid steps and the hidden dimension, and squashed by a
    sigmoid into a match probability.
    """

    similarity = "product_sigmoid"

    def __init__(self, response_config: EncoderConfig, stimulus_config: EncoderConfig):
        super().__init__()
        if response_config.lstm_hidden != stimulus_config.lstm_hidden:
            raise ValueError("streams must use the same hidden dimension")
        self.response_encoder = SentenceEncoder(response_config)
        self.stimulus_encoder = SentenceEncoder(stimulus_config)

    def score(self, response_feats, stimulus_feats, response_lengths=None,
              stimulus_lengths=None) -> torch.Tensor:
        r = self.response_encoder.frame_states(response_feats, response_lengths)
        s = self.stimulus_encoder.frame_states(stimulus_feats, stimulus_lengths)
        steps = min(r.shape[1], s.shape[1])
        product = r[:, :steps] * s[:, :steps]
        if response_lengths is None and stimulus_lengths is None:
            return torch.sigmoid(product.mean(dim=(1, 2)))
        batch = product.shape[0]
        full = torch.full((batch,), product.shape[1], dtype=torch.int64)
        valid = torch.minimum(
            _pooled_lengths(response_lengths, full),
            _pooled_lengths(stimulus_lengths, full)).clamp(max=steps)
        mask = (torch.arange(steps)[None, :] < valid[:, None]).to(product.dtype)
        summed = (product * mask.unsqueeze(-1)).sum(dim=(1, 2))
        return torch.sigmoid(summed / (valid.to(product.dtype) * product.shape[-1]))

    def score_pairs(self, response, stimulus_pos, stimulus_neg):
        """Match probabilities for (EEG, matched) and (EEG, mismatched)."""
        p_plus = self.score(response.feats, stimulus_pos.feats,
                            response.lengths, stimulus_pos.lengths)
        p_minus = self.score(response.feats, stimulus_neg.feats,
                             response.lengths, stimulus_neg.lengths)
        return p_plus, p_minus


def _pooled_lengths(lengths, default):
    if lengths is None:
        return default
    return torch.div(lengths + 2, 3, rounding_mode="floor")


def similarity_scores(a: torch.Tensor, b: torch.Tensor, kind: str) -> torch.Tensor:
    """Similarity in (0, 1] between batched embeddings ``[B, D]``."""
    check_in(kind, SIMILARITIES, name="similarity")
    if a.shape != b.shape:
        raise ValueError(f"embedding shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    if kind == "manhattan":
        return torch.exp(-torch.sum(torch.abs(a - b), dim=-1))
    if kind == "euclidean":
        # the epsilon keeps the gradient finite at zero distance and is far
        # below float64 resolution of the closed-form checks
        return torch.exp(-torch.sqrt(torch.sum((a - b) ** 2, dim=-1) + 1e-24))
    norms = torch.linalg.vector_norm(a, dim=-1) * torch.linalg.vector_norm(b, dim=-1)
    if bool((norms == 0).any()):
        raise ValueError("cosine similarity is undefined for zero-norm embeddings")
    cos = torch.sum(a * b, dim=-1) / norms
    return 0.5 * (1.0 + cos)


def similarity(a, b, kind: str) -> float:
    """Scalar convenience wrapper over :func:`similarity_scores`."""
    ta = torch.as_tensor(np.asarray(a), dtype=torch.float64).reshape(1, -1)
    tb = torch.as_tensor(np.asarray(b), dtype=torch.float64).reshape(1, -1)
    return float(similarity_scores(ta, tb, kind)[0])


def save_checkpoint(path, model, extra: dict | None = None):
    """Self-describing checkpoint: config header plus per-tensor metadata."""
    state = model.state_dict()
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_kind": type(model).__name__,
        "similarity": model.similarity,
        "response_config": asdict(model.response_encoder.config),
        "stimulus_config": asdict(model.stimulus_encoder.config),
        "tensors": {k: {"shape": list(v.shape), "dtype": str(v.dtype)}
                    for k, v in state.items()},
        "state_dict": state,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, model) -> dict:
    """Restore weights; refuses checkpoints written under another config."""
    payload = torch.load(path, weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unknown checkpoint format {payload.get('format')!r}")
    want = {
        "model_kind": type(model).__name__,
        "similarity": model.similarity,
        "response_config": asdict(model.response_encoder.config),
        "stimulus_config": asdict(model.stimulus_encoder.config),
    }
    for key, expected in want.items():
        if payload.get(key) != expected:
            raise ValueError(
                f"{path}: checkpoint {key} {payload.get(key)!r} does not match "
                f"the model's {expected!r}"
            )
    for name, meta in payload["tensors"].items():
        tensor = payload["state_dict"][name]
        if list(tensor.shape) != meta["shape"] or str(tensor.dtype) != meta["dtype"]:
            raise ValueError(f"{path}: tensor {name} disagrees with its header")
    model.load_state_dict(payload["state_dict"])
    return payload["extra"]
