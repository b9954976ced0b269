"""Shared fixtures for the model-layer tests."""

import numpy as np
import torch

from eegmatch.encoder import (
    EncoderConfig,
    MatchMismatchModel,
    StreamBatch,
    pooling_matrix,
)


def tiny_model(similarity="manhattan"):
    """A few-hundred-parameter model, small enough for finite differences."""
    response = EncoderConfig(in_channels=3, conv1_kernels=2, conv1_width=3,
                             conv2_kernels=2, conv2_height=4, conv2_width=3,
                             time_stride=3, lstm_hidden=4, dropout=0.0)
    stimulus = EncoderConfig(in_channels=2, conv1_kernels=2, conv1_width=3,
                             conv2_kernels=2, conv2_height=4, conv2_width=3,
                             time_stride=3, lstm_hidden=4, dropout=0.0)
    return MatchMismatchModel(response, stimulus, similarity=similarity)


def random_stream_batch(rng, n_channels, lengths, bounds_per_item, *,
                        dtype=torch.float64):
    """Build a (features, pooling, word_counts) triple from numpy draws."""
    max_len = max(lengths)
    feats = torch.zeros((len(lengths), n_channels, max_len), dtype=dtype)
    for i, length in enumerate(lengths):
        feats[i, :, :length] = torch.as_tensor(
            rng.standard_normal((n_channels, length)), dtype=dtype)
    pooled = [-(-length // 3) for length in lengths]
    pool = pooling_matrix(bounds_per_item, pooled,
                          max_length=-(-max_len // 3), dtype=dtype)
    counts = torch.as_tensor([len(b) for b in bounds_per_item])
    return StreamBatch(feats, pool, counts, torch.as_tensor(lengths))


def finite_difference_max_rel_err(model, loss_fn, h=1e-5):
    """Worst relative error between backprop and central differences.

    ``loss_fn(model)`` must rebuild the graph on every call; the model is
    expected to already be in float64 and eval mode.
    """
    model.zero_grad()
    loss_fn(model).backward()
    worst = 0.0
    for param in model.parameters():
        grad = param.grad.detach().clone().view(-1)
        flat = param.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
                up = float(loss_fn(model))
                flat[i] = orig - h
                down = float(loss_fn(model))
                flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            analytic = grad[i].item()
            scale = max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def spans_for(rng, pooled_len, n_words):
    """Random contiguous word spans partitioning ``[0, pooled_len)``."""
    cuts = np.sort(rng.choice(np.arange(1, pooled_len), size=n_words - 1,
                              replace=False))
    edges = np.concatenate([[0], cuts, [pooled_len]])
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
