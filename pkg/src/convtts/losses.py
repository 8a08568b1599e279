"""Training objectives: hierarchical spectrogram loss and guided attention.

The spectrogram loss consumes raw logits: the binary-divergence term is
mean(-S * y + softplus(y)) over cells, whose gradient is
(sigmoid(y) - S) / cells, and the L1 term compares sigmoid(y) against the
[0, 1] target. Both accept an optional 0/1 cell mask so padded regions
contribute exactly zero loss and zero gradient.

The guided-attention weight matrix W[n, t] = 1 - exp(-(rn - rt)^2 / (2 g^2))
uses normalized positions rn = n/(N-1), rt = t/(T-1) (0 when the extent is
1), so the main diagonal is exactly zero and the far corners approach 1.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tz
from .tensor import Tensor

GUIDED_SHARPNESS = 0.2


def _as_target(target) -> np.ndarray:
    s = target.data if isinstance(target, Tensor) else np.asarray(target)
    if s.size and (s.min() < 0.0 or s.max() > 1.0):
        raise ValueError("target spectrogram values must lie in [0, 1]")
    return s


def _masked_mean(cells: Tensor, mask: np.ndarray | None) -> Tensor:
    if mask is None:
        return tz.tensor_mean(cells)
    mask = np.asarray(mask)
    count = float(mask.sum())
    if count <= 0:
        raise ValueError("loss mask selects no cells")
    return tz.tensor_sum(cells * mask) / count


def binary_divergence(logits: Tensor, target, mask: np.ndarray | None = None) -> Tensor:
    """Bernoulli cross-entropy between sigmoid(logits) and a [0, 1] target.

    Computed in logit form, mean over cells of -S*y + softplus(y); the
    softplus keeps large positive logits from overflowing.
    """
    s = _as_target(target)
    cells = tz.softplus(logits) + logits * (-s)
    return _masked_mean(cells, mask)


def l1_term(logits: Tensor, target, mask: np.ndarray | None = None) -> Tensor:
    """Mean absolute error between sigmoid(logits) and the target."""
    s = _as_target(target)
    return _masked_mean(tz.tensor_abs(tz.sigmoid(logits) + (-s)), mask)


def l_hiera(logits: Tensor, target, mask: np.ndarray | None = None) -> Tensor:
    """Binary divergence plus the L1 term; used by both network stages."""
    return binary_divergence(logits, target, mask) + l1_term(logits, target, mask)


def guided_weights(n_chars: int, n_frames: int, sharpness: float = GUIDED_SHARPNESS) -> np.ndarray:
    """Penalty weights that vanish on the text/audio diagonal."""
    if n_chars < 1 or n_frames < 1:
        raise ValueError("guided_weights needs positive extents")
    rn = np.arange(n_chars, dtype=np.float64)
    rn = rn / (n_chars - 1) if n_chars > 1 else rn * 0.0
    rt = np.arange(n_frames, dtype=np.float64)
    rt = rt / (n_frames - 1) if n_frames > 1 else rt * 0.0
    gap = rn[:, None] - rt[None, :]
    return 1.0 - np.exp(-(gap * gap) / (2.0 * sharpness * sharpness))


def guided_attention_loss(attention: Tensor, weights: np.ndarray) -> Tensor:
    """Mean over all cells of A * W; zero for a perfectly diagonal attention."""
    if attention.shape != weights.shape:
        raise ValueError(
            f"attention {attention.shape} and weights {weights.shape} shapes differ"
        )
    return tz.tensor_mean(attention * weights)


def total_t2m_loss(logits: Tensor, target, attention: Tensor,
                   attn_weight: float = 1.0, mask: np.ndarray | None = None,
                   weights: np.ndarray | None = None) -> Tensor:
    """L_hiera plus attn_weight times the guided-attention penalty."""
    loss = l_hiera(logits, target, mask)
    if attn_weight != 0.0:
        if weights is None:
            weights = guided_weights(*attention.shape)
        loss = loss + guided_attention_loss(attention, weights) * attn_weight
    return loss
