"""Spectrogram augmentation for low-resource training: warp and mask operations.

All three operations preserve shape, are deterministic given an explicit
``numpy.random.Generator``, and touch nothing outside the region they
declare: masks overwrite exactly one rectangle, the warp fixes both
endpoint frames. They are applied to the reduced, normalized mel
spectrograms the first-stage network trains on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dsp import MelSpectrogram


@dataclass
class AugmentPolicy:
    """Knobs for one augmentation pass plus the batch mix-in ratio.

    ``mix_ratio`` is the fraction of each training batch replaced by
    augmented copies (round(mix_ratio * batch) items per batch).
    """

    max_time_warp: int = 5
    max_freq_mask: int = 15
    max_time_mask: int = 20
    n_freq_masks: int = 1
    n_time_masks: int = 1
    mix_ratio: float = 0.5
    mask_fill: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ValueError(f"mix_ratio must be in [0, 1], got {self.mix_ratio}")
        if min(self.max_time_warp, self.max_freq_mask, self.max_time_mask) < 0:
            raise ValueError("warp/mask widths must be nonnegative")
        if self.max_freq_mask >= 80:
            raise ValueError("max_freq_mask must be smaller than the 80 mel bins")
        if min(self.n_freq_masks, self.n_time_masks) < 0:
            raise ValueError("mask counts must be nonnegative")


def time_warp(m: MelSpectrogram, max_warp: int, rng: np.random.Generator) -> MelSpectrogram:
    """Displace one random interior frame by up to ``max_warp`` frames.

    An anchor a is drawn from [max_warp, frames-1-max_warp] and a signed
    displacement w from {-max_warp, ..., max_warp}; the time axis is then
    remapped piecewise-linearly so the content at a-w lands on a while the
    first and last frames stay fixed. Each mel row is resampled by linear
    interpolation.
    """
    if max_warp < 0:
        raise ValueError(f"max_warp must be nonnegative, got {max_warp}")
    frames = m.frames
    if max_warp == 0:
        return replace(m, values=m.values.copy())
    if frames <= 2 * max_warp:
        raise ValueError(
            f"time_warp needs more than {2 * max_warp} frames for max_warp={max_warp}, got {frames}"
        )

    anchor = int(rng.integers(max_warp, frames - max_warp))
    magnitude = int(rng.integers(0, max_warp + 1))
    sign = 1 if rng.integers(0, 2) == 0 else -1
    displacement = sign * magnitude
    if displacement == 0:
        return replace(m, values=m.values.copy())
    # the frame that lands on the anchor; kept strictly interior so the
    # endpoint knots stay fixed even for extreme draws
    source_anchor = min(max(anchor - displacement, 1), frames - 2)

    src = np.empty(frames, dtype=np.float64)
    t = np.arange(frames, dtype=np.float64)
    left = t[: anchor + 1]
    src[: anchor + 1] = left * (source_anchor / anchor)
    right = t[anchor + 1:]
    src[anchor + 1:] = source_anchor + (right - anchor) * (
        (frames - 1 - source_anchor) / (frames - 1 - anchor)
    )
    # pin the knots exactly so those frames copy bit-for-bit
    src[0] = 0.0
    src[anchor] = float(source_anchor)
    src[-1] = float(frames - 1)

    lo = np.clip(np.floor(src).astype(np.int64), 0, frames - 1)
    hi = np.minimum(lo + 1, frames - 1)
    frac = src - lo
    values = m.values
    out = values[:, lo] * (1.0 - frac) + values[:, hi] * frac
    exact = frac == 0.0
    out[:, exact] = values[:, lo[exact]]
    return replace(m, values=out.astype(values.dtype, copy=False))


def freq_mask(m: MelSpectrogram, max_width: int, rng: np.random.Generator,
              fill: float = 0.0) -> MelSpectrogram:
    """Zero out a random band of mel bins [f0, f0+f) with f ~ U{0..max_width}."""
    if not 0 <= max_width < m.bins:
        raise ValueError(
            f"freq_mask width must satisfy 0 <= width < {m.bins}, got {max_width}"
        )
    width = int(rng.integers(0, max_width + 1))
    start = int(rng.integers(0, m.bins - width + 1))
    out = m.values.copy()
    out[start:start + width, :] = fill
    return replace(m, values=out)


def time_mask(m: MelSpectrogram, max_width: int, rng: np.random.Generator,
              fill: float = 0.0) -> MelSpectrogram:
    """Zero out a random span of frames [t0, t0+t) with t ~ U{0..max_width}."""
    if not 0 <= max_width < m.frames:
        raise ValueError(
            f"time_mask width must satisfy 0 <= width < {m.frames}, got {max_width}"
        )
    width = int(rng.integers(0, max_width + 1))
    start = int(rng.integers(0, m.frames - width + 1))
    out = m.values.copy()
    out[:, start:start + width] = fill
    return replace(m, values=out)


def augment_utterance(m: MelSpectrogram, policy: AugmentPolicy,
                      rng: np.random.Generator) -> MelSpectrogram:
    """Time warp, then frequency masks, then time masks, in that order."""
    out = time_warp(m, policy.max_time_warp, rng)
    for _ in range(policy.n_freq_masks):
        out = freq_mask(out, policy.max_freq_mask, rng, fill=policy.mask_fill)
    for _ in range(policy.n_time_masks):
        out = time_mask(out, policy.max_time_mask, rng, fill=policy.mask_fill)
    return out
