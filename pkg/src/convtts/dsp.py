"""Waveform <-> spectrogram conversions and the file formats they travel in.

Conventions (fixed by the engine defaults, overridable through DspSettings):

* STFT: Hann window (periodic), length 1024, hop 256; the signal is
  reflect-padded by 512 samples on each side so frame 0 is centered at
  sample 0. Inputs shorter than one window are zero-padded up to it.
  Frame count for L samples is 1 + floor(L / 256).
* ISTFT: overlap-add with the same synthesis window, normalized by the
  summed squared window (least-squares inversion), then the 512-sample
  padding is cropped off again.
* Magnitudes are mapped to [0, 1] with
  clip((20*log10(max(v, 1e-5)) - ref_db - min_db) / -min_db, 0, 1),
  ref_db = 20, min_db = -100.
* Mel analysis: 80 triangular filters with centers uniform on the HTK mel
  scale m = 2595*log10(1 + f/700), rows rescaled to unit peak.
* Reduced mels keep every 4th frame (frames 0, 4, 8, ...).

File formats:

* WAV: RIFF/WAVE, PCM 16-bit mono, little-endian. Reads divide by 32768;
  writes clip to [-1, 1], scale by 32768, and clamp into int16, so a
  write/read round trip is within one quantization step (1/32768).
* MSPEC1 spectrograms: magic ``MSPEC1``, u32 bins, u32 frames,
  u8 kind (0 = mel, 1 = linear), u8 normalized flag, then bins*frames
  float32 little-endian values, bin-major.
"""

from __future__ import annotations

import functools
import struct
import wave
from dataclasses import dataclass, replace

import numpy as np

from .errors import FileFormatError, WavFormatError

SAMPLE_RATE = 22050
WIN_LENGTH = 1024
HOP_LENGTH = 256
MEL_BINS = 80
LINEAR_BINS = WIN_LENGTH // 2 + 1
REF_DB = 20.0
MIN_DB = -100.0
AMP_FLOOR = 1e-5
REDUCTION_FACTOR = 4

MSPEC_MAGIC = b"MSPEC1"
_KIND_MEL = 0
_KIND_LINEAR = 1


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class Waveform:
    """Mono audio samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size and not np.isfinite(self.samples).all():
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def _check_spectrogram(values: np.ndarray, normalized: bool) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"spectrogram must be 2-D (bins x frames), got {values.shape}")
    if values.size:
        if not np.isfinite(values).all():
            raise ValueError("spectrogram contains non-finite values")
        if values.min() < 0:
            raise ValueError("spectrogram values must be nonnegative")
        if normalized and values.max() > 1.0:
            raise ValueError("normalized spectrogram values must lie in [0, 1]")
    return values


@dataclass
class LinearSpectrogram:
    """Full-band magnitude (or normalized) spectrogram, bins x frames."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = _check_spectrogram(self.values, self.normalized)

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class MelSpectrogram:
    """Mel-filtered spectrogram; ``reduced`` marks factor-4 frame decimation."""

    values: np.ndarray
    normalized: bool = False
    reduced: bool = False

    def __post_init__(self):
        self.values = _check_spectrogram(self.values, self.normalized)

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class MelFilterbank:
    """Triangular mel filters as an (n_mels x bins) weight matrix, unit row peaks."""

    matrix: np.ndarray
    f_min: float
    f_max: float
    centers_hz: np.ndarray


# ---------------------------------------------------------------------------
# STFT / ISTFT
# ---------------------------------------------------------------------------

def _hann(length: int) -> np.ndarray:
    # periodic Hann: satisfies COLA for hop = length/4
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def stft(w: Waveform, win_length: int = WIN_LENGTH, hop_length: int = HOP_LENGTH) -> np.ndarray:
    """Complex spectrogram (win/2+1 x T) of a waveform."""
    x = np.asarray(w.samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot take the STFT of an empty waveform")
    if x.size < win_length:
        x = np.pad(x, (0, win_length - x.size))
    x = np.pad(x, win_length // 2, mode="reflect")
    n_frames = 1 + (x.size - win_length) // hop_length
    window = _hann(win_length)
    frames = np.lib.stride_tricks.sliding_window_view(x, win_length)[::hop_length][:n_frames]
    return np.fft.rfft(frames * window, axis=1).T


def istft(spec: np.ndarray, win_length: int = WIN_LENGTH, hop_length: int = HOP_LENGTH,
          sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Least-squares overlap-add inverse of ``stft``."""
    spec = np.asarray(spec)
    expected_bins = win_length // 2 + 1
    if spec.ndim != 2 or spec.shape[0] != expected_bins:
        raise ValueError(
            f"istft expects {expected_bins} frequency bins, got shape {spec.shape}"
        )
    n_frames = spec.shape[1]
    window = _hann(win_length)
    frames = np.fft.irfft(spec.T, n=win_length, axis=1) * window
    total = (n_frames - 1) * hop_length + win_length
    acc = np.zeros(total)
    norm = np.zeros(total)
    wsq = window * window
    for i in range(n_frames):
        start = i * hop_length
        acc[start:start + win_length] += frames[i]
        norm[start:start + win_length] += wsq
    out = np.where(norm > 1e-10, acc / np.maximum(norm, 1e-10), 0.0)
    pad = win_length // 2
    return Waveform(out[pad:total - pad], sample_rate=sample_rate)


def linear_spectrogram(w: Waveform, win_length: int = WIN_LENGTH,
                       hop_length: int = HOP_LENGTH) -> LinearSpectrogram:
    """Magnitude STFT."""
    return LinearSpectrogram(np.abs(stft(w, win_length, hop_length)))


# ---------------------------------------------------------------------------
# mel filterbank
# ---------------------------------------------------------------------------

def hz_to_mel(f) -> np.ndarray:
    """HTK mel scale: m = 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(sample_rate: int = SAMPLE_RATE, n_fft: int = WIN_LENGTH,
                         n_mels: int = MEL_BINS, f_min: float = 0.0,
                         f_max: float | None = None) -> MelFilterbank:
    """Triangular filters with centers uniform on the HTK mel scale."""
    bins = n_fft // 2 + 1
    if n_mels > bins:
        raise ValueError(f"cannot fit {n_mels} mel filters into {bins} frequency bins")
    if f_max is None:
        f_max = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    bin_mels = hz_to_mel(np.arange(bins) * sample_rate / n_fft)
    matrix = np.zeros((n_mels, bins))
    for m in range(n_mels):
        left, center, right = mel_points[m], mel_points[m + 1], mel_points[m + 2]
        rising = (bin_mels - left) / (center - left)
        falling = (right - bin_mels) / (right - center)
        row = np.maximum(0.0, np.minimum(rising, falling))
        peak = row.max()
        if peak <= 0:
            raise ValueError(
                f"mel filter {m} has empty support; n_mels too large for this resolution"
            )
        matrix[m] = row / peak
    return MelFilterbank(matrix=matrix, f_min=float(f_min), f_max=float(f_max),
                         centers_hz=mel_to_hz(mel_points[1:-1]))


@functools.lru_cache(maxsize=4)
def _cached_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> MelFilterbank:
    return build_mel_filterbank(sample_rate, n_fft, n_mels)


def mel_spectrogram(w: Waveform, n_mels: int = MEL_BINS, win_length: int = WIN_LENGTH,
                    hop_length: int = HOP_LENGTH) -> MelSpectrogram:
    """Unreduced, unnormalized mel spectrogram: filterbank . |STFT|."""
    fb = _cached_filterbank(w.sample_rate, win_length, n_mels)
    mag = np.abs(stft(w, win_length, hop_length))
    return MelSpectrogram(fb.matrix @ mag)


# ---------------------------------------------------------------------------
# normalization and frame reduction
# ---------------------------------------------------------------------------

def normalize(spec, ref_db: float = REF_DB, min_db: float = MIN_DB,
              amp_floor: float = AMP_FLOOR):
    """Map magnitudes into [0, 1] on a clipped dB scale."""
    if spec.normalized:
        raise ValueError("spectrogram is already normalized")
    db = 20.0 * np.log10(np.maximum(spec.values, amp_floor))
    values = np.clip((db - ref_db - min_db) / (-min_db), 0.0, 1.0)
    return replace(spec, values=values, normalized=True)


def denormalize(spec, ref_db: float = REF_DB, min_db: float = MIN_DB):
    """Invert ``normalize`` (up to its clipping)."""
    if not spec.normalized:
        raise ValueError("spectrogram is not normalized")
    values = 10.0 ** ((spec.values * (-min_db) + min_db + ref_db) / 20.0)
    return replace(spec, values=values, normalized=False)


def reduce_frames(m: MelSpectrogram, factor: int = REDUCTION_FACTOR) -> MelSpectrogram:
    """Keep frames 0, factor, 2*factor, ...; output has ceil(T/factor) frames."""
    if m.reduced:
        raise ValueError("mel spectrogram is already reduced")
    if factor < 1:
        raise ValueError("reduction factor must be >= 1")
    return replace(m, values=m.values[:, ::factor].copy(), reduced=True)


# ---------------------------------------------------------------------------
# Griffin-Lim
# ---------------------------------------------------------------------------

def griffin_lim(mag: LinearSpectrogram, iterations: int = 60,
                win_length: int = WIN_LENGTH, hop_length: int = HOP_LENGTH,
                sample_rate: int = SAMPLE_RATE, track_convergence: bool = False):
    """Phase reconstruction from a magnitude spectrogram, zero-phase start.

    Iterates x <- istft(mag * phase(stft(x))). With ``track_convergence``
    also returns the spectral-convergence error ||STFT(x)| - mag||_F /
    ||mag||_F measured after initialization and after every iteration.
    """
    if mag.normalized:
        raise ValueError("griffin_lim expects unnormalized magnitudes")
    target = np.asarray(mag.values, dtype=np.float64)
    if target.size and target.min() < 0:
        raise ValueError("griffin_lim magnitudes must be nonnegative")
    target_norm = np.linalg.norm(target)

    x = istft(target.astype(complex), win_length, hop_length, sample_rate)
    errors = []
    for _ in range(iterations):
        spec = stft(x, win_length, hop_length)
        if track_convergence:
            err = np.linalg.norm(np.abs(spec) - target) / target_norm if target_norm > 0 else 0.0
            errors.append(err)
        phases = np.exp(1j * np.angle(spec))
        x = istft(target * phases, win_length, hop_length, sample_rate)
    if track_convergence:
        spec = stft(x, win_length, hop_length)
        err = np.linalg.norm(np.abs(spec) - target) / target_norm if target_norm > 0 else 0.0
        errors.append(err)
        return x, np.asarray(errors)
    return x


# ---------------------------------------------------------------------------
# WAV file I/O (16-bit PCM mono)
# ---------------------------------------------------------------------------

def read_wav(path) -> Waveform:
    try:
        reader = wave.open(str(path), "rb")
    except (wave.Error, EOFError, struct.error) as exc:
        raise WavFormatError(f"malformed WAV file {path}: {exc}") from exc
    try:
        if reader.getcomptype() != "NONE":
            raise WavFormatError(
                f"{path}: only PCM is supported, got compression {reader.getcomptype()!r}"
            )
        channels = reader.getnchannels()
        if channels != 1:
            raise WavFormatError(f"{path}: only mono is supported, got {channels} channels")
        width = reader.getsampwidth()
        if width != 2:
            raise WavFormatError(f"{path}: only 16-bit samples are supported, got {8 * width}-bit")
        rate = reader.getframerate()
        raw = reader.readframes(reader.getnframes())
    finally:
        reader.close()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return Waveform(samples, sample_rate=rate)


def write_wav(path, w: Waveform) -> None:
    clipped = np.clip(np.asarray(w.samples, dtype=np.float64), -1.0, 1.0)
    quantized = np.clip(np.rint(clipped * 32768.0), -32768, 32767).astype("<i2")
    writer = wave.open(str(path), "wb")
    try:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(w.sample_rate)
        writer.writeframes(quantized.tobytes())
    finally:
        writer.close()


# ---------------------------------------------------------------------------
# MSPEC1 spectrogram files
# ---------------------------------------------------------------------------

def write_mspec(path, spec) -> None:
    """Serialize a spectrogram to the MSPEC1 binary layout."""
    if isinstance(spec, MelSpectrogram):
        kind = _KIND_MEL
    elif isinstance(spec, LinearSpectrogram):
        kind = _KIND_LINEAR
    else:
        raise TypeError(f"cannot serialize {type(spec).__name__} as MSPEC1")
    header = MSPEC_MAGIC + struct.pack(
        "<IIBB", spec.bins, spec.frames, kind, 1 if spec.normalized else 0
    )
    payload = np.ascontiguousarray(spec.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_mspec(path, reduced: bool = False):
    """Read an MSPEC1 file; ``reduced`` tags mel spectrograms known to be decimated."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MSPEC_MAGIC) + 10:
        raise FileFormatError(f"{path}: truncated MSPEC1 header")
    if blob[:len(MSPEC_MAGIC)] != MSPEC_MAGIC:
        raise FileFormatError(f"{path}: bad magic {blob[:6]!r}, expected {MSPEC_MAGIC!r}")
    bins, frames, kind, normalized = struct.unpack_from("<IIBB", blob, len(MSPEC_MAGIC))
    offset = len(MSPEC_MAGIC) + 10
    expected = bins * frames * 4
    if len(blob) - offset != expected:
        raise FileFormatError(
            f"{path}: payload holds {len(blob) - offset} bytes, expected {expected}"
        )
    values = np.frombuffer(blob, dtype="<f4", count=bins * frames, offset=offset)
    values = values.reshape(bins, frames).copy()
    if kind == _KIND_MEL:
        return MelSpectrogram(values, normalized=bool(normalized), reduced=reduced)
    if kind == _KIND_LINEAR:
        return LinearSpectrogram(values, normalized=bool(normalized))
    raise FileFormatError(f"{path}: unknown spectrogram kind {kind}")
