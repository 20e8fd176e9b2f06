"""Time-domain audio I/O and the STFT analysis/synthesis transform.

Waveforms are stored channels-first as float64 in [-1, 1].  Spectrograms are
one-sided complex tensors indexed (channel, frame, bin) with the frame `t`
centered at sample `t * hop` of the source signal (reflect padding of half a
window on both ends).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile

from .errors import DataError

_SUPPORTED_WINDOWS = ("hann", "rect")


@dataclass(frozen=True)
class Waveform:
    """Multichannel time-domain signal, shape (channels, samples)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got ndim={samples.ndim}")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, c: int) -> "Waveform":
        return Waveform(self.samples[c : c + 1].copy(), self.sample_rate)

    def power(self) -> float:
        """Mean squared amplitude across all channels and samples."""
        return float(np.mean(self.samples**2))


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters for the analysis/synthesis transform.

    Defaults follow a 512-point transform with a 32 ms Hann window and a
    16 ms hop at 16 kHz.
    """

    fft_size: int = 512
    window_len: int = 512
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.window not in _SUPPORTED_WINDOWS:
            raise ValueError(
                f"unsupported window {self.window!r}; expected one of {_SUPPORTED_WINDOWS}"
            )
        if self.hop <= 0 or self.window_len <= 0:
            raise ValueError("hop and window_len must be positive")
        if self.window_len % self.hop != 0:
            raise ValueError(
                f"hop {self.hop} must divide window_len {self.window_len} "
                "(overlap-add reconstruction requirement)"
            )
        if self.fft_size < self.window_len:
            raise ValueError(
                f"fft_size {self.fft_size} must be >= window_len {self.window_len}"
            )

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_values(self) -> np.ndarray:
        """Analysis taper, periodic so that overlap-add sums stay flat."""
        n = self.window_len
        if self.window == "rect":
            return np.ones(n)
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


@dataclass(frozen=True)
class MultichannelSpectrogram:
    """One-sided complex spectrogram, shape (channels, frames, bins)."""

    data: np.ndarray
    config: StftConfig
    n_samples: int = field(default=0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        object.__setattr__(self, "data", np.ascontiguousarray(data, dtype=np.complex128))
        if self.data.ndim != 3:
            raise ValueError(f"data must be (channels, frames, bins), got {self.data.shape}")
        if self.data.shape[2] != self.config.n_bins:
            raise ValueError(
                f"bin count {self.data.shape[2]} does not match config "
                f"({self.config.n_bins} expected)"
            )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]

    def scaled(self, factor: complex) -> "MultichannelSpectrogram":
        return MultichannelSpectrogram(self.data * factor, self.config, self.n_samples)


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

_WAV_ENCODINGS = {"pcm16": 16, "pcm24": 24, "pcm32": 32, "float32": 32}


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file into a [-1, 1]-normalized Waveform.

    Supports PCM 16/24/32 bit and IEEE float32, any channel count.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"audio file not found: {path}")
    try:
        rate, data = scipy.io.wavfile.read(path)
    except ValueError as exc:
        raise DataError(f"unsupported WAV encoding in {path}: {exc}") from None
    if data.size == 0:
        raise DataError(f"zero-length audio: {path}")
    if data.ndim == 1:
        data = data[:, None]
    # scipy returns (samples, channels); we store channels-first
    data = data.T
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # 24-bit PCM arrives as int32 with the low byte zero-padded
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise DataError(f"unsupported WAV sample format {data.dtype} in {path}")
    return Waveform(samples, int(rate))


def write_wav(w: Waveform, path, encoding: str = "pcm16") -> None:
    """Write a Waveform to a RIFF/WAVE file.

    Raises on NaN/Inf samples and on amplitudes above full scale; quantization
    never wraps around silently.
    """
    if encoding not in _WAV_ENCODINGS:
        raise DataError(f"unsupported WAV encoding {encoding!r}")
    x = w.samples
    if not np.all(np.isfinite(x)):
        raise DataError("refusing to write non-finite samples")
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak > 1.0:
        raise DataError(f"samples exceed full scale (peak {peak:.6g} > 1); scale before writing")
    interleaved = x.T  # (samples, channels)
    if encoding == "float32":
        scipy.io.wavfile.write(path, w.sample_rate, interleaved.astype(np.float32))
    elif encoding == "pcm16":
        q = np.clip(np.round(interleaved * 32768.0), -32768, 32767).astype(np.int16)
        scipy.io.wavfile.write(path, w.sample_rate, q)
    elif encoding == "pcm32":
        q = np.clip(np.round(interleaved * 2147483648.0), -2147483648, 2147483647)
        scipy.io.wavfile.write(path, w.sample_rate, q.astype(np.int32))
    else:  # pcm24: scipy cannot write it; pack 3-byte little-endian frames directly
        q = np.clip(np.round(interleaved * 8388608.0), -8388608, 8388607).astype(np.int32)
        _write_pcm24(path, w.sample_rate, q)


def _write_pcm24(path, rate: int, q: np.ndarray) -> None:
    n_samples, n_channels = q.shape
    as_u32 = np.ascontiguousarray(q.astype("<u4")).view(np.uint8).reshape(n_samples, n_channels, 4)
    payload = as_u32[:, :, :3].tobytes()
    block_align = 3 * n_channels
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, n_channels, rate, rate * block_align, block_align, 24
    )
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


# ---------------------------------------------------------------------------
# STFT / iSTFT
# ---------------------------------------------------------------------------


def _frame_layout(n_samples: int, cfg: StftConfig):
    """Padded length and frame count so every source sample is fully covered."""
    pad = cfg.window_len // 2
    covered = n_samples + 2 * pad
    n_frames = max(1, int(np.ceil((covered - cfg.window_len) / cfg.hop)) + 1)
    total = (n_frames - 1) * cfg.hop + cfg.window_len
    return pad, total, n_frames


def stft_array(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Windowed one-sided DFT of (channels, samples) data, complex input allowed."""
    x = np.atleast_2d(np.asarray(x))
    n_channels, n_samples = x.shape
    if n_samples == 0:
        raise ValueError("empty signal")
    pad, total, n_frames = _frame_layout(n_samples, cfg)
    if n_samples >= 2:
        padded = np.pad(x, ((0, 0), (pad, pad)), mode="reflect")
    else:
        padded = np.pad(x, ((0, 0), (pad, pad)), mode="edge")
    padded = np.pad(padded, ((0, 0), (0, total - padded.shape[1])))
    strides = (padded.strides[0], cfg.hop * padded.strides[1], padded.strides[1])
    frames = np.lib.stride_tricks.as_strided(
        padded, shape=(n_channels, n_frames, cfg.window_len), strides=strides
    )
    tapered = frames * cfg.window_values()
    if np.iscomplexobj(tapered):
        spec = np.fft.fft(tapered, n=cfg.fft_size, axis=-1)[..., : cfg.n_bins]
    else:
        spec = np.fft.rfft(tapered, n=cfg.fft_size, axis=-1)
    return np.ascontiguousarray(spec)


def stft(w: Waveform, cfg: StftConfig | None = None) -> MultichannelSpectrogram:
    """Transform a waveform into its one-sided complex spectrogram."""
    cfg = cfg or StftConfig()
    if w.n_samples == 0:
        raise ValueError("empty waveform")
    return MultichannelSpectrogram(stft_array(w.samples, cfg), cfg, w.n_samples)


def istft(s: MultichannelSpectrogram, sample_rate: int = 16000) -> Waveform:
    """Weighted overlap-add inverse; reconstructs stft() input on the interior.

    Synthesis applies the analysis taper a second time and divides by the
    summed squared taper, which makes the round trip exact wherever the
    denominator is bounded away from zero.
    """
    cfg = s.config
    n_channels, n_frames, _ = s.data.shape
    if s.n_samples <= 0:
        raise ValueError("spectrogram carries no source-length metadata")
    pad, total, expect_frames = _frame_layout(s.n_samples, cfg)
    if n_frames != expect_frames:
        raise ValueError(
            f"frame count {n_frames} inconsistent with n_samples={s.n_samples} "
            f"(expected {expect_frames})"
        )
    win = cfg.window_values()
    frames = np.fft.irfft(s.data, n=cfg.fft_size, axis=-1)[..., : cfg.window_len]
    frames = frames * win
    out = np.zeros((n_channels, total))
    norm = np.zeros(total)
    win_sq = win**2
    for t in range(n_frames):
        lo = t * cfg.hop
        out[:, lo : lo + cfg.window_len] += frames[:, t]
        norm[lo : lo + cfg.window_len] += win_sq
    keep = slice(pad, pad + s.n_samples)
    denom = norm[keep]
    if denom.min() < 1e-8:
        raise ValueError("window/hop combination leaves uncovered samples (COLA violated)")
    samples = out[:, keep] / denom
    return Waveform(samples, sample_rate)
