"""Spectrogram figure rendering for the report path."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .signal_io import MultichannelSpectrogram, StftConfig, Waveform, stft

DB_RANGE = 80.0


def save_spectrogram_png(
    source,
    path,
    title: str = "",
    channel: int = 0,
    cfg: StftConfig | None = None,
    sample_rate: int = 16000,
) -> None:
    """Render a log-magnitude spectrogram (80 dB range, viridis) to a PNG.

    Accepts a Waveform (transformed internally) or a MultichannelSpectrogram.
    """
    if isinstance(source, Waveform):
        spec = stft(source, cfg or StftConfig())
        sample_rate = source.sample_rate
    elif isinstance(source, MultichannelSpectrogram):
        spec = source
    else:
        raise TypeError(f"expected Waveform or MultichannelSpectrogram, got {type(source)}")
    mag = np.abs(spec.data[channel]).T  # (F, T)
    top = max(float(mag.max()), 1e-12)
    db = 20.0 * np.log10(np.maximum(mag, top * 10 ** (-DB_RANGE / 20.0)))

    hop_s = spec.config.hop / sample_rate
    nyquist_khz = sample_rate / 2000.0
    fig, ax = plt.subplots(figsize=(6, 3.2), dpi=120)
    im = ax.imshow(
        db,
        origin="lower",
        aspect="auto",
        cmap="viridis",
        extent=(0.0, spec.n_frames * hop_s, 0.0, nyquist_khz),
        vmin=20.0 * np.log10(top) - DB_RANGE,
        vmax=20.0 * np.log10(top),
    )
    ax.set_xlabel("time [s]")
    ax.set_ylabel("frequency [kHz]")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="dB")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
