"""Separation quality metrics and the combined training-style loss value."""

from __future__ import annotations

import numpy as np

from .signal_io import StftConfig, Waveform, stft

SI_SNR_EPS = 1e-9  # relative guard; also sets the +-90 dB report cap


def _as_mono(x) -> np.ndarray:
    if isinstance(x, Waveform):
        if x.n_channels != 1:
            raise ValueError(f"expected mono signal, got {x.n_channels} channels")
        return x.samples[0]
    return np.asarray(x, dtype=np.float64).reshape(-1)


def si_snr(est, ref) -> float:
    """Scale-invariant signal-to-noise ratio in dB.

    The estimate is projected onto the reference after mean removal; the
    symmetric relative guards keep the value exactly scale invariant and cap
    it at +-90 dB for degenerate inputs.
    """
    e = _as_mono(est)
    r = _as_mono(ref)
    if e.size != r.size:
        raise ValueError(f"length mismatch: {e.size} vs {r.size}")
    e = e - e.mean()
    r = r - r.mean()
    ref_pow = float(np.dot(r, r))
    if ref_pow <= 0.0:
        raise ValueError("silent reference; Si-SNR undefined")
    target = (np.dot(e, r) / ref_pow) * r
    p_t = float(np.dot(target, target))
    p_n = float(np.dot(e - target, e - target))
    return 10.0 * np.log10((p_t + SI_SNR_EPS * p_n) / (p_n + SI_SNR_EPS * p_t))


def sdr(est, ref) -> float:
    """Signal-to-distortion ratio in dB (not scale invariant)."""
    e = _as_mono(est)
    r = _as_mono(ref)
    if e.size != r.size:
        raise ValueError(f"length mismatch: {e.size} vs {r.size}")
    p_r = float(np.dot(r, r))
    if p_r <= 0.0:
        raise ValueError("silent reference; SDR undefined")
    d = e - r
    p_d = float(np.dot(d, d))
    return 10.0 * np.log10((p_r + SI_SNR_EPS * p_d) / (p_d + SI_SNR_EPS * p_r))


def spectral_mse(est: Waveform, ref: Waveform, cfg: StftConfig) -> float:
    """Mean squared complex STFT difference (per-entry |delta|^2 average)."""
    se = stft(est, cfg).data
    sr = stft(ref, cfg).data
    if se.shape != sr.shape:
        raise ValueError(f"spectrogram shape mismatch: {se.shape} vs {sr.shape}")
    return float(np.mean(np.abs(se - sr) ** 2))


def loss_value(est_zones, ref_zones, stft_cfg: StftConfig | None = None) -> float:
    """Equally weighted sum over zones of (-SiSNR + spectral MSE)."""
    cfg = stft_cfg or StftConfig()
    if len(est_zones) != len(ref_zones):
        raise ValueError("zone count mismatch")
    total = 0.0
    for est, ref in zip(est_zones, ref_zones):
        total += -si_snr(est, ref) + spectral_mse(est, ref, cfg)
    return total
