"""Spectral/spatial input features: log power spectrum, inter-channel phase
differences, and per-zone directional coherence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import SPEED_OF_SOUND, CabinSpec
from .signal_io import MultichannelSpectrogram, StftConfig
from .weights import WeightBundle

LPS_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureTensor:
    """Bundle of beamformer input features.

    lps: (T, F) log power of the reference channel
    ipd: (P, T, F) wrapped phase differences for P mic pairs
    df:  (Z, T, F) per-zone directional coherence in [-1, 1]
    """

    lps: np.ndarray
    ipd: np.ndarray
    df: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.lps)):
            raise ValueError("lps contains non-finite values")
        if np.any(self.ipd <= -np.pi) or np.any(self.ipd > np.pi):
            raise ValueError("ipd values must lie in (-pi, pi]")
        if np.any(np.abs(self.df) > 1.0 + 1e-12):
            raise ValueError("df values must lie in [-1, 1]")

    @property
    def n_frames(self) -> int:
        return self.lps.shape[0]

    @property
    def n_bins(self) -> int:
        return self.lps.shape[1]

    def stacked(self) -> np.ndarray:
        """Concatenate all features per (t, f): shape (T, F, 1 + P + Z)."""
        layers = [self.lps[None]]
        layers.append(self.ipd)
        layers.append(self.df)
        return np.concatenate(layers, axis=0).transpose(1, 2, 0)


def wrap_phase(x: np.ndarray) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    wrapped = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def compute_lps(s: MultichannelSpectrogram, ref_ch: int = 0) -> np.ndarray:
    """Floored log power spectrum of the reference channel, shape (T, F)."""
    if not 0 <= ref_ch < s.n_channels:
        raise ValueError(f"ref_ch {ref_ch} out of range for {s.n_channels} channels")
    power = np.abs(s.data[ref_ch]) ** 2
    return np.log(np.maximum(power, LPS_FLOOR))


def compute_ipd(s: MultichannelSpectrogram, pairs=((0, 1),)) -> np.ndarray:
    """Wrapped inter-channel phase differences, shape (P, T, F)."""
    out = np.empty((len(pairs), s.n_frames, s.n_bins))
    for p, (m1, m2) in enumerate(pairs):
        if not (0 <= m1 < s.n_channels and 0 <= m2 < s.n_channels):
            raise ValueError(f"mic pair {(m1, m2)} out of range for {s.n_channels} channels")
        out[p] = wrap_phase(np.angle(s.data[m1]) - np.angle(s.data[m2]))
    return out


def compute_df(s: MultichannelSpectrogram, zone_steering: np.ndarray, pairs=((0, 1),)) -> np.ndarray:
    """Directional coherence per zone: cos(ipd - steering), averaged over pairs.

    zone_steering holds the expected phase difference per (zone, pair, bin).
    """
    steering = np.asarray(zone_steering, dtype=np.float64)
    if steering.ndim != 3 or steering.shape[1] != len(pairs) or steering.shape[2] != s.n_bins:
        raise ValueError(
            f"zone_steering must be (zones, {len(pairs)}, {s.n_bins}), got {steering.shape}"
        )
    ipd = compute_ipd(s, pairs)  # (P, T, F)
    diff = ipd[None, :, :, :] - steering[:, :, None, :]
    return np.cos(diff).mean(axis=1)


def zone_steering(spec: CabinSpec, cfg: StftConfig, sample_rate: int = 16000, pairs=((0, 1),)) -> np.ndarray:
    """Expected direct-path phase differences per (zone, pair, bin).

    A source delayed by d/c at mic m contributes exp(-j 2 pi f d/c), so the
    pair (m1, m2) sees -2 pi f (d1 - d2) / c.
    """
    freqs = np.arange(cfg.n_bins) * sample_rate / cfg.fft_size
    out = np.empty((spec.zones.shape[0], len(pairs), cfg.n_bins))
    for z, pos in enumerate(spec.zones):
        dists = np.linalg.norm(spec.mic_array - pos, axis=1)
        for p, (m1, m2) in enumerate(pairs):
            tau = (dists[m1] - dists[m2]) / SPEED_OF_SOUND
            out[z, p] = wrap_phase(-2.0 * np.pi * freqs * tau)
    return out


def compute_features(
    s: MultichannelSpectrogram,
    steering: np.ndarray,
    ref_ch: int = 0,
    pairs=((0, 1),),
) -> FeatureTensor:
    """Convenience wrapper assembling the full FeatureTensor."""
    return FeatureTensor(
        lps=compute_lps(s, ref_ch),
        ipd=compute_ipd(s, pairs),
        df=compute_df(s, steering, pairs),
    )


def save_features(ft: FeatureTensor, path) -> None:
    """Dump features as a flat binary tensor file with a header manifest."""
    bundle = WeightBundle()
    bundle["features/lps"] = ft.lps.astype(np.float64)
    bundle["features/ipd"] = ft.ipd.astype(np.float64)
    bundle["features/df"] = ft.df.astype(np.float64)
    bundle.save(path)


def load_features(path) -> FeatureTensor:
    bundle = WeightBundle.load(path)
    return FeatureTensor(
        lps=bundle["features/lps"],
        ipd=bundle["features/ipd"],
        df=bundle["features/df"],
    )
