"""Complex ratio filters, frame-wise spatial covariance matrices, and the
mask-network forward stub.

A cRF maps the stacked (mixture + echo reference) spectrogram to a
multichannel speech or noise estimate by filtering each stacked channel with
its own small filter across neighboring frames. Outer products of those
estimates give rank-1 frame-wise SCMs; layer-normalizing their flattened
real/imaginary entries produces the features the weight estimator consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureTensor
from .signal_io import MultichannelSpectrogram, StftConfig, Waveform, stft
from .weights import WeightBundle

CRF_TAPS_DEFAULT = 3
SCM_EPS = 1e-12


@dataclass(frozen=True)
class ComplexRatioFilter:
    """Per-TF-bin complex filter over (taps, stacked channels).

    coeffs has shape (T, F, taps, channels) or (1, F, taps, channels) for
    time-invariant filters; taps must be odd (centered at the current frame).
    """

    coeffs: np.ndarray
    target: str = "speech"
    zone: int = 0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        object.__setattr__(self, "coeffs", c)
        if c.ndim != 4:
            raise ValueError(f"coeffs must be (T, F, taps, channels), got {c.shape}")
        if c.shape[2] % 2 != 1:
            raise ValueError(f"tap count must be odd, got {c.shape[2]}")
        if self.target not in ("speech", "noise"):
            raise ValueError(f"target must be speech or noise, got {self.target!r}")

    @property
    def n_taps(self) -> int:
        return self.coeffs.shape[2]

    @property
    def n_channels(self) -> int:
        return self.coeffs.shape[3]

    @property
    def half(self) -> int:
        return (self.n_taps - 1) // 2


def identity_crf(n_frames: int, n_bins: int, n_channels: int, n_taps: int = 1) -> ComplexRatioFilter:
    """cRF whose center tap is one on every channel: output equals the input."""
    coeffs = np.zeros((1, n_bins, n_taps, n_channels), dtype=np.complex128)
    coeffs[:, :, (n_taps - 1) // 2, :] = 1.0
    return ComplexRatioFilter(coeffs)


def stack_with_echo(
    mix: MultichannelSpectrogram, echo: MultichannelSpectrogram | None
) -> np.ndarray:
    """Stack mixture channels with the echo reference (zeros when absent)."""
    if echo is None:
        zero = np.zeros_like(mix.data[:1])
        return np.concatenate([mix.data, zero], axis=0)
    if echo.n_channels != 1:
        raise ValueError(f"echo reference must be mono, got {echo.n_channels} channels")
    if echo.data.shape[1:] != mix.data.shape[1:]:
        raise ValueError(
            f"echo reference frames/bins {echo.data.shape[1:]} do not match mixture "
            f"{mix.data.shape[1:]}"
        )
    return np.concatenate([mix.data, echo.data], axis=0)


def shift_frames(stacked: np.ndarray, offset: int) -> np.ndarray:
    """Frame-shifted copy of (C, T, F) data, zero padded at sequence edges."""
    out = np.zeros_like(stacked)
    t = stacked.shape[1]
    if offset == 0:
        return stacked
    if offset > 0:
        out[:, : t - offset] = stacked[:, offset:]
    else:
        out[:, -offset:] = stacked[:, : t + offset]
    return out


def apply_crf(
    mix: MultichannelSpectrogram,
    echo: MultichannelSpectrogram | None,
    crf: ComplexRatioFilter,
) -> MultichannelSpectrogram:
    """Filter the stacked input with a cRF; output has mixture+echo channels."""
    stacked = stack_with_echo(mix, echo)
    n_channels, n_frames, n_bins = stacked.shape
    if crf.n_channels != n_channels:
        raise ValueError(f"cRF has {crf.n_channels} channels, input stack has {n_channels}")
    if crf.coeffs.shape[0] not in (1, n_frames) or crf.coeffs.shape[1] != n_bins:
        raise ValueError(
            f"cRF coeffs {crf.coeffs.shape} do not match input ({n_frames} frames, {n_bins} bins)"
        )
    out = np.zeros_like(stacked)
    for tap in range(crf.n_taps):
        offset = tap - crf.half
        coeff = crf.coeffs[:, :, tap, :]  # (T or 1, F, C)
        out += coeff.transpose(2, 0, 1) * shift_frames(stacked, offset)
    return MultichannelSpectrogram(out, mix.config, mix.n_samples)


def _oracle_fit_target(render, cfg: StftConfig, zone: int, target: str, echo) -> np.ndarray:
    """Stacked-channel fit target: the zone's image (speech) or the rest (noise).

    The echo-reference channel carries no speech, so its speech target is
    zero; for the noise fit it is the reference itself.
    """
    zone_img = render.targets[zone]
    if target == "speech":
        desired_mics = stft(zone_img, cfg).data
        desired_echo = np.zeros_like(desired_mics[:1])
    else:
        residual = render.mixture.samples - zone_img.samples
        desired_mics = stft(Waveform(residual, render.mixture.sample_rate), cfg).data
        desired_echo = echo.data if echo is not None else np.zeros_like(desired_mics[:1])
    return np.concatenate([desired_mics, desired_echo], axis=0)


CRF_HALF_WINDOW_DEFAULT = 1


def _windowed_ls_coeffs(
    stacked: np.ndarray, desired: np.ndarray, n_taps: int, half_window: int
) -> np.ndarray:
    """Per-(t, f, channel) sliding-window ridge LS filters, (T, F, taps, C).

    Gram matrices and right-hand sides accumulate per frame and are windowed
    by cumulative-sum differences, so each frame owns a well-posed local fit.
    The ridge is trace-relative with mean-diagonal scaling so shrinkage stays
    comparable across tap counts.
    """
    n_channels, n_frames, n_bins = stacked.shape
    half = (n_taps - 1) // 2
    coeffs = np.zeros((n_frames, n_bins, n_taps, n_channels), dtype=np.complex128)
    t = np.arange(n_frames)
    lo = np.maximum(t - half_window, 0)
    hi = np.minimum(t + half_window, n_frames - 1) + 1
    eye = np.eye(n_taps)
    for c in range(n_channels):
        shifts = np.stack(
            [shift_frames(stacked[c : c + 1], tap - half)[0] for tap in range(n_taps)]
        )  # (taps, T, F)
        per_frame_gram = np.einsum("atf,btf->tfab", np.conj(shifts), shifts)
        per_frame_rhs = np.einsum("atf,tf->tfa", np.conj(shifts), desired[c])
        cs_gram = np.concatenate(
            [np.zeros((1,) + per_frame_gram.shape[1:]), np.cumsum(per_frame_gram, axis=0)]
        )
        cs_rhs = np.concatenate(
            [np.zeros((1,) + per_frame_rhs.shape[1:]), np.cumsum(per_frame_rhs, axis=0)]
        )
        gram = cs_gram[hi] - cs_gram[lo]
        rhs = cs_rhs[hi] - cs_rhs[lo]
        trace = np.einsum("tfaa->tf", gram).real
        lam = 1e-4 * trace / n_taps + 1e-30
        gram = gram + lam[..., None, None] * eye
        if n_taps == 1:
            coeffs[:, :, 0, c] = rhs[..., 0] / gram[..., 0, 0]
        else:
            coeffs[:, :, :, c] = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return coeffs


def oracle_crf(
    render,
    cfg: StftConfig,
    zone: int,
    target: str = "speech",
    n_taps: int = CRF_TAPS_DEFAULT,
    half_window: int = CRF_HALF_WINDOW_DEFAULT,
) -> ComplexRatioFilter:
    """Time-varying least-squares cRF fitted against ground-truth images.

    Stands in for the trained mask network: per (frame, bin, stacked
    channel), solves a ridge-regularized n_taps filter over a short sliding
    window (2*half_window+1 frames) mapping that channel to the zone's true
    component image (speech) or to everything else in the mixture (noise).
    The echo-reference channel's speech target is zero; its noise target is
    the reference itself. Short windows matter: a filter constant over time
    cannot separate the spatial statistics of overlapping talkers.
    """
    if target not in ("speech", "noise"):
        raise ValueError(f"target must be speech or noise, got {target!r}")
    if not 0 <= zone < len(render.targets):
        raise ValueError(f"zone {zone} out of range")
    mix = stft(render.mixture, cfg)
    echo = stft(render.echo_ref, cfg) if render.echo_ref is not None else None
    stacked = stack_with_echo(mix, echo)
    desired = _oracle_fit_target(render, cfg, zone, target, echo)
    coeffs = _windowed_ls_coeffs(stacked, desired, n_taps, half_window)
    return ComplexRatioFilter(coeffs, target=target, zone=zone)


def crf_fit_residual(
    render,
    cfg: StftConfig,
    zone: int,
    target: str,
    n_taps: int,
    half_window: int = CRF_HALF_WINDOW_DEFAULT,
) -> float:
    """Value of the oracle cRF's fit criterion (squared error + ridge penalty).

    This is the objective the windowed least-squares solve minimizes; the
    penalty term is ~1e-4 relative and only matters when the fit is already
    near exact.
    """
    crf = oracle_crf(render, cfg, zone, target, n_taps, half_window)
    mix = stft(render.mixture, cfg)
    echo = stft(render.echo_ref, cfg) if render.echo_ref is not None else None
    est = apply_crf(mix, echo, crf)
    desired = _oracle_fit_target(render, cfg, zone, target, echo)
    data_term = float(np.sum(np.abs(est.data - desired) ** 2))

    stacked = stack_with_echo(mix, echo)
    n_frames = stacked.shape[1]
    half = (n_taps - 1) // 2
    t = np.arange(n_frames)
    lo = np.maximum(t - half_window, 0)
    hi = np.minimum(t + half_window, n_frames - 1) + 1
    penalty = 0.0
    for c in range(stacked.shape[0]):
        per_frame = np.stack(
            [np.abs(shift_frames(stacked[c : c + 1], tap - half)[0]) ** 2 for tap in range(n_taps)]
        ).sum(axis=0)  # (T, F)
        cs = np.concatenate([np.zeros((1, per_frame.shape[1])), np.cumsum(per_frame, axis=0)])
        lam = 1e-4 * (cs[hi] - cs[lo]) / n_taps + 1e-30  # (T, F)
        penalty += float(np.sum(lam * np.sum(np.abs(crf.coeffs[:, :, :, c]) ** 2, axis=2)))
    return data_term + penalty


# ---------------------------------------------------------------------------
# Spatial covariance series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceSeries:
    """Frame-wise Hermitian SCMs, shape (T, F, C, C)."""

    phi: np.ndarray
    kind: str = "speech"
    zone: int = 0

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.complex128)
        object.__setattr__(self, "phi", phi)
        if phi.ndim != 4 or phi.shape[2] != phi.shape[3]:
            raise ValueError(f"phi must be (T, F, C, C), got {phi.shape}")
        herm_err = np.abs(phi - np.conj(np.swapaxes(phi, 2, 3))).max()
        scale = max(np.abs(phi).max(), 1e-300)
        if herm_err > 1e-10 * scale:
            raise ValueError(f"SCMs not Hermitian: relative error {herm_err / scale:.3e}")

    @property
    def n_frames(self) -> int:
        return self.phi.shape[0]

    @property
    def n_bins(self) -> int:
        return self.phi.shape[1]

    @property
    def n_channels(self) -> int:
        return self.phi.shape[2]

    def time_averaged(self) -> np.ndarray:
        """Mean SCM over frames, shape (F, C, C)."""
        return self.phi.mean(axis=0)

    def recursive_averaged(self, alpha: float = 0.95) -> np.ndarray:
        """Frame-recursive smoothing phi(t) = a*phi(t-1) + (1-a)*phi_inst(t)."""
        out = np.empty_like(self.phi)
        acc = np.zeros_like(self.phi[0])
        for t in range(self.n_frames):
            acc = alpha * acc + (1.0 - alpha) * self.phi[t]
            out[t] = acc
        return out

    def features(self, gamma: float | np.ndarray = 1.0, beta: float | np.ndarray = 0.0) -> np.ndarray:
        """Layer-normalized flattened SCM entries, shape (T, F, 2*C*C).

        Real and imaginary parts are separate scalars; normalization runs per
        (t, f) over the flattened axis with affine parameters defaulting to
        identity.
        """
        t, f, c, _ = self.phi.shape
        flat = np.concatenate(
            [self.phi.real.reshape(t, f, c * c), self.phi.imag.reshape(t, f, c * c)], axis=-1
        )
        mean = flat.mean(axis=-1, keepdims=True)
        var = flat.var(axis=-1, keepdims=True)
        return gamma * (flat - mean) / np.sqrt(var + SCM_EPS) + beta


def compute_scm(est: MultichannelSpectrogram, kind: str = "speech", zone: int = 0) -> CovarianceSeries:
    """Raw rank-1 frame-wise SCMs from a multichannel estimate."""
    data = est.data  # (C, T, F)
    phi = np.einsum("ctf,dtf->tfcd", data, np.conj(data))
    return CovarianceSeries(phi, kind=kind, zone=zone)


# ---------------------------------------------------------------------------
# Mask-network forward stub
# ---------------------------------------------------------------------------

CRF_STUB_HIDDEN = 32


def crf_stub_weights(
    c_in: int,
    n_zones: int = 4,
    n_channels: int = 3,
    n_taps: int = CRF_TAPS_DEFAULT,
    hidden: int = CRF_STUB_HIDDEN,
    seed: int | None = 0,
) -> WeightBundle:
    """Weights for the cRF stub; seed None gives zeros, else scaled Gaussians."""
    n_out = n_zones * 2 * n_taps * n_channels * 2
    bundle = WeightBundle()
    if seed is None:
        bundle["crf_stub/conv1_weight"] = np.zeros((hidden, c_in, 3))
        bundle["crf_stub/conv1_bias"] = np.zeros(hidden)
        bundle["crf_stub/conv2_weight"] = np.zeros((n_out, hidden))
        bundle["crf_stub/conv2_bias"] = np.zeros(n_out)
    else:
        rng = np.random.default_rng(seed)
        bundle["crf_stub/conv1_weight"] = 0.1 * rng.standard_normal((hidden, c_in, 3))
        bundle["crf_stub/conv1_bias"] = np.zeros(hidden)
        bundle["crf_stub/conv2_weight"] = 0.1 * rng.standard_normal((n_out, hidden))
        bundle["crf_stub/conv2_bias"] = np.zeros(n_out)
    return bundle


def neural_crf_stub(
    features: FeatureTensor,
    weights: WeightBundle,
    n_zones: int = 4,
    n_channels: int = 3,
    n_taps: int = CRF_TAPS_DEFAULT,
) -> dict:
    """Deterministic forward pass producing per-zone (speech, noise) cRF pairs.

    A small frame-axis conv stack shared across bins emits paired real
    outputs that are reassembled into complex coefficients. No training
    happens here; with zero weights the filters are identically zero.
    """
    x = features.stacked()  # (T, F, C_in)
    n_frames, n_bins, c_in = x.shape
    n_out = n_zones * 2 * n_taps * n_channels * 2
    w1 = weights.require("crf_stub/conv1_weight", (CRF_STUB_HIDDEN, c_in, 3))
    b1 = weights.require("crf_stub/conv1_bias", (CRF_STUB_HIDDEN,))
    w2 = weights.require("crf_stub/conv2_weight", (n_out, CRF_STUB_HIDDEN))
    b2 = weights.require("crf_stub/conv2_bias", (n_out,))

    hidden = np.zeros((n_frames, n_bins, CRF_STUB_HIDDEN))
    padded = np.pad(x, ((1, 1), (0, 0), (0, 0)))
    for k in range(3):
        hidden += np.einsum("tfc,hc->tfh", padded[k : k + n_frames], w1[:, :, k])
    hidden = np.maximum(hidden + b1, 0.0)
    out = np.einsum("tfh,oh->tfo", hidden, w2) + b2
    out = out.reshape(n_frames, n_bins, n_zones, 2, n_taps, n_channels, 2)

    result = {}
    for z in range(n_zones):
        pair = []
        for role, name in enumerate(("speech", "noise")):
            re = out[:, :, z, role, :, :, 0]
            im = out[:, :, z, role, :, :, 1]
            pair.append(ComplexRatioFilter(re + 1j * im, target=name, zone=z))
        result[z] = tuple(pair)
    return result
