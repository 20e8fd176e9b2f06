"""Multi-frame beamforming weights and the end-to-end separation pipeline.

Weights live per (zone, frame, bin, tap, stacked channel) and are applied as
w^H [Y, X] summed over taps, so a weight on the echo-reference channel
subtracts the loudspeaker feedback directly. Oracle weights come from a
Souden-style MVDR on cRF-estimated covariance series; the trained weight
estimator of the subband system is represented by a deterministic
RNN + attention forward stub shared across bands.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import (
    CovarianceSeries,
    apply_crf,
    compute_scm,
    neural_crf_stub,
    oracle_crf,
    shift_frames,
    stack_with_echo,
)
from .features import compute_features, zone_steering
from .scene import N_ZONES, SceneRender
from .signal_io import MultichannelSpectrogram, StftConfig, Waveform, istft, stft
from .subband import make_band_plan, projection_filters, analyze, synthesize
from .weights import WeightBundle

BF_TAPS_DEFAULT = 5
MVDR_TRACE_FLOOR = 1e-12

SEPARATION_MODES = (
    "oracle-mvdr-fullband",
    "oracle-mvdr-subband",
    "stub-srnn",
    "baseline-mvdr-ti",
    "baseline-mvdr-tv",
)


@dataclass(frozen=True)
class BeamformerWeights:
    """Per-zone multi-frame weights, shape (zones, T, F, taps, channels)."""

    w: np.ndarray
    flagged: np.ndarray | None = None  # (zones, T, F) bins zeroed by the trace guard

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.complex128)
        object.__setattr__(self, "w", w)
        if w.ndim != 5:
            raise ValueError(f"weights must be (zones, T, F, taps, channels), got {w.shape}")
        if w.shape[3] % 2 != 1:
            raise ValueError(f"tap count must be odd, got {w.shape[3]}")
        if not np.all(np.isfinite(w.view(np.float64))):
            raise ValueError("weights must be finite")

    @property
    def n_zones(self) -> int:
        return self.w.shape[0]

    @property
    def n_taps(self) -> int:
        return self.w.shape[3]

    @property
    def n_channels(self) -> int:
        return self.w.shape[4]

    @property
    def half(self) -> int:
        return (self.n_taps - 1) // 2


def _invert_loaded_hermitian(mats: np.ndarray) -> np.ndarray:
    """Batched inverse of loaded Hermitian matrices.

    3x3 uses the closed-form adjugate (hot path, deterministic); other sizes
    fall back to a LAPACK solve against the identity.
    """
    n = mats.shape[-1]
    if n != 3:
        eye = np.broadcast_to(np.eye(n, dtype=mats.dtype), mats.shape)
        return np.linalg.solve(mats, eye.copy())
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 0, 2]
    d = mats[..., 1, 0]
    e = mats[..., 1, 1]
    f = mats[..., 1, 2]
    g = mats[..., 2, 0]
    h = mats[..., 2, 1]
    i = mats[..., 2, 2]
    co_a = e * i - f * h
    co_b = -(d * i - f * g)
    co_c = d * h - e * g
    det = a * co_a + b * co_b + c * co_c
    adj = np.empty_like(mats)
    adj[..., 0, 0] = co_a
    adj[..., 0, 1] = -(b * i - c * h)
    adj[..., 0, 2] = b * f - c * e
    adj[..., 1, 0] = co_b
    adj[..., 1, 1] = a * i - c * g
    adj[..., 1, 2] = -(a * f - c * d)
    adj[..., 2, 0] = co_c
    adj[..., 2, 1] = -(a * h - b * g)
    adj[..., 2, 2] = a * e - b * d
    return adj / det[..., None, None]


def mvdr_weights_from_matrices(
    phi_ss: np.ndarray, phi_zz: np.ndarray, ref_ch: int
) -> tuple[np.ndarray, np.ndarray]:
    """Souden MVDR weights w = (Phi_zz + dI)^-1 Phi_ss u / tr(...) per matrix.

    Returns (weights (..., C), flagged (...)) where flagged bins got zero
    weights because the trace denominator fell under the speech-energy floor.
    """
    n = phi_ss.shape[-1]
    trace_zz = np.einsum("...cc->...", phi_zz).real
    delta = 1e-6 * trace_zz / n + 1e-30
    eye = np.eye(n, dtype=phi_zz.dtype)
    loaded = phi_zz + delta[..., None, None] * eye
    num = _invert_loaded_hermitian(loaded) @ phi_ss
    trace = np.einsum("...cc->...", num)
    flagged = np.abs(trace) < MVDR_TRACE_FLOOR
    safe_trace = np.where(flagged, 1.0, trace)
    w = num[..., :, ref_ch] / safe_trace[..., None]
    w = np.where(flagged[..., None], 0.0, w)
    return w, flagged


def oracle_mvdr_weights(
    spk_scm: CovarianceSeries,
    nz_scm: CovarianceSeries,
    ref_ch: int = 0,
    variant: str = "frame",
    alpha: float = 0.95,
    n_taps: int = BF_TAPS_DEFAULT,
) -> BeamformerWeights:
    """MVDR weights from raw covariance series; center tap only.

    variant "ti" averages both SCMs over all frames (weights constant in
    time); "tv" smooths both recursively, phi(t) = a phi(t-1) + (1-a)
    phi_inst(t); "frame" keeps the instantaneous frame-wise speech SCM and
    augments the recursive noise SCM with the current frame, which lets the
    per-frame weights track nonstationary interference (pure recursion
    underperforms overlapping talkers by several dB).
    """
    if variant not in ("ti", "tv", "frame"):
        raise ValueError(f"variant must be 'ti', 'tv' or 'frame', got {variant!r}")
    if spk_scm.phi.shape != nz_scm.phi.shape:
        raise ValueError("speech/noise covariance series shapes differ")
    n_frames, n_bins, n_ch, _ = spk_scm.phi.shape
    if not 0 <= ref_ch < n_ch:
        raise ValueError(f"ref_ch {ref_ch} out of range")
    if variant == "ti":
        w_tf, flags_tf = mvdr_weights_from_matrices(
            spk_scm.time_averaged(), nz_scm.time_averaged(), ref_ch
        )
        w_tf = np.broadcast_to(w_tf, (n_frames, n_bins, n_ch))
        flags = np.broadcast_to(flags_tf, (n_frames, n_bins))
    elif variant == "tv":
        w_tf, flags = mvdr_weights_from_matrices(
            spk_scm.recursive_averaged(alpha), nz_scm.recursive_averaged(alpha), ref_ch
        )
    else:
        noise = nz_scm.recursive_averaged(alpha) + nz_scm.phi
        w_tf, flags = mvdr_weights_from_matrices(spk_scm.phi, noise, ref_ch)
    full = np.zeros((1, n_frames, n_bins, n_taps, n_ch), dtype=np.complex128)
    full[0, :, :, (n_taps - 1) // 2, :] = w_tf
    return BeamformerWeights(full, flagged=flags[None].copy())


def apply_weights(
    mix: MultichannelSpectrogram,
    echo: MultichannelSpectrogram | None,
    weights: BeamformerWeights,
) -> list[MultichannelSpectrogram]:
    """Filter-and-sum w^H [Y, X] over taps; one mono spectrogram per zone."""
    stacked = stack_with_echo(mix, echo)
    n_channels, n_frames, n_bins = stacked.shape
    if weights.n_channels != n_channels:
        raise ValueError(
            f"weights cover {weights.n_channels} channels, input stack has {n_channels}"
        )
    if weights.w.shape[1] != n_frames or weights.w.shape[2] != n_bins:
        raise ValueError(
            f"weights {weights.w.shape[1:3]} do not match input ({n_frames}, {n_bins})"
        )
    outputs = []
    for z in range(weights.n_zones):
        out = np.zeros((n_frames, n_bins), dtype=np.complex128)
        for tap in range(weights.n_taps):
            offset = tap - weights.half
            coeff = np.conj(weights.w[z, :, :, tap, :])  # (T, F, C)
            out += np.einsum("tfc,ctf->tf", coeff, shift_frames(stacked, offset))
        outputs.append(MultichannelSpectrogram(out[None], mix.config, mix.n_samples))
    return outputs


# ---------------------------------------------------------------------------
# Subband weight-estimator forward stub
# ---------------------------------------------------------------------------

STUB_HIDDEN = 48
STUB_ZONE_DIM = 32
STUB_HEADS = 4


def rnn_bf_stub_weights(
    d_in: int,
    n_zones: int = N_ZONES,
    n_channels: int = 3,
    n_taps: int = BF_TAPS_DEFAULT,
    seed: int | None = 0,
) -> WeightBundle:
    """Parameter bundle for the stub; seed None zeros everything."""
    shapes = {
        "bf_stub/gru_wz": (STUB_HIDDEN, d_in),
        "bf_stub/gru_uz": (STUB_HIDDEN, STUB_HIDDEN),
        "bf_stub/gru_bz": (STUB_HIDDEN,),
        "bf_stub/gru_wr": (STUB_HIDDEN, d_in),
        "bf_stub/gru_ur": (STUB_HIDDEN, STUB_HIDDEN),
        "bf_stub/gru_br": (STUB_HIDDEN,),
        "bf_stub/gru_wn": (STUB_HIDDEN, d_in),
        "bf_stub/gru_un": (STUB_HIDDEN, STUB_HIDDEN),
        "bf_stub/gru_bn": (STUB_HIDDEN,),
        "bf_stub/head_weight": (n_zones * STUB_ZONE_DIM, STUB_HIDDEN),
        "bf_stub/head_bias": (n_zones * STUB_ZONE_DIM,),
        "bf_stub/attn_wq": (STUB_ZONE_DIM, STUB_ZONE_DIM),
        "bf_stub/attn_wk": (STUB_ZONE_DIM, STUB_ZONE_DIM),
        "bf_stub/attn_wv": (STUB_ZONE_DIM, STUB_ZONE_DIM),
        "bf_stub/attn_wo": (STUB_ZONE_DIM, STUB_ZONE_DIM),
        "bf_stub/out_weight": (n_taps * n_channels * 2, STUB_ZONE_DIM),
        "bf_stub/out_bias": (n_taps * n_channels * 2,),
    }
    bundle = WeightBundle()
    rng = np.random.default_rng(seed if seed is not None else 0)
    for name, shape in shapes.items():
        if seed is None:
            bundle[name] = np.zeros(shape)
        else:
            scale = 0.0 if name.endswith("_bias") or name.endswith("_bz") else 0.2
            bundle[name] = scale * rng.standard_normal(shape)
    return bundle


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def rnn_bf_stub(
    sub_speech,
    sub_noise,
    weights: WeightBundle,
    n_zones: int = N_ZONES,
    n_channels: int = 3,
    n_taps: int = BF_TAPS_DEFAULT,
) -> np.ndarray:
    """Causal recurrent weight estimator shared across bands (forward only).

    Per (band, embedding) position the concatenated speech/noise features
    drive a GRU over frames, a dense head fans out per-zone embeddings, one
    multi-head self-attention block mixes the zone axis, and a linear output
    emits paired real weight coefficients.

    Returns complex weights, shape (zones, K, T, E, taps, channels).
    """
    xs = sub_speech.data if hasattr(sub_speech, "data") else np.asarray(sub_speech)
    xn = sub_noise.data if hasattr(sub_noise, "data") else np.asarray(sub_noise)
    if xs.shape != xn.shape:
        raise ValueError(f"speech/noise subband shapes differ: {xs.shape} vs {xn.shape}")
    n_bands, n_frames, embed, depth = xs.shape
    d_in = 2 * depth
    # (K, T, E, 2D) -> (K*E, T, 2D): bands and embedding positions batch together
    feats = np.concatenate([xs, xn], axis=-1).transpose(0, 2, 1, 3).reshape(n_bands * embed, n_frames, d_in)

    wz = weights.require("bf_stub/gru_wz", (STUB_HIDDEN, d_in))
    uz = weights.require("bf_stub/gru_uz", (STUB_HIDDEN, STUB_HIDDEN))
    bz = weights.require("bf_stub/gru_bz", (STUB_HIDDEN,))
    wr = weights.require("bf_stub/gru_wr", (STUB_HIDDEN, d_in))
    ur = weights.require("bf_stub/gru_ur", (STUB_HIDDEN, STUB_HIDDEN))
    br = weights.require("bf_stub/gru_br", (STUB_HIDDEN,))
    wn = weights.require("bf_stub/gru_wn", (STUB_HIDDEN, d_in))
    un = weights.require("bf_stub/gru_un", (STUB_HIDDEN, STUB_HIDDEN))
    bn = weights.require("bf_stub/gru_bn", (STUB_HIDDEN,))
    head_w = weights.require("bf_stub/head_weight", (n_zones * STUB_ZONE_DIM, STUB_HIDDEN))
    head_b = weights.require("bf_stub/head_bias", (n_zones * STUB_ZONE_DIM,))
    wq = weights.require("bf_stub/attn_wq", (STUB_ZONE_DIM, STUB_ZONE_DIM))
    wk = weights.require("bf_stub/attn_wk", (STUB_ZONE_DIM, STUB_ZONE_DIM))
    wv = weights.require("bf_stub/attn_wv", (STUB_ZONE_DIM, STUB_ZONE_DIM))
    wo = weights.require("bf_stub/attn_wo", (STUB_ZONE_DIM, STUB_ZONE_DIM))
    out_w = weights.require("bf_stub/out_weight", (n_taps * n_channels * 2, STUB_ZONE_DIM))
    out_b = weights.require("bf_stub/out_bias", (n_taps * n_channels * 2,))

    batch = feats.shape[0]
    h = np.zeros((batch, STUB_HIDDEN))
    hidden = np.empty((batch, n_frames, STUB_HIDDEN))
    for t in range(n_frames):
        xt = feats[:, t, :]
        z = _sigmoid(xt @ wz.T + h @ uz.T + bz)
        r = _sigmoid(xt @ wr.T + h @ ur.T + br)
        n = np.tanh(xt @ wn.T + bn + r * (h @ un.T))
        h = (1.0 - z) * n + z * h
        hidden[:, t, :] = h

    zones_emb = (hidden @ head_w.T + head_b).reshape(batch, n_frames, n_zones, STUB_ZONE_DIM)

    dh = STUB_ZONE_DIM // STUB_HEADS
    q = (zones_emb @ wq.T).reshape(batch, n_frames, n_zones, STUB_HEADS, dh)
    k = (zones_emb @ wk.T).reshape(batch, n_frames, n_zones, STUB_HEADS, dh)
    v = (zones_emb @ wv.T).reshape(batch, n_frames, n_zones, STUB_HEADS, dh)
    scores = np.einsum("btzhd,btyhd->bthzy", q, k) / np.sqrt(dh)
    attn = _softmax(scores, axis=-1)
    mixed = np.einsum("bthzy,btyhd->btzhd", attn, v).reshape(batch, n_frames, n_zones, STUB_ZONE_DIM)
    mixed = mixed @ wo.T

    out = mixed @ out_w.T + out_b  # (B, T, zones, taps*ch*2)
    out = out.reshape(n_bands, embed, n_frames, n_zones, n_taps, n_channels, 2)
    w = out[..., 0] + 1j * out[..., 1]
    return w.transpose(3, 0, 2, 1, 4, 5)  # (zones, K, T, E, taps, channels)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# End-to-end separation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparationConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    mode: str = "oracle-mvdr-subband"
    n_bands: int = 64
    embed_dim: int | None = None  # None: widest band of the plan (exact round trip)
    ref_channel: int = 0
    alpha: float = 0.95
    crf_taps: int = 3
    crf_half_window: int = 1
    bf_taps: int = BF_TAPS_DEFAULT
    seed: int = 0
    n_threads: int = 1

    def __post_init__(self):
        if self.mode not in SEPARATION_MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {SEPARATION_MODES}")


@dataclass(frozen=True)
class SeparationResult:
    waveforms: list  # one mono Waveform per zone
    weights: BeamformerWeights
    flagged_fraction: np.ndarray  # per zone, fraction of trace-guarded bins


def _weights_to_real(w: np.ndarray) -> np.ndarray:
    """(zones, T, F, taps, C) complex -> (T, F, zones*taps*C*2) real."""
    zones, t, f, taps, ch = w.shape
    stacked = np.stack([w.real, w.imag], axis=-1)  # (zones,T,F,taps,C,2)
    return stacked.transpose(1, 2, 0, 3, 4, 5).reshape(t, f, zones * taps * ch * 2)


def _weights_from_real(flat: np.ndarray, zones: int, taps: int, ch: int) -> np.ndarray:
    t, f, _ = flat.shape
    stacked = flat.reshape(t, f, zones, taps, ch, 2).transpose(2, 0, 1, 3, 4, 5)
    return stacked[..., 0] + 1j * stacked[..., 1]


def _zone_mvdr(render, cfg: SeparationConfig, zone: int, variant: str, n_taps_crf: int):
    crf_s = oracle_crf(render, cfg.stft, zone, "speech", n_taps_crf, cfg.crf_half_window)
    crf_z = oracle_crf(render, cfg.stft, zone, "noise", n_taps_crf, cfg.crf_half_window)
    mix = stft(render.mixture, cfg.stft)
    echo = stft(render.echo_ref, cfg.stft) if render.echo_ref is not None else None
    est_s = apply_crf(mix, echo, crf_s)
    est_z = apply_crf(mix, echo, crf_z)
    scm_s = compute_scm(est_s, "speech", zone)
    scm_z = compute_scm(est_z, "noise", zone)
    return oracle_mvdr_weights(
        scm_s, scm_z, cfg.ref_channel, variant=variant, alpha=cfg.alpha, n_taps=cfg.bf_taps
    )


def separate(
    render: SceneRender,
    config: SeparationConfig,
    stub_weights: WeightBundle | None = None,
) -> SeparationResult:
    """Run the full pipeline and return one reverberant estimate per zone.

    Oracle and baseline modes need the render's ground-truth images to fit
    their cRFs; the stub mode runs from features alone, either with the
    provided WeightBundle or with parameters seeded from the config. A
    missing echo reference contributes an all-zero stacked channel.
    """
    cfg = config
    mix = stft(render.mixture, cfg.stft)
    echo = stft(render.echo_ref, cfg.stft) if render.echo_ref is not None else None
    n_frames, n_bins = mix.n_frames, mix.n_bins
    n_ch = mix.n_channels + 1

    if cfg.mode == "stub-srnn":
        weights = _stub_weights_pipeline(render, cfg, mix, echo, n_ch, stub_weights)
    else:
        if cfg.mode == "baseline-mvdr-ti":
            variant = "ti"
        elif cfg.mode == "baseline-mvdr-tv":
            variant = "tv"
        else:
            variant = "frame"
        crf_taps = 1 if cfg.mode.startswith("baseline") else cfg.crf_taps
        per_zone = [None] * N_ZONES

        def solve(z):
            per_zone[z] = _zone_mvdr(render, cfg, z, variant, crf_taps)

        if cfg.n_threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.n_threads) as pool:
                list(pool.map(solve, range(N_ZONES)))
        else:
            for z in range(N_ZONES):
                solve(z)
        weights = BeamformerWeights(
            np.concatenate([pz.w for pz in per_zone], axis=0),
            flagged=np.concatenate([pz.flagged for pz in per_zone], axis=0),
        )
        if cfg.mode == "oracle-mvdr-subband":
            plan = make_band_plan(n_bins, cfg.n_bands, render.mixture.sample_rate)
            analysis, synthesis = projection_filters(plan, cfg.embed_dim, seed=cfg.seed)
            flat = _weights_to_real(weights.w)
            routed = synthesize(analyze(flat, plan, analysis).data[None], plan, synthesis)[0]
            weights = BeamformerWeights(
                _weights_from_real(routed, N_ZONES, cfg.bf_taps, n_ch), flagged=weights.flagged
            )

    zone_specs = apply_weights(mix, echo, weights)
    waveforms = [istft(s, render.mixture.sample_rate) for s in zone_specs]
    if weights.flagged is not None:
        flagged_fraction = weights.flagged.reshape(N_ZONES, -1).mean(axis=1)
    else:
        flagged_fraction = np.zeros(N_ZONES)
    return SeparationResult(waveforms=waveforms, weights=weights, flagged_fraction=flagged_fraction)


def separate_mixture(
    mixture: Waveform,
    echo_ref: Waveform | None,
    spec,
    config: SeparationConfig,
) -> SeparationResult:
    """Separate raw waveforms without ground truth (stub mode only).

    Oracle and baseline modes fit their cRFs against rendered component
    images, so they raise here; the stub path needs only the cabin geometry
    for its steering features.
    """
    if config.mode != "stub-srnn":
        raise ValueError(f"mode {config.mode!r} needs ground-truth images; pass a SceneRender")
    n_samples = mixture.n_samples
    zeros = [Waveform(np.zeros_like(mixture.samples), mixture.sample_rate) for _ in range(N_ZONES)]
    render = SceneRender(
        spec=spec,
        mixture=mixture,
        echo_ref=echo_ref,
        targets=zeros,
        echo_image=None,
        noise_image=None,
        snr_db=None,
        ser_db=None,
    )
    return separate(render, config)


def _stub_weights_pipeline(render, cfg, mix, echo, n_ch, bundle=None) -> BeamformerWeights:
    """Features -> stub cRFs -> SCM features -> subband -> stub RNN -> weights."""
    from .estimator import crf_stub_weights

    steering = zone_steering(render.spec, cfg.stft, render.mixture.sample_rate)
    feats = compute_features(mix, steering)
    d_in = 2 * n_ch * n_ch * 2
    if bundle is not None:
        # one bundle may carry both networks; names are namespaced
        crf_params = bundle
        stub_params = bundle
    else:
        crf_params = crf_stub_weights(
            c_in=feats.stacked().shape[-1], n_zones=N_ZONES, n_channels=n_ch, seed=cfg.seed
        )
        stub_params = rnn_bf_stub_weights(
            d_in=d_in, n_zones=N_ZONES, n_channels=n_ch, n_taps=cfg.bf_taps, seed=cfg.seed
        )
    crf_pairs = neural_crf_stub(feats, crf_params, n_zones=N_ZONES, n_channels=n_ch)

    plan = make_band_plan(mix.n_bins, cfg.n_bands, render.mixture.sample_rate)
    analysis, synthesis = projection_filters(plan, cfg.embed_dim, seed=cfg.seed)

    # the shared estimator sees one zone's SCM features at a time; zone picks
    # its own row of the stub's per-zone output head
    w_full = np.zeros(
        (N_ZONES, mix.n_frames, mix.n_bins, cfg.bf_taps, n_ch), dtype=np.complex128
    )
    for z in range(N_ZONES):
        crf_s, crf_z = crf_pairs[z]
        scm_s = compute_scm(apply_crf(mix, echo, crf_s), "speech", z)
        scm_z = compute_scm(apply_crf(mix, echo, crf_z), "noise", z)
        sub_s = analyze(scm_s.features(), plan, analysis)
        sub_n = analyze(scm_z.features(), plan, analysis)
        w_bands = rnn_bf_stub(sub_s, sub_n, stub_params, N_ZONES, n_ch, cfg.bf_taps)
        # (zones, K, T, E, taps, ch) -> flatten tap/channel pairs for synthesis
        zk = w_bands[z]  # (K, T, E, taps, ch)
        k_, t_, e_, taps_, ch_ = zk.shape
        flat = np.stack([zk.real, zk.imag], axis=-1).reshape(k_, t_, e_, taps_ * ch_ * 2)
        full = synthesize(flat[None], plan, synthesis)[0]  # (T, F, taps*ch*2)
        full = full.reshape(t_, mix.n_bins, taps_, ch_, 2)
        w_full[z] = full[..., 0] + 1j * full[..., 1]
    return BeamformerWeights(w_full)
