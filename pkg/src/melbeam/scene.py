"""In-car acoustic scene synthesis with ground-truth component images.

Renders multichannel mixtures as the exact sample-wise sum of per-zone
reverberant speech images, a loudspeaker echo image (with memoryless
nonlinear distortion applied before the room response), and a diffuse-ish
noise bed. Room impulse responses come from the image-source method with
windowed-sinc fractional delays so that sub-sample inter-mic delays survive
on an 11.8 cm array.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DataError
from .signal_io import Waveform, read_wav, write_wav

SPEED_OF_SOUND = 343.0  # m/s
MIC_SPACING = 0.118  # m, fixed 2-element linear array
_SINC_HALF = 4  # 8-tap Hann-windowed sinc interpolation
N_ZONES = 4


@dataclass(frozen=True)
class CabinSpec:
    """Geometry and acoustics of one cabin configuration."""

    dims: tuple
    rt60: float
    mic_array: np.ndarray  # (2, 3) positions
    zones: np.ndarray  # (4, 3) positions, one per speaker zone
    loudspeaker_pos: np.ndarray
    noise_pos: np.ndarray
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        for name in ("mic_array", "zones", "loudspeaker_pos", "noise_pos"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.mic_array.shape != (2, 3):
            raise ValueError(f"mic_array must be (2, 3), got {self.mic_array.shape}")
        if self.zones.shape != (N_ZONES, 3):
            raise ValueError(f"zones must be ({N_ZONES}, 3), got {self.zones.shape}")
        if not 0.0 <= self.rt60 <= 0.6:
            raise ValueError(f"rt60 must lie in [0, 0.6], got {self.rt60}")
        spacing = float(np.linalg.norm(self.mic_array[0] - self.mic_array[1]))
        if abs(spacing - MIC_SPACING) > 1e-9:
            raise ValueError(f"mic spacing must be {MIC_SPACING} m, got {spacing:.9f}")
        dims = np.asarray(self.dims)
        for name in ("mic_array", "zones"):
            pts = np.atleast_2d(getattr(self, name))
            if np.any(pts <= 0.0) or np.any(pts >= dims):
                raise ValueError(f"{name} positions must lie strictly inside the cabin")
        for name in ("loudspeaker_pos", "noise_pos"):
            p = getattr(self, name)
            if np.any(p <= 0.0) or np.any(p >= dims):
                raise ValueError(f"{name} must lie strictly inside the cabin")

    @property
    def n_mics(self) -> int:
        return 2


def default_cabin(rt60: float = 0.3, seed: int = 0) -> CabinSpec:
    """A sedan-like cabin: dashboard mic pair, four seats, door loudspeaker."""
    mic_y = 0.75
    half = MIC_SPACING / 2
    return CabinSpec(
        dims=(2.8, 1.5, 1.3),
        rt60=rt60,
        mic_array=[[0.3, mic_y - half, 1.05], [0.3, mic_y + half, 1.05]],
        zones=[
            [1.0, 0.35, 0.95],
            [1.0, 1.15, 0.95],
            [2.2, 0.35, 0.95],
            [2.2, 1.15, 0.95],
        ],
        loudspeaker_pos=[0.15, 0.25, 0.6],
        noise_pos=[0.12, 0.75, 0.3],
        seed=seed,
    )


@dataclass(frozen=True)
class Rir:
    """Room impulse responses from one source to every mic, shape (M, taps)."""

    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "taps", np.atleast_2d(np.asarray(self.taps, dtype=np.float64)))

    @property
    def n_mics(self) -> int:
        return self.taps.shape[0]

    def onset(self, mic: int = 0, rel_threshold: float = 0.3) -> int:
        """First tap reaching rel_threshold of the peak; tracks the direct path."""
        a = np.abs(self.taps[mic])
        return int(np.argmax(a >= rel_threshold * a.max()))


def sabine_absorption(dims, rt60: float) -> float:
    """Uniform-wall absorption coefficient matching the requested decay time."""
    lx, ly, lz = dims
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 0.161 * volume / (surface * rt60)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(
            f"rt60={rt60} gives absorption {alpha:.3f} outside (0, 1] for dims {dims}"
        )
    return alpha


def _sinc_taps(delays: np.ndarray, amps: np.ndarray, npts: int) -> np.ndarray:
    """Scatter fractionally delayed impulses into an FIR via Hann-windowed sinc."""
    h = np.zeros(npts)
    n0 = np.floor(delays).astype(np.int64)
    for k in range(-_SINC_HALF + 1, _SINC_HALF + 1):
        idx = n0 + k
        x = idx - delays
        w = 0.5 * (1.0 + np.cos(np.pi * x / _SINC_HALF))
        w[np.abs(x) >= _SINC_HALF] = 0.0
        vals = np.sinc(x) * w * amps
        ok = (idx >= 0) & (idx < npts)
        if np.any(ok):
            h += np.bincount(idx[ok], weights=vals[ok], minlength=npts)
    return h


def _image_axes(src, dims, order):
    """Per-axis image coordinates and wall-reflection counts.

    Family one mirrors the source an even number of times (coords s + 2rL,
    2|r| reflections); family two an odd number (coords -s + 2rL, with
    |r-1| hits on the far wall plus |r| on the near wall).
    """
    axes = []
    for i in range(3):
        r = np.arange(-order[i], order[i] + 1)
        coords = np.concatenate([src[i] + 2.0 * r * dims[i], -src[i] + 2.0 * r * dims[i]])
        refl = np.concatenate([2 * np.abs(r), np.abs(r - 1) + np.abs(r)])
        axes.append((coords, refl.astype(np.int64)))
    return axes


def _image_signs(idx, idy, idz, n_refl):
    """Deterministic +-1 phase per reflected image (direct path stays +1).

    A uniform positive-amplitude image lattice piles up coherently in the
    dense late tail and stalls the Schroeder decay; hashing the lattice
    coordinates into a random sign restores the diffuse-tail statistics.
    """
    h = (
        idx.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        ^ idy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        ^ idz.astype(np.uint64) * np.uint64(0x165667B19E3779F9)
    )
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(29)
    signs = np.where((h & np.uint64(1)).astype(bool), 1.0, -1.0)
    signs[n_refl == 0] = 1.0
    return signs


def _iter_image_blocks(axes, mic, max_d):
    """Yield (distances, reflection counts, signs) for image blocks in reach."""
    xc, xr = axes[0]
    yc, yr = axes[1]
    zc, zr = axes[2]
    dy2 = (yc - mic[1]) ** 2
    dz2 = (zc - mic[2]) ** 2
    yz2 = dy2[:, None] + dz2[None, :]
    yz_refl = (yr[:, None] + zr[None, :]).ravel()
    idy2d = np.broadcast_to(np.arange(yc.size, dtype=np.uint64)[:, None], yz2.shape).ravel()
    idz2d = np.broadcast_to(np.arange(zc.size, dtype=np.uint64)[None, :], yz2.shape).ravel()
    for ix in range(xc.size):
        d = np.sqrt((xc[ix] - mic[0]) ** 2 + yz2).ravel()
        keep = (d <= max_d) & (d > 1e-6)
        if not np.any(keep):
            continue
        n_refl = xr[ix] + yz_refl[keep]
        signs = _image_signs(
            np.full(n_refl.size, ix, dtype=np.uint64), idy2d[keep], idz2d[keep], n_refl
        )
        yield d[keep], n_refl, signs


def _calibrate_beta(axes, mic, max_d, rt60: float, beta0: float) -> float:
    """Solve for the wall coefficient whose decay curve crosses -60 dB at rt60.

    Uniform-absorption image lattices decay slower in their late tail than
    the Sabine rate predicts (grazing image chains lose fewer reflections per
    meter), so the coefficient is bisected against an energy histogram over
    (arrival time, reflection count) until the Schroeder crossing matches.
    """
    dt = 1e-3
    n_time = int(np.ceil(max_d / SPEED_OF_SOUND / dt)) + 1
    max_refl = sum(int(refl.max()) for _, refl in axes)
    hist = np.zeros(n_time * (max_refl + 1))
    for d, n_refl, _ in _iter_image_blocks(axes, mic, max_d):
        t_bin = (d / SPEED_OF_SOUND / dt).astype(np.int64)
        energy = 1.0 / (4.0 * np.pi * d) ** 2
        flat = t_bin * (max_refl + 1) + n_refl
        hist += np.bincount(flat, weights=energy, minlength=hist.size)
    hist = hist.reshape(n_time, max_refl + 1)

    def crossing(beta):
        decay = hist @ (beta ** (2.0 * np.arange(max_refl + 1)))
        edc = np.cumsum(decay[::-1])[::-1]
        edc = edc / edc[0]
        below = np.nonzero(edc <= 1e-6)[0]
        return below[0] * dt if below.size else np.inf

    lo, hi = 0.02, 0.999
    if crossing(lo) > rt60:
        raise ValueError(f"cannot realize rt60={rt60}: decay floor too slow")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if crossing(mid) > rt60:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi) if np.isfinite(crossing(0.5 * (lo + hi))) else beta0


def simulate_rir(spec: CabinSpec, source_pos, sample_rate: int = 16000) -> Rir:
    """Image-source RIR from one source position to the spec's mic array.

    rt60 == 0 yields the direct path only. The image order adapts so the
    response covers 1.2x the requested decay time, and the wall coefficient
    is calibrated so the realized Schroeder decay matches rt60.
    """
    src = np.asarray(source_pos, dtype=np.float64)
    dims = np.asarray(spec.dims)
    if np.any(src <= 0.0) or np.any(src >= dims):
        raise ValueError(f"source position {src} lies outside the cabin {spec.dims}")
    mics = spec.mic_array
    direct = np.linalg.norm(mics - src, axis=1)
    if direct.min() < 1e-3:
        raise ValueError("source coincides with a microphone (singular 1/d gain)")

    fs = sample_rate
    tail = 1.2 * spec.rt60
    t_len = tail + direct.max() / SPEED_OF_SOUND + 2.0 * _SINC_HALF / fs
    npts = int(np.ceil(t_len * fs)) + _SINC_HALF

    if spec.rt60 == 0.0:
        h = np.zeros((spec.n_mics, npts))
        for m in range(spec.n_mics):
            d = direct[m]
            h[m] = _sinc_taps(
                np.array([d / SPEED_OF_SOUND * fs]), np.array([1.0 / (4.0 * np.pi * d)]), npts
            )
        return Rir(h, fs)

    alpha = sabine_absorption(spec.dims, spec.rt60)  # validates rt60/dims pairing
    order = np.ceil(SPEED_OF_SOUND * tail / (2.0 * dims)).astype(int)
    axes = _image_axes(src, dims, order)
    max_d = (npts - _SINC_HALF - 1) / fs * SPEED_OF_SOUND

    beta = _calibrate_beta(axes, mics.mean(axis=0), max_d, spec.rt60, np.sqrt(1.0 - alpha))
    max_refl = sum(int(refl.max()) for _, refl in axes)
    beta_pow = beta ** np.arange(max_refl + 1)

    h = np.zeros((spec.n_mics, npts))
    for m in range(spec.n_mics):
        for d, n_refl, signs in _iter_image_blocks(axes, mics[m], max_d):
            amps = signs * beta_pow[n_refl] / (4.0 * np.pi * d)
            h[m] += _sinc_taps(d / SPEED_OF_SOUND * fs, amps, npts)
    return Rir(h, fs)


def schroeder_decay_db(rir: Rir, mic: int = 0) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, normalized to 0 at t=0."""
    h = rir.taps[mic]
    edc = np.cumsum(h[::-1] ** 2)[::-1]
    edc = edc / edc[0]
    return 10.0 * np.log10(np.maximum(edc, 1e-30))


def decay_time_to(rir: Rir, level_db: float = -60.0, mic: int = 0) -> float:
    """Seconds until the Schroeder curve first crosses level_db."""
    edc = schroeder_decay_db(rir, mic)
    below = np.nonzero(edc <= level_db)[0]
    if below.size == 0:
        raise ValueError(f"decay curve never reaches {level_db} dB")
    return float(below[0]) / rir.sample_rate


# ---------------------------------------------------------------------------
# Loudspeaker nonlinearity
# ---------------------------------------------------------------------------


def distort_loudspeaker(x: Waveform, kind: str, params: dict | None = None) -> Waveform:
    """Memoryless loudspeaker nonlinearity, samplewise on a mono signal."""
    if x.n_channels != 1:
        raise ValueError(f"expected mono loudspeaker signal, got {x.n_channels} channels")
    params = params or {}
    s = x.samples
    if kind == "clip":
        threshold = float(params.get("threshold", 0.5))
        if threshold <= 0:
            raise ValueError(f"clip threshold must be positive, got {threshold}")
        out = np.clip(s, -threshold, threshold)
    elif kind == "sigmoid":
        gain = float(params.get("gain", 4.0))
        if gain <= 0:
            raise ValueError(f"sigmoid gain must be positive, got {gain}")
        out = np.tanh(gain * s) / gain
    else:
        raise ValueError(f"unknown distortion kind {kind!r}; expected 'clip' or 'sigmoid'")
    return Waveform(out, x.sample_rate)


# ---------------------------------------------------------------------------
# Scene rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneRender:
    """A rendered mixture plus the exact component images that sum to it."""

    spec: CabinSpec
    mixture: Waveform  # (M, L)
    echo_ref: Waveform | None  # clean loudspeaker signal, (1, L)
    targets: list  # per zone: Waveform (M, L), zeros when the zone is silent
    echo_image: Waveform | None  # (M, L) distorted+convolved+scaled echo
    noise_image: Waveform | None  # (M, L)
    snr_db: float | None
    ser_db: float | None
    seed: int = 0
    active_zones: tuple = field(default_factory=tuple)

    @property
    def n_mics(self) -> int:
        return self.mixture.n_channels

    @property
    def n_samples(self) -> int:
        return self.mixture.n_samples


def _convolve_image(rir: Rir, mono: np.ndarray, length: int) -> np.ndarray:
    out = fftconvolve(rir.taps, mono[None, :], axes=1)
    return out[:, :length]


def _pad_to(x: np.ndarray, length: int) -> np.ndarray:
    if x.shape[-1] >= length:
        return x[..., :length]
    return np.pad(x, ((0, 0), (0, length - x.shape[-1])))


def render_scene(
    spec: CabinSpec,
    sources: dict | None = None,
    echo_src: Waveform | None = None,
    snr_db: float | None = None,
    ser_db: float | None = None,
    seed: int = 0,
    distortion: str = "clip",
    distortion_params: dict | None = None,
    sample_rate: int = 16000,
    n_threads: int = 1,
) -> SceneRender:
    """Render a scene: per-zone reverberant images + echo + noise, summed exactly.

    Arguments:
        sources: mapping zone index -> mono Waveform (absent zones stay silent)
        echo_src: clean loudspeaker signal; distorted, convolved and scaled to ser_db
        snr_db: targets-to-noise power ratio; None or +inf disables the noise bed
        ser_db: targets-to-echo power ratio; required when echo_src is given
        n_threads: parallel RIR synthesis across sources; results are
            bit-identical to the sequential order
    """
    sources = dict(sources or {})
    active = sorted(k for k, v in sources.items() if v is not None)
    if not active:
        raise ValueError("at least one zone source is required")
    if snr_db is not None and np.isfinite(snr_db) and not -40.0 <= snr_db <= 15.0:
        raise ValueError(f"snr_db must lie in [-40, 15] (or be None/inf), got {snr_db}")
    if echo_src is not None and ser_db is not None and not -10.0 <= ser_db <= 10.0:
        raise ValueError(f"ser_db must lie in [-10, 10], got {ser_db}")
    for z in active:
        if z not in range(N_ZONES):
            raise ValueError(f"zone index {z} out of range 0..{N_ZONES - 1}")
        w = sources[z]
        if w.sample_rate != sample_rate:
            raise ValueError(f"zone {z} sample rate {w.sample_rate} != scene rate {sample_rate}")
        if w.n_channels != 1:
            raise ValueError(f"zone {z} source must be mono")
    if echo_src is not None and echo_src.sample_rate != sample_rate:
        raise ValueError("echo source sample rate mismatch")

    length = max(sources[z].n_samples for z in active)
    if echo_src is not None:
        length = max(length, echo_src.n_samples)

    rir_positions = {z: spec.zones[z] for z in active}
    if echo_src is not None:
        rir_positions["loudspeaker"] = spec.loudspeaker_pos
    if snr_db is not None and np.isfinite(snr_db):
        rir_positions["noise"] = spec.noise_pos
    rirs = {}
    if n_threads > 1 and len(rir_positions) > 1:
        from concurrent.futures import ThreadPoolExecutor

        keys = sorted(rir_positions, key=str)
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for key, rir in zip(
                keys, pool.map(lambda k: simulate_rir(spec, rir_positions[k], sample_rate), keys)
            ):
                rirs[key] = rir
    else:
        for key, pos in rir_positions.items():
            rirs[key] = simulate_rir(spec, pos, sample_rate)

    targets = []
    for z in range(N_ZONES):
        if z in sources and sources[z] is not None:
            mono = _pad_to(sources[z].samples, length)[0]
            targets.append(Waveform(_convolve_image(rirs[z], mono, length), sample_rate))
        else:
            targets.append(Waveform(np.zeros((spec.n_mics, length)), sample_rate))
    speech_sum = np.sum([t.samples for t in targets], axis=0)
    p_speech = float(np.mean(speech_sum**2))
    if p_speech <= 0.0:
        raise ValueError("all sources silent; SNR/SER scaling undefined")

    echo_image = None
    echo_ref = None
    if echo_src is not None:
        if ser_db is None:
            raise ValueError("ser_db is required when an echo source is present")
        distorted = distort_loudspeaker(echo_src, distortion, distortion_params)
        img = _convolve_image(rirs["loudspeaker"], _pad_to(distorted.samples, length)[0], length)
        p_echo = float(np.mean(img**2))
        if p_echo <= 0.0:
            raise ValueError("echo source is silent")
        gamma = np.sqrt(p_speech / (p_echo * 10.0 ** (float(ser_db) / 10.0)))
        echo_image = Waveform(gamma * img, sample_rate)
        echo_ref = Waveform(_pad_to(echo_src.samples, length), sample_rate)

    noise_image = None
    if snr_db is not None and np.isfinite(snr_db):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, seed, 0xD1F]))
        base = rng.standard_normal(length)
        shaped = _convolve_image(rirs["noise"], base, length)
        indep = rng.standard_normal((spec.n_mics, length))
        # spatially diffuse floor 10 dB under the point-source component
        for m in range(spec.n_mics):
            p_shaped = np.mean(shaped[m] ** 2)
            indep[m] *= np.sqrt(0.1 * p_shaped / np.mean(indep[m] ** 2))
        noise = shaped + indep
        p_noise = float(np.mean(noise**2))
        nu = np.sqrt(p_speech / (p_noise * 10.0 ** (float(snr_db) / 10.0)))
        noise_image = Waveform(nu * noise, sample_rate)

    mixture = speech_sum.copy()
    if echo_image is not None:
        mixture = mixture + echo_image.samples
    if noise_image is not None:
        mixture = mixture + noise_image.samples

    realized_snr = None
    if noise_image is not None:
        realized_snr = 10.0 * np.log10(p_speech / float(np.mean(noise_image.samples**2)))
    realized_ser = None
    if echo_image is not None:
        realized_ser = 10.0 * np.log10(p_speech / float(np.mean(echo_image.samples**2)))

    return SceneRender(
        spec=spec,
        mixture=Waveform(mixture, sample_rate),
        echo_ref=echo_ref,
        targets=targets,
        echo_image=echo_image,
        noise_image=noise_image,
        snr_db=realized_snr,
        ser_db=realized_ser,
        seed=seed,
        active_zones=tuple(active),
    )


def speech_like(duration: float, sample_rate: int = 16000, seed: int = 0) -> Waveform:
    """Synthetic speech-shaped test signal: modulated lowpassed noise bursts."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    x = rng.standard_normal(n)
    # crude spectral tilt toward speech formant range
    kernel = np.exp(-np.arange(32) / 6.0)
    x = fftconvolve(x, kernel / kernel.sum(), mode="same")
    # syllabic on/off envelope (~3-5 Hz) with silent gaps
    t = np.arange(n) / sample_rate
    env = 0.5 * (1.0 + np.sin(2 * np.pi * (3.0 + rng.uniform(0, 2)) * t + rng.uniform(0, 2 * np.pi)))
    gate_period = int(0.45 * sample_rate)
    gate = np.ones(n)
    for start in range(0, n, gate_period):
        if rng.uniform() < 0.3:
            gate[start : start + gate_period // 2] = 0.0
    x = x * env**2 * gate
    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.7 * x / peak
    return Waveform(x[None, :], sample_rate)


# ---------------------------------------------------------------------------
# On-disk scene bundles
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def write_scene_bundle(render: SceneRender, out_dir) -> dict:
    """Write mixture/echo/targets as float32 WAVs plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    files = {"mixture": "mixture.wav"}
    mix = render.mixture
    peak = float(np.max(np.abs(mix.samples)))
    scale = 1.0 if peak <= 1.0 else 1.0 / (peak * 1.01)

    def _dump(name, wav):
        write_wav(Waveform(wav.samples * scale, wav.sample_rate), os.path.join(out_dir, name), "float32")

    _dump("mixture.wav", mix)
    for z, target in enumerate(render.targets):
        name = f"target_zone{z}.wav"
        _dump(name, target)
        files[f"target_zone{z}"] = name
    if render.echo_ref is not None:
        _dump("echo_ref.wav", render.echo_ref)
        _dump("echo_image.wav", render.echo_image)
        files["echo_ref"] = "echo_ref.wav"
        files["echo_image"] = "echo_image.wav"
    if render.noise_image is not None:
        _dump("noise.wav", render.noise_image)
        files["noise"] = "noise.wav"

    manifest = {
        "files": files,
        "sample_rate": mix.sample_rate,
        "n_samples": mix.n_samples,
        "n_mics": render.n_mics,
        "active_zones": list(render.active_zones),
        "snr_db": render.snr_db,
        "ser_db": render.ser_db,
        "noise_present": render.noise_image is not None,
        "echo_present": render.echo_ref is not None,
        "scale": scale,
        "seed": render.seed,
        "cabin": {
            "dims": list(render.spec.dims),
            "rt60": render.spec.rt60,
            "mic_array": render.spec.mic_array.tolist(),
            "zones": render.spec.zones.tolist(),
            "loudspeaker_pos": render.spec.loudspeaker_pos.tolist(),
            "noise_pos": render.spec.noise_pos.tolist(),
            "seed": render.spec.seed,
        },
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_scene_bundle(bundle_dir) -> SceneRender:
    """Load a bundle written by write_scene_bundle back into a SceneRender."""
    manifest_path = os.path.join(bundle_dir, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise DataError(f"missing {MANIFEST_NAME} in {bundle_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    files = manifest["files"]

    def _load(key):
        return read_wav(os.path.join(bundle_dir, files[key]))

    spec = CabinSpec(**manifest["cabin"])
    mixture = _load("mixture")
    targets = [_load(f"target_zone{z}") for z in range(N_ZONES)]
    echo_ref = _load("echo_ref") if "echo_ref" in files else None
    echo_image = _load("echo_image") if "echo_image" in files else None
    noise_image = _load("noise") if "noise" in files else None
    return SceneRender(
        spec=spec,
        mixture=mixture,
        echo_ref=echo_ref,
        targets=targets,
        echo_image=echo_image,
        noise_image=noise_image,
        snr_db=manifest.get("snr_db"),
        ser_db=manifest.get("ser_db"),
        seed=manifest.get("seed", 0),
        active_zones=tuple(manifest.get("active_zones", ())),
    )
