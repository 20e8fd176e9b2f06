import numpy as np
import pytest

from melbeam.scene import (
    MIC_SPACING,
    SPEED_OF_SOUND,
    CabinSpec,
    decay_time_to,
    default_cabin,
    distort_loudspeaker,
    read_scene_bundle,
    render_scene,
    simulate_rir,
    speech_like,
    write_scene_bundle,
)
from melbeam.signal_io import Waveform

from conftest import mic_centered_cabin

FS = 16000


# ---------------------------------------------------------------------------
# CabinSpec validation
# ---------------------------------------------------------------------------


def test_default_cabin_valid():
    spec = default_cabin()
    assert spec.n_mics == 2
    assert np.isclose(np.linalg.norm(spec.mic_array[0] - spec.mic_array[1]), MIC_SPACING)


def test_cabin_rejects_bad_spacing():
    spec = default_cabin()
    bad = spec.mic_array.copy()
    bad[1, 1] += 0.01
    with pytest.raises(ValueError, match="spacing"):
        CabinSpec(spec.dims, spec.rt60, bad, spec.zones, spec.loudspeaker_pos, spec.noise_pos)


def test_cabin_rejects_rt60_out_of_range():
    spec = default_cabin()
    with pytest.raises(ValueError, match="rt60"):
        CabinSpec(spec.dims, 0.7, spec.mic_array, spec.zones, spec.loudspeaker_pos, spec.noise_pos)


def test_cabin_rejects_outside_positions():
    spec = default_cabin()
    with pytest.raises(ValueError, match="inside"):
        CabinSpec(spec.dims, 0.3, spec.mic_array, spec.zones, [5.0, 0.2, 0.6], spec.noise_pos)


# ---------------------------------------------------------------------------
# RIR geometry
# ---------------------------------------------------------------------------


def test_direct_path_delay_one_meter():
    # source 1 m from mic 0: delay = d/c*fs = 46.65 samples -> peak index 47
    spec = mic_centered_cabin(rt60=0.0)
    mic0 = spec.mic_array[0]
    src = mic0 + np.array([1.0, 0.0, 0.0])
    rir = simulate_rir(spec, src, FS)
    peak = int(np.argmax(np.abs(rir.taps[0])))
    assert peak == 47
    # amplitude follows 1/distance (DC gain of the interpolated impulse)
    gain1 = np.sum(rir.taps[0])
    rir_half = simulate_rir(spec, mic0 + np.array([0.5, 0.0, 0.0]), FS)
    gain_half = np.sum(rir_half.taps[0])
    assert gain_half / gain1 == pytest.approx(2.0, rel=0.01)


def test_source_coincident_with_mic_errors():
    spec = mic_centered_cabin(rt60=0.0)
    with pytest.raises(ValueError, match="coincides"):
        simulate_rir(spec, spec.mic_array[0], FS)


def test_source_outside_room_errors():
    spec = mic_centered_cabin()
    with pytest.raises(ValueError, match="outside"):
        simulate_rir(spec, [3.0, 0.5, 0.5], FS)


def test_rt60_too_small_for_cabin_errors():
    spec = default_cabin(rt60=0.02)
    with pytest.raises(ValueError, match="absorption"):
        simulate_rir(spec, spec.zones[0], FS)


def test_direct_path_delays_random_placements():
    rng = np.random.default_rng(123)
    spec = mic_centered_cabin(rt60=0.0)
    for _ in range(50):
        src = rng.uniform([0.2, 0.2, 0.2], [2.6, 1.3, 1.1])
        if np.linalg.norm(src - spec.mic_array[0]) < 0.1:
            continue
        rir = simulate_rir(spec, src, FS)
        for m in range(2):
            d = np.linalg.norm(src - spec.mic_array[m])
            expected = d / SPEED_OF_SOUND * FS
            peak = int(np.argmax(np.abs(rir.taps[m])))
            assert abs(peak - expected) <= 1.0


def test_schroeder_decay_rt60_06():
    spec = default_cabin(rt60=0.6)
    rir = simulate_rir(spec, spec.zones[2], FS)
    t60 = decay_time_to(rir, -60.0)
    assert t60 == pytest.approx(0.6, rel=0.10)


def test_schroeder_decay_rt60_03():
    spec = default_cabin(rt60=0.3)
    rir = simulate_rir(spec, spec.zones[0], FS)
    t60 = decay_time_to(rir, -60.0)
    assert 0.18 <= t60 <= 0.42


def test_onset_tracks_direct_path_in_reverb():
    spec = default_cabin(rt60=0.3)
    src = spec.zones[1]
    rir = simulate_rir(spec, src, FS)
    d = np.linalg.norm(src - spec.mic_array[0])
    expected = round(d / SPEED_OF_SOUND * FS)
    assert abs(rir.onset(0) - expected) <= 1


def test_tdoa_broadside_and_endfire():
    # array along y: broadside source (same y plane mid-point) has zero TDOA
    spec = mic_centered_cabin(rt60=0.0, axis=1)
    center = spec.mic_array.mean(axis=0)
    broadside = center + np.array([1.0, 0.0, 0.0])
    rir = simulate_rir(spec, broadside, FS)
    assert abs(rir.onset(0) - rir.onset(1)) == 0

    endfire = center + np.array([0.0, 0.7, 0.0])
    rir = simulate_rir(spec, endfire, FS)
    expected = MIC_SPACING / SPEED_OF_SOUND * FS  # 5.5 samples
    tdoa = rir.onset(0) - rir.onset(1)
    assert abs(tdoa - expected) <= 1.0


# ---------------------------------------------------------------------------
# Loudspeaker distortion
# ---------------------------------------------------------------------------


def test_clip_definition():
    w = Waveform(np.array([[0.2, 0.8, -0.9]]), FS)
    out = distort_loudspeaker(w, "clip", {"threshold": 0.5})
    assert np.allclose(out.samples, [[0.2, 0.5, -0.5]])


def test_sigmoid_odd_symmetry():
    rng = np.random.default_rng(0)
    x = Waveform(rng.uniform(-1, 1, size=(1, 500)), FS)
    neg = Waveform(-x.samples, FS)
    assert np.allclose(
        distort_loudspeaker(neg, "sigmoid").samples,
        -distort_loudspeaker(x, "sigmoid").samples,
    )


def test_sigmoid_small_signal_linear():
    x = Waveform(np.linspace(-0.01, 0.01, 101)[None], FS)
    out = distort_loudspeaker(x, "sigmoid").samples
    nonzero = np.abs(x.samples) > 1e-6
    rel = np.abs(out[nonzero] / x.samples[nonzero] - 1.0)
    assert np.all(rel <= 0.01)


def test_distortion_errors():
    w = Waveform(np.zeros((1, 10)), FS)
    with pytest.raises(ValueError, match="unknown"):
        distort_loudspeaker(w, "cubic")
    with pytest.raises(ValueError, match="threshold"):
        distort_loudspeaker(w, "clip", {"threshold": -1})
    with pytest.raises(ValueError, match="mono"):
        distort_loudspeaker(Waveform(np.zeros((2, 10)), FS), "clip")


# ---------------------------------------------------------------------------
# Scene rendering
# ---------------------------------------------------------------------------


def test_single_speaker_clean_mixture_equals_image():
    spec = default_cabin(rt60=0.3, seed=1)
    src = speech_like(1.0, FS, seed=2)
    render = render_scene(spec, {0: src}, snr_db=None)
    assert np.array_equal(render.mixture.samples, render.targets[0].samples)
    for z in (1, 2, 3):
        assert np.all(render.targets[z].samples == 0.0)


def test_requested_snr_realized():
    spec = default_cabin(rt60=0.3, seed=3)
    src = speech_like(1.0, FS, seed=4)
    render = render_scene(spec, {1: src}, snr_db=0.0, seed=5)
    p_speech = np.mean(render.targets[1].samples ** 2)
    p_noise = np.mean(render.noise_image.samples ** 2)
    assert 10 * np.log10(p_speech / p_noise) == pytest.approx(0.0, abs=0.01)
    assert render.snr_db == pytest.approx(0.0, abs=0.01)


def test_requested_ser_realized_with_clip():
    spec = default_cabin(rt60=0.3, seed=6)
    src = speech_like(1.0, FS, seed=7)
    echo = speech_like(1.0, FS, seed=8)
    render = render_scene(spec, {0: src}, echo_src=echo, ser_db=-10.0)
    p_speech = np.mean(render.targets[0].samples ** 2)
    p_echo = np.mean(render.echo_image.samples ** 2)
    assert 10 * np.log10(p_echo / p_speech) == pytest.approx(10.0, abs=0.01)


def test_mixture_is_exact_component_sum():
    spec = default_cabin(rt60=0.15, seed=9)
    render = render_scene(
        spec,
        {0: speech_like(0.8, FS, 10), 2: speech_like(0.8, FS, 11)},
        echo_src=speech_like(0.8, FS, 12),
        snr_db=5.0,
        ser_db=0.0,
        seed=13,
    )
    total = sum(t.samples for t in render.targets)
    total = total + render.echo_image.samples + render.noise_image.samples
    assert np.array_equal(render.mixture.samples, total)


def test_render_determinism():
    spec = default_cabin(rt60=0.2, seed=20)
    kwargs = dict(snr_db=3.0, seed=21)
    a = render_scene(spec, {0: speech_like(0.5, FS, 22)}, **kwargs)
    b = render_scene(spec, {0: speech_like(0.5, FS, 22)}, **kwargs)
    assert np.array_equal(a.mixture.samples, b.mixture.samples)


def test_render_rejects_silent_and_mismatched():
    spec = default_cabin(rt60=0.2)
    with pytest.raises(ValueError, match="at least one"):
        render_scene(spec, {}, snr_db=0.0)
    silent = Waveform(np.zeros((1, 1000)), FS)
    with pytest.raises(ValueError, match="silent"):
        render_scene(spec, {0: silent}, snr_db=0.0)
    wrong_rate = Waveform(np.zeros((1, 1000)), 8000)
    with pytest.raises(ValueError, match="sample rate"):
        render_scene(spec, {0: wrong_rate}, snr_db=0.0)


def test_render_rejects_out_of_range_levels():
    spec = default_cabin(rt60=0.2)
    src = speech_like(0.3, FS, seed=90)
    with pytest.raises(ValueError, match="snr_db"):
        render_scene(spec, {0: src}, snr_db=20.0)
    with pytest.raises(ValueError, match="ser_db"):
        render_scene(spec, {0: src}, echo_src=speech_like(0.3, FS, 91), snr_db=None, ser_db=-15.0)


def test_render_threads_bit_identical():
    spec = default_cabin(rt60=0.15, seed=95)
    kwargs = dict(
        echo_src=speech_like(0.5, FS, 97), snr_db=5.0, ser_db=0.0, seed=96
    )
    seq = render_scene(spec, {0: speech_like(0.5, FS, 98)}, **kwargs)
    par = render_scene(spec, {0: speech_like(0.5, FS, 98)}, n_threads=4, **kwargs)
    assert np.array_equal(seq.mixture.samples, par.mixture.samples)


# ---------------------------------------------------------------------------
# Bundles
# ---------------------------------------------------------------------------


def test_bundle_roundtrip(tmp_path):
    spec = default_cabin(rt60=0.2, seed=30)
    render = render_scene(
        spec,
        {0: speech_like(0.6, FS, 31), 3: speech_like(0.6, FS, 32)},
        echo_src=speech_like(0.6, FS, 33),
        snr_db=10.0,
        ser_db=-5.0,
        seed=34,
    )
    manifest = write_scene_bundle(render, tmp_path / "scene")
    assert manifest["active_zones"] == [0, 3]
    back = read_scene_bundle(tmp_path / "scene")
    assert back.n_mics == 2
    assert back.n_samples == render.n_samples
    scale = manifest["scale"]
    assert np.allclose(back.mixture.samples, render.mixture.samples * scale, atol=1e-6)
    assert back.ser_db == pytest.approx(-5.0, abs=0.01)
    assert back.active_zones == (0, 3)


def test_bundle_no_noise_file_when_snr_inf(tmp_path):
    spec = default_cabin(rt60=0.2, seed=40)
    render = render_scene(spec, {1: speech_like(0.4, FS, 41)}, snr_db=None)
    manifest = write_scene_bundle(render, tmp_path / "clean")
    assert "noise" not in manifest["files"]
    assert manifest["noise_present"] is False
    assert not (tmp_path / "clean" / "noise.wav").exists()
