import math

import numpy as np
import pytest

from melbeam.subband import (
    AnalysisFilters,
    BandPlan,
    analyze,
    hz_to_mel,
    load_filters,
    make_band_plan,
    mel_to_hz,
    passthrough_filters,
    projection_filters,
    save_filters,
    synthesize,
)

F = 257
FS = 16000


def brute_force_edges(n_bins, n_bands, fs):
    """Independent plain-math reimplementation of the edge rule."""
    nyq = fs / 2.0
    m_max = 2595.0 * math.log10(1.0 + nyq / 700.0)
    edges = [0] * (n_bands + 1)
    edges[n_bands] = n_bins
    for j in range(1, n_bands):
        hz = 700.0 * (10.0 ** (m_max * j / n_bands / 2595.0) - 1.0)
        edges[j] = int(math.floor(hz / nyq * (n_bins - 1) + 0.5))
    for j in range(1, n_bands + 1):
        if edges[j] <= edges[j - 1]:
            edges[j] = edges[j - 1] + 1
    for j in range(n_bands - 1, 0, -1):
        if edges[j] >= edges[j + 1]:
            edges[j] = edges[j + 1] - 1
    return edges


# frozen outputs of brute_force_edges (verified by hand against the mel formula)
GOLDEN_EDGES = {
    8: [0, 8, 20, 35, 57, 86, 126, 181, 257],
    16: [0, 4, 8, 14, 20, 27, 35, 45, 57, 70, 86, 104, 126, 151, 181, 215, 257],
    32: [0, 2, 4, 6, 8, 11, 14, 16, 20, 23, 27, 31, 35, 40, 45, 51, 57, 63, 70, 78,
         86, 95, 104, 115, 126, 138, 151, 165, 181, 197, 215, 235, 257],
    64: [0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 12, 14, 15, 16, 18, 20, 21, 23, 25, 27,
         29, 31, 33, 35, 38, 40, 42, 45, 48, 51, 54, 57, 60, 63, 66, 70, 74, 78, 82,
         86, 90, 95, 99, 104, 109, 115, 120, 126, 132, 138, 144, 151, 158, 165, 173,
         181, 189, 197, 206, 215, 225, 235, 245, 257],
}


# ---------------------------------------------------------------------------
# band plan
# ---------------------------------------------------------------------------


def test_mel_formula_round_trip():
    f = np.array([0.0, 259.2, 1000.0, 8000.0])
    assert np.allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)
    assert hz_to_mel(1000.0) == pytest.approx(999.99, abs=0.1)


@pytest.mark.parametrize("k", [8, 16, 32, 64])
def test_band_plan_matches_brute_force(k):
    plan = make_band_plan(F, k, FS)
    assert list(plan.edges) == brute_force_edges(F, k, FS)
    assert list(plan.edges) == GOLDEN_EDGES[k]


@pytest.mark.parametrize("k", [1, 2, 8, 16, 32, 64, 100, 256, 257])
def test_band_plan_partition_properties(k):
    plan = make_band_plan(F, k, FS)
    assert plan.edges[0] == 0 and plan.edges[-1] == F
    widths = plan.widths
    assert widths.sum() == F
    assert widths.min() >= 1
    # non-decreasing within one bin of rounding slack
    assert np.all(widths[1:] >= widths[:-1] - 1)


def test_band_plan_degenerate_cases():
    assert make_band_plan(F, 1, FS).edges == (0, F)
    plan = make_band_plan(F, F, FS)
    assert np.all(plan.widths == 1)


def test_band_plan_k8_anchor_values():
    plan = make_band_plan(F, 8, FS)
    assert plan.edges[1] == 8  # ~259 Hz
    assert plan.widths[-1] >= 4 * plan.widths[0]


def test_band_plan_rejects_bad_k():
    with pytest.raises(ValueError, match="K"):
        make_band_plan(F, 0, FS)
    with pytest.raises(ValueError, match="K"):
        make_band_plan(F, F + 1, FS)


def test_band_plan_manifest_roundtrip():
    plan = make_band_plan(F, 16, FS)
    back = BandPlan.from_manifest(plan.to_manifest())
    assert back == plan


def test_band_plan_validates_edges():
    with pytest.raises(ValueError, match="span"):
        BandPlan(edges=(0, 10, 200), n_bins=F)
    with pytest.raises(ValueError, match="at least one"):
        BandPlan(edges=(0, 5, 5, F), n_bins=F)
    with pytest.raises(ValueError, match="widen"):
        BandPlan(edges=(0, 200, 250, 255, F), n_bins=F)


# ---------------------------------------------------------------------------
# analyze / synthesize
# ---------------------------------------------------------------------------


def test_passthrough_identity():
    plan = make_band_plan(F, F, FS)
    analysis, synthesis = passthrough_filters(plan)
    rng = np.random.default_rng(1)
    feat = rng.standard_normal((6, F, 5))
    sub = analyze(feat, plan, analysis)
    assert sub.data.shape == (F, 6, 1, 5)
    assert np.allclose(sub.data[:, :, 0, :].transpose(1, 0, 2), feat)
    back = synthesize(sub.data, plan, synthesis)
    assert np.allclose(back, feat)


def test_zero_filters_zero_output():
    plan = make_band_plan(F, 8, FS)
    zeros = AnalysisFilters(tuple(np.zeros((4, w)) for w in plan.widths))
    feat = np.ones((3, F, 2))
    assert np.all(analyze(feat, plan, zeros).data == 0.0)


def test_averaging_filters_give_band_means():
    plan = make_band_plan(F, 8, FS)
    avg = AnalysisFilters(tuple(np.full((1, w), 1.0 / w) for w in plan.widths))
    rng = np.random.default_rng(2)
    feat = rng.standard_normal((4, F, 3))
    sub = analyze(feat, plan, avg)
    for k in range(8):
        expected = feat[:, plan.band_slice(k), :].mean(axis=1)
        assert np.allclose(sub.data[k, :, 0, :], expected)


@pytest.mark.parametrize("k", [8, 16, 32, 64])
def test_pseudo_inverse_round_trip(k):
    plan = make_band_plan(F, k, FS)
    analysis, synthesis = projection_filters(plan, seed=3)
    rng = np.random.default_rng(4)
    feat = rng.standard_normal((5, F, 7)) + 1j * rng.standard_normal((5, F, 7))
    back = synthesize(analyze(feat, plan, analysis).data, plan, synthesis)
    err = np.linalg.norm(back - feat) / np.linalg.norm(feat)
    assert err <= 1e-6


def test_round_trip_with_leading_zone_axis():
    plan = make_band_plan(F, 32, FS)
    analysis, synthesis = projection_filters(plan, seed=5)
    rng = np.random.default_rng(6)
    feat = rng.standard_normal((4, 3, F, 30))  # (zones, T, F, D)
    sub = np.stack([analyze(feat[z], plan, analysis).data for z in range(4)])
    back = synthesize(sub, plan, synthesis)
    assert back.shape == (4, 3, F, 30)
    assert np.allclose(back, feat, atol=1e-9)


def test_band_isolation_impulse():
    plan = make_band_plan(F, 16, FS)
    analysis, synthesis = projection_filters(plan, seed=7)
    feat = np.zeros((2, F, 1))
    k_probe = 5
    feat[:, plan.band_slice(k_probe), :] = 1.0
    sub = analyze(feat, plan, analysis)
    others = [k for k in range(16) if k != k_probe]
    assert np.all(sub.data[others] == 0.0)
    back = synthesize(sub.data, plan, synthesis)
    outside = np.ones(F, dtype=bool)
    outside[plan.band_slice(k_probe)] = False
    assert np.all(back[:, outside, :] == 0.0)


def test_zero_subband_weights_zero_fullband():
    plan = make_band_plan(F, 8, FS)
    _, synthesis = projection_filters(plan, seed=8)
    zero = np.zeros((8, 4, synthesis.embed_dim, 6))
    assert np.all(synthesize(zero, plan, synthesis) == 0.0)


def test_shape_mismatches_raise():
    plan = make_band_plan(F, 8, FS)
    analysis, synthesis = projection_filters(plan, seed=9)
    with pytest.raises(ValueError, match="features"):
        analyze(np.zeros((3, F + 1, 2)), plan, analysis)
    with pytest.raises(ValueError, match="bands"):
        synthesize(np.zeros((9, 3, analysis.embed_dim, 2)), plan, synthesis)
    wrong = AnalysisFilters(tuple(np.zeros((4, w + 1)) for w in plan.widths))
    with pytest.raises(ValueError, match="analysis map"):
        analyze(np.zeros((3, F, 2)), plan, wrong)


def test_filters_bundle_roundtrip(tmp_path):
    plan = make_band_plan(F, 16, FS)
    analysis, synthesis = projection_filters(plan, seed=10)
    path = tmp_path / "filters.bin"
    save_filters(analysis, synthesis, path)
    a2, s2 = load_filters(path, plan)
    for m1, m2 in zip(analysis.maps, a2.maps):
        assert np.array_equal(m1, m2)
    for m1, m2 in zip(synthesis.maps, s2.maps):
        assert np.array_equal(m1, m2)


def test_projection_filters_deterministic():
    plan = make_band_plan(F, 8, FS)
    a1, s1 = projection_filters(plan, seed=11)
    a2, s2 = projection_filters(plan, seed=11)
    for m1, m2 in zip(a1.maps, a2.maps):
        assert np.array_equal(m1, m2)
