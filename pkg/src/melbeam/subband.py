"""Mel-scale non-uniform band partition and per-band analysis/synthesis maps.

The band plan splits the one-sided spectrum into K contiguous bands whose
edges are uniform on the mel axis, so low frequencies get narrow bands and
highs get wide ones. Each band owns a linear analysis map (band bins -> E
embedding dims) and a synthesis map back; with orthonormal analysis and
pseudo-inverse synthesis the round trip is exact whenever E covers the
widest band.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .weights import WeightBundle

EMBED_DEFAULT = 32


def hz_to_mel(f_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class BandPlan:
    """Monotone partition of F bins into K contiguous non-empty bands."""

    edges: tuple
    n_bins: int
    sample_rate: int = 16000

    def __post_init__(self):
        edges = tuple(int(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if edges[0] != 0 or edges[-1] != self.n_bins:
            raise ValueError(f"edges must span [0, {self.n_bins}], got {edges[0]}..{edges[-1]}")
        widths = np.diff(edges)
        if np.any(widths < 1):
            raise ValueError("every band must hold at least one bin")
        k = len(edges) - 1
        if k >= 2:
            lo = widths[: k // 2].mean()
            hi = widths[(k + 1) // 2 :].mean()
            if hi < lo:
                raise ValueError("band widths must widen toward high frequencies")

    @property
    def n_bands(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(np.asarray(self.edges))

    def band_slice(self, k: int) -> slice:
        return slice(self.edges[k], self.edges[k + 1])

    def to_manifest(self) -> str:
        return json.dumps(
            {"K": self.n_bands, "F": self.n_bins, "sample_rate": self.sample_rate, "edges": list(self.edges)},
            sort_keys=True,
        )

    @classmethod
    def from_manifest(cls, text: str) -> "BandPlan":
        d = json.loads(text)
        return cls(edges=tuple(d["edges"]), n_bins=d["F"], sample_rate=d["sample_rate"])


def make_band_plan(n_bins: int, n_bands: int, sample_rate: int = 16000) -> BandPlan:
    """Mel-uniform band edges over the one-sided spectrum.

    K+1 points uniform on the mel axis up to mel(fs/2) are mapped back to Hz,
    scaled onto [0, F-1] and rounded half-up; the integer edges are then
    repaired to a strict partition: a left-to-right pass pushes colliding
    edges up one bin, and a right-to-left pass clamps any that overshot so
    the top bands stay non-empty (the K=F case degenerates to the identity
    partition).
    """
    if not 1 <= n_bands <= n_bins:
        raise ValueError(f"need 1 <= K <= F, got K={n_bands}, F={n_bins}")
    nyquist = sample_rate / 2.0
    m_max = float(hz_to_mel(nyquist))
    edges = np.zeros(n_bands + 1, dtype=np.int64)
    edges[n_bands] = n_bins
    for j in range(1, n_bands):
        hz = float(mel_to_hz(m_max * j / n_bands))
        edges[j] = int(np.floor(hz / nyquist * (n_bins - 1) + 0.5))
    for j in range(1, n_bands + 1):
        if edges[j] <= edges[j - 1]:
            edges[j] = edges[j - 1] + 1
    for j in range(n_bands - 1, 0, -1):
        if edges[j] >= edges[j + 1]:
            edges[j] = edges[j + 1] - 1
    return BandPlan(edges=tuple(int(e) for e in edges), n_bins=n_bins, sample_rate=sample_rate)


@dataclass(frozen=True)
class AnalysisFilters:
    """Per-band linear maps along the frequency axis, each (E, band width)."""

    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(np.asarray(m, dtype=np.float64) for m in self.maps))

    @property
    def embed_dim(self) -> int:
        return self.maps[0].shape[0]

    def check(self, plan: BandPlan) -> None:
        if len(self.maps) != plan.n_bands:
            raise ValueError(f"{len(self.maps)} analysis maps for {plan.n_bands} bands")
        for k, m in enumerate(self.maps):
            if m.shape != (self.embed_dim, plan.widths[k]):
                raise ValueError(
                    f"analysis map {k} has shape {m.shape}, expected ({self.embed_dim}, {plan.widths[k]})"
                )


@dataclass(frozen=True)
class SynthesisFilters:
    """Per-band linear maps from embedding back to band bins, each (width, E)."""

    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(np.asarray(m, dtype=np.float64) for m in self.maps))

    @property
    def embed_dim(self) -> int:
        return self.maps[0].shape[1]

    def check(self, plan: BandPlan) -> None:
        if len(self.maps) != plan.n_bands:
            raise ValueError(f"{len(self.maps)} synthesis maps for {plan.n_bands} bands")
        for k, m in enumerate(self.maps):
            if m.shape != (plan.widths[k], self.embed_dim):
                raise ValueError(
                    f"synthesis map {k} has shape {m.shape}, expected ({plan.widths[k]}, {self.embed_dim})"
                )


def projection_filters(plan: BandPlan, embed_dim: int | None = None, seed: int = 0):
    """Seeded orthonormal analysis maps with pseudo-inverse synthesis.

    With embed_dim >= the widest band (the default) the pair is an exact
    round trip; smaller embeddings give the best rank-E projection.
    """
    if embed_dim is None:
        embed_dim = int(plan.widths.max())
    rng = np.random.default_rng(seed)
    analysis = []
    synthesis = []
    for k in range(plan.n_bands):
        width = int(plan.widths[k])
        g = rng.standard_normal((max(embed_dim, width), min(embed_dim, width)))
        q, _ = np.linalg.qr(g)
        q = q[:, : min(embed_dim, width)]
        if embed_dim >= width:
            a = q[:embed_dim, :width]  # orthonormal columns
        else:
            a = q[:width, :embed_dim].T  # orthonormal rows
        analysis.append(a)
        synthesis.append(np.linalg.pinv(a))
    return AnalysisFilters(tuple(analysis)), SynthesisFilters(tuple(synthesis))


def passthrough_filters(plan: BandPlan):
    """Identity analysis/synthesis for single-bin bands (requires K == F)."""
    if plan.n_bands != plan.n_bins:
        raise ValueError("passthrough filters need one band per bin")
    ones = tuple(np.ones((1, 1)) for _ in range(plan.n_bands))
    return AnalysisFilters(ones), SynthesisFilters(ones)


@dataclass(frozen=True)
class SubbandFeature:
    """Band-projected features, shape (K, T, E, D)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        object.__setattr__(self, "data", data)
        if data.ndim != 4:
            raise ValueError(f"data must be (K, T, E, D), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("subband features must be finite")

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.data.shape[2]


def analyze(feat: np.ndarray, plan: BandPlan, filters: AnalysisFilters) -> SubbandFeature:
    """Project (T, F, D) features into per-band embeddings (K, T, E, D)."""
    feat = np.asarray(feat)
    if feat.ndim != 3 or feat.shape[1] != plan.n_bins:
        raise ValueError(f"features must be (T, {plan.n_bins}, D), got {feat.shape}")
    filters.check(plan)
    n_frames, _, depth = feat.shape
    out = np.empty((plan.n_bands, n_frames, filters.embed_dim, depth), dtype=feat.dtype)
    for k in range(plan.n_bands):
        band = feat[:, plan.band_slice(k), :]  # (T, f_k, D)
        out[k] = np.einsum("ef,tfd->ted", filters.maps[k], band)
    return SubbandFeature(out)


def synthesize(w_sub: np.ndarray, plan: BandPlan, filters: SynthesisFilters) -> np.ndarray:
    """Map per-band embedded values (..., K, T, E, D) back to (..., T, F, D).

    Band outputs are concatenated in band order along the frequency axis;
    leading axes (zones) pass through untouched.
    """
    w_sub = np.asarray(w_sub)
    if w_sub.ndim < 4:
        raise ValueError(f"w_sub must be (..., K, T, E, D), got {w_sub.shape}")
    if w_sub.shape[-4] != plan.n_bands:
        raise ValueError(f"w_sub has {w_sub.shape[-4]} bands, plan has {plan.n_bands}")
    filters.check(plan)
    if filters.embed_dim != w_sub.shape[-2]:
        raise ValueError(
            f"w_sub embedding dim {w_sub.shape[-2]} does not match filters ({filters.embed_dim})"
        )
    lead = w_sub.shape[:-4]
    n_frames, depth = w_sub.shape[-3], w_sub.shape[-1]
    out = np.empty(lead + (n_frames, plan.n_bins, depth), dtype=w_sub.dtype)
    for k in range(plan.n_bands):
        band = w_sub[..., k, :, :, :]  # (..., T, E, D)
        out[..., plan.band_slice(k), :] = np.einsum("fe,...ted->...tfd", filters.maps[k], band)
    return out


def save_filters(analysis: AnalysisFilters, synthesis: SynthesisFilters, path) -> None:
    bundle = WeightBundle()
    for k, m in enumerate(analysis.maps):
        bundle[f"subband/analysis_{k:04d}"] = m
    for k, m in enumerate(synthesis.maps):
        bundle[f"subband/synthesis_{k:04d}"] = m
    bundle.save(path)


def load_filters(path, plan: BandPlan):
    bundle = WeightBundle.load(path)
    analysis = AnalysisFilters(
        tuple(bundle[f"subband/analysis_{k:04d}"] for k in range(plan.n_bands))
    )
    synthesis = SynthesisFilters(
        tuple(bundle[f"subband/synthesis_{k:04d}"] for k in range(plan.n_bands))
    )
    analysis.check(plan)
    synthesis.check(plan)
    return analysis, synthesis
