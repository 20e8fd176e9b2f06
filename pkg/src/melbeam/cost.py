"""Analytic multiply-accumulate cost model for NB / SB / FB processing modes.

Counts are exact integers per second of audio. The weight-estimation network
is the mode-dependent part: narrow-band runs one instance per frequency bin,
subband one per band (plus the analysis/synthesis projection cost), and
full-band a single instance. Per-bin stages (features, cRFs, SCMs, applying
the weights) cost the same in every mode. One complex multiply counts as 4
MACs; real multiplies count 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .subband import make_band_plan

MODES = ("NB", "SB", "FB")


@dataclass(frozen=True)
class PipelineShapes:
    """Dimensions that determine the MAC counts."""

    n_bins: int = 257
    sample_rate: int = 16000
    hop: int = 256
    n_mics: int = 2
    n_zones: int = 4
    embed_dim: int = 32
    crf_taps: int = 3
    bf_taps: int = 5
    feature_pairs: int = 1
    estimator_hidden: int = 64
    estimator_zone_dim: int = 32

    @property
    def n_channels(self) -> int:
        return self.n_mics + 1

    @property
    def d_in(self) -> int:
        # flattened real+imaginary SCM entries per TF bin
        return 2 * self.n_channels * self.n_channels

    @property
    def d_out(self) -> int:
        # real weight coefficients per TF bin (all zones, taps, channels)
        return self.n_zones * self.n_channels * self.bf_taps * 2

    @property
    def frames_per_second(self) -> int:
        return self.sample_rate // self.hop

    def estimator_instance_macs(self) -> int:
        """Per-frame cost of one weight-estimator instance (identical dims
        in every mode: the mode only changes how many instances run)."""
        d_net = 2 * self.d_in  # speech + noise feature vectors
        h = self.estimator_hidden
        dz = self.estimator_zone_dim
        gru = 3 * (d_net * h + h * h + h)
        head = h * self.n_zones * dz
        attention = self.n_zones * 3 * dz * dz  # q/k/v projections
        attention += 2 * self.n_zones * self.n_zones * dz  # scores + mixing
        attention += self.n_zones * dz * dz  # output projection
        out = self.n_zones * dz * self.n_channels * self.bf_taps * 2
        return gru + head + attention + out


@dataclass(frozen=True)
class CostReport:
    """MAC totals per second with a per-stage breakdown."""

    mode: str
    n_bands: int | None
    macs_per_second: int
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if any(v < 0 for v in self.breakdown.values()):
            raise ValueError("stage counts must be non-negative")
        if sum(self.breakdown.values()) != self.macs_per_second:
            raise ValueError("breakdown does not sum to the reported total")

    @property
    def gmacs_per_second(self) -> float:
        return self.macs_per_second / 1e9

    def label(self) -> str:
        return f"SB({self.n_bands})" if self.mode == "SB" else self.mode

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "n_bands": self.n_bands,
                "macs_per_second": self.macs_per_second,
                "gmacs_per_second": self.gmacs_per_second,
                "breakdown": self.breakdown,
            },
            sort_keys=True,
        )


def count_macs(mode: str, shapes: PipelineShapes, n_bands: int | None = None) -> CostReport:
    """Analytic per-second MAC count for one processing mode.

    SB mode requires n_bands; its band plan fixes the projection widths
    (their sum is always F, so the transform cost is K-independent).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    s = shapes
    f = s.n_bins
    z = s.n_zones
    c = s.n_channels
    p = s.feature_pairs

    per_frame = {}
    # log power (square + floor), phase differences, per-zone coherence
    per_frame["features"] = f * (2 + 4 * p + 2 * z * p)
    # speech + noise cRFs per zone, complex taps on every stacked channel
    per_frame["crf"] = z * 2 * c * s.crf_taps * 4 * f
    # rank-1 outer products plus layer normalization of the flattened entries
    per_frame["scm"] = z * 2 * (c * c * 4 + 4 * s.d_in) * f
    # weight estimator instances per frame depend on the mode
    instance = s.estimator_instance_macs()
    if mode == "NB":
        per_frame["weight_estimator"] = f * instance
        per_frame["bandplan_transform"] = 0
    elif mode == "FB":
        per_frame["weight_estimator"] = instance
        per_frame["bandplan_transform"] = 0
    else:
        if n_bands is None:
            raise ValueError("SB mode requires n_bands")
        plan = make_band_plan(f, n_bands, s.sample_rate)
        sum_width_e = int(plan.widths.sum()) * s.embed_dim  # = F * E
        per_frame["weight_estimator"] = n_bands * instance
        per_frame["bandplan_transform"] = 2 * z * sum_width_e * s.d_in + sum_width_e * s.d_out
    # multi-frame filter-and-sum per zone
    per_frame["apply"] = z * s.bf_taps * c * 4 * f

    fps = s.frames_per_second
    breakdown = {stage: count * fps for stage, count in per_frame.items()}
    total = sum(breakdown.values())
    return CostReport(
        mode=mode,
        n_bands=n_bands if mode == "SB" else None,
        macs_per_second=total,
        breakdown=breakdown,
    )


def cost_sweep(shapes: PipelineShapes, sb_bands=(8, 16, 32, 64)) -> list:
    """Reports for NB, FB and the requested subband configurations."""
    reports = [count_macs("NB", shapes), count_macs("FB", shapes)]
    reports.extend(count_macs("SB", shapes, k) for k in sb_bands)
    return reports


def format_cost_table(reports) -> str:
    """Plain-text comparison table, most expensive first."""
    ordered = sorted(reports, key=lambda r: r.macs_per_second, reverse=True)
    stages = list(ordered[0].breakdown)
    header = ["config", "MACs/s", "GMACs/s"] + stages
    rows = [header]
    for r in ordered:
        rows.append(
            [r.label(), str(r.macs_per_second), f"{r.gmacs_per_second:.4f}"]
            + [str(r.breakdown[s]) for s in stages]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
