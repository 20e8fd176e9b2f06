"""Command-line front end: scene simulation, separation, metrics, cost reports.

Subcommands read a single INI-style config whose sections mirror the library
modules ([stft], [scene], [signals], [separate], [output]); command-line
flags override config values, and the MELBEAM_OUT environment variable
overrides the default output root. Exit codes: 0 success, 2 configuration
error, 3 runtime data error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys

import numpy as np

from .beamformer import SEPARATION_MODES, SeparationConfig, separate
from .cost import PipelineShapes, cost_sweep, format_cost_table
from .errors import ConfigError, DataError, MelbeamError
from .metrics import loss_value, sdr, si_snr
from .scene import (
    CabinSpec,
    default_cabin,
    read_scene_bundle,
    render_scene,
    speech_like,
    write_scene_bundle,
)
from .signal_io import StftConfig, Waveform, read_wav, write_wav

OUT_ENV_VAR = "MELBEAM_OUT"


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _parse_vector(text: str, key: str):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"[{key}] expects space-separated numbers, got {text!r}") from None


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from None
    return parser


def stft_from_config(cfg: configparser.ConfigParser) -> StftConfig:
    sec = cfg["stft"] if cfg.has_section("stft") else {}
    try:
        return StftConfig(
            fft_size=int(sec.get("fft_size", 512)),
            window_len=int(sec.get("window_len", 512)),
            hop=int(sec.get("hop", 256)),
            window=sec.get("window", "hann"),
        )
    except ValueError as exc:
        raise ConfigError(f"[stft] {exc}") from None


def cabin_from_config(cfg: configparser.ConfigParser, seed_override=None) -> CabinSpec:
    if not cfg.has_section("scene"):
        return default_cabin(seed=seed_override or 0)
    sec = cfg["scene"]
    base = default_cabin()
    try:
        dims = _parse_vector(sec.get("dims", "2.8 1.5 1.3"), "scene.dims")
        rt60 = float(sec.get("rt60", "0.3"))
        zones = [
            _parse_vector(sec[f"zone{z}"], f"scene.zone{z}") if f"zone{z}" in sec else base.zones[z]
            for z in range(4)
        ]
        mic = (
            np.array([_parse_vector(sec["mic0"], "scene.mic0"), _parse_vector(sec["mic1"], "scene.mic1")])
            if "mic0" in sec and "mic1" in sec
            else base.mic_array
        )
        loudspeaker = (
            _parse_vector(sec["loudspeaker"], "scene.loudspeaker")
            if "loudspeaker" in sec
            else base.loudspeaker_pos
        )
        noise_pos = _parse_vector(sec["noise"], "scene.noise") if "noise" in sec else base.noise_pos
        seed = int(sec.get("seed", "0")) if seed_override is None else seed_override
        return CabinSpec(
            dims=tuple(dims),
            rt60=rt60,
            mic_array=mic,
            zones=zones,
            loudspeaker_pos=loudspeaker,
            noise_pos=noise_pos,
            seed=seed,
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"[scene] {exc}") from None


def _load_source(value: str, duration: float, sample_rate: int, seed: int):
    value = value.strip()
    if value in ("", "none"):
        return None
    if value == "synth":
        return speech_like(duration, sample_rate, seed)
    if not os.path.exists(value):
        raise ConfigError(f"source file not found: {value}")
    w = read_wav(value)
    if w.n_channels != 1:
        w = Waveform(w.samples[:1], w.sample_rate)
    return w


def signals_from_config(cfg: configparser.ConfigParser, seed: int, sample_rate: int):
    sec = cfg["signals"] if cfg.has_section("signals") else {}
    duration = float(sec.get("duration", "4.0"))
    if cfg.has_section("signals"):
        active = sec.get("active_zones", "0 2")
    else:
        active = "0 2"
    zones = [int(z) for z in active.replace(",", " ").split()] if active.strip() else []
    sources = {}
    for z in zones:
        value = sec.get(f"source_zone{z}", "synth") if cfg.has_section("signals") else "synth"
        src = _load_source(value, duration, sample_rate, seed * 131 + z)
        if src is not None:
            sources[z] = src
    echo = _load_source(sec.get("echo", "none") if cfg.has_section("signals") else "none", duration, sample_rate, seed * 131 + 17)

    def _level(key, default):
        raw = str(sec.get(key, default)) if cfg.has_section("signals") else default
        raw = raw.strip().lower()
        if raw in ("inf", "+inf", "none", ""):
            return None
        return float(raw)

    snr_db = _level("snr_db", "10")
    ser_db = _level("ser_db", "inf" if echo is None else "0")
    distortion = sec.get("distortion", "clip") if cfg.has_section("signals") else "clip"
    threshold = float(sec.get("clip_threshold", "0.6")) if cfg.has_section("signals") else 0.6
    gain = float(sec.get("sigmoid_gain", "4.0")) if cfg.has_section("signals") else 4.0
    params = {"threshold": threshold} if distortion == "clip" else {"gain": gain}
    return sources, echo, snr_db, ser_db, distortion, params


def separation_from_config(cfg: configparser.ConfigParser, args) -> SeparationConfig:
    sec = cfg["separate"] if cfg.has_section("separate") else {}
    stft_cfg = stft_from_config(cfg)
    mode = args.mode or sec.get("mode", "oracle-mvdr-subband")
    bands = args.bands if args.bands is not None else int(sec.get("bands", "64"))
    if not 1 <= bands <= stft_cfg.n_bins:
        raise ConfigError(f"[separate] bands must lie in 1..{stft_cfg.n_bins}, got {bands}")
    embed = sec.get("embed", "").strip()
    try:
        return SeparationConfig(
            stft=stft_cfg,
            mode=mode,
            n_bands=bands,
            embed_dim=int(embed) if embed else None,
            ref_channel=int(sec.get("ref_channel", "0")),
            alpha=float(sec.get("alpha", "0.95")),
            crf_taps=int(sec.get("crf_taps", "3")),
            crf_half_window=int(sec.get("crf_half_window", "1")),
            bf_taps=int(sec.get("bf_taps", "5")),
            seed=args.seed if args.seed is not None else int(sec.get("seed", "0")),
            n_threads=args.threads,
        )
    except ValueError as exc:
        raise ConfigError(f"[separate] {exc}") from None


def resolve_out_dir(args, cfg: configparser.ConfigParser, default_name: str) -> str:
    if args.out:
        return args.out
    if cfg.has_section("output") and cfg["output"].get("dir"):
        return cfg["output"]["dir"]
    root = os.environ.get(OUT_ENV_VAR, ".")
    return os.path.join(root, default_name)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else (
        int(cfg["scene"].get("seed", "0")) if cfg.has_section("scene") else 0
    )
    spec = cabin_from_config(cfg, seed_override=seed)
    sample_rate = int(cfg["scene"].get("sample_rate", "16000")) if cfg.has_section("scene") else 16000
    sources, echo, snr_db, ser_db, distortion, params = signals_from_config(cfg, seed, sample_rate)
    try:
        render = render_scene(
            spec,
            sources,
            echo_src=echo,
            snr_db=snr_db,
            ser_db=ser_db if echo is not None else None,
            seed=seed,
            distortion=distortion,
            distortion_params=params,
            sample_rate=sample_rate,
            n_threads=args.threads,
        )
    except ValueError as exc:
        raise ConfigError(f"scene rendering rejected the configuration: {exc}") from None
    out_dir = resolve_out_dir(args, cfg, "scene_bundle")
    manifest = write_scene_bundle(render, out_dir)
    print(f"wrote scene bundle to {out_dir}")
    print(json.dumps({k: manifest[k] for k in ("active_zones", "snr_db", "ser_db", "n_samples")}, sort_keys=True))
    return 0


def _zone_metrics(render, result) -> list:
    rows = []
    mix_ref = render.mixture.samples[0]
    for z in range(4):
        out = result.waveforms[z].samples[0]
        target = render.targets[z].samples[0]
        silent = float(np.max(np.abs(target))) == 0.0
        row = {"zone": z, "active": not silent}
        if silent:
            row.update({"si_snr_db": None, "si_snr_mix_db": None, "improvement_db": None, "sdr_db": None})
            row["output_power_db"] = (
                10 * np.log10(max(float(np.mean(out**2)), 1e-30))
            )
            row["flagged_fraction"] = float(result.flagged_fraction[z])
        else:
            out_si = si_snr(out, target)
            mix_si = si_snr(mix_ref, target)
            row.update(
                {
                    "si_snr_db": out_si,
                    "si_snr_mix_db": mix_si,
                    "improvement_db": out_si - mix_si,
                    "sdr_db": sdr(out, target),
                    "output_power_db": 10 * np.log10(max(float(np.mean(out**2)), 1e-30)),
                    "flagged_fraction": float(result.flagged_fraction[z]),
                }
            )
        rows.append(row)
    return rows


def _write_rows_csv(rows, path):
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def cmd_separate(args) -> int:
    cfg = load_config(args.config)
    sep_cfg = separation_from_config(cfg, args)
    render = read_scene_bundle(args.bundle)
    if sep_cfg.mode != "stub-srnn":
        missing = [z for z in range(4) if render.targets[z] is None]
        if missing:
            raise DataError(f"bundle lacks ground-truth targets for zones {missing}")
    stub_weights = None
    if args.stub_weights:
        from .weights import WeightBundle

        stub_weights = WeightBundle.load(args.stub_weights)
    result = separate(render, sep_cfg, stub_weights=stub_weights)
    out_dir = resolve_out_dir(args, cfg, "separated")
    os.makedirs(out_dir, exist_ok=True)
    for z, wav in enumerate(result.waveforms):
        peak = float(np.max(np.abs(wav.samples)))
        scaled = wav if peak <= 1.0 else Waveform(wav.samples / (peak * 1.01), wav.sample_rate)
        write_wav(scaled, os.path.join(out_dir, f"zone{z}.wav"), "float32")
    rows = _zone_metrics(render, result)
    report = {
        "mode": sep_cfg.mode,
        "bands": sep_cfg.n_bands,
        "zones": rows,
    }
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_rows_csv(rows, os.path.join(out_dir, "metrics.csv"))
    if args.figures:
        from .plotting import save_spectrogram_png

        save_spectrogram_png(
            Waveform(render.mixture.samples[:1], render.mixture.sample_rate),
            os.path.join(out_dir, "mixture.png"),
            title="mixture (ref channel)",
            cfg=sep_cfg.stft,
        )
        for z, wav in enumerate(result.waveforms):
            save_spectrogram_png(
                wav, os.path.join(out_dir, f"zone{z}.png"), title=f"zone {z}", cfg=sep_cfg.stft
            )
    print(f"wrote separation outputs to {out_dir}")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_cost(args) -> int:
    cfg = load_config(args.config)
    stft_cfg = stft_from_config(cfg)
    sec = cfg["separate"] if cfg.has_section("separate") else {}
    embed = sec.get("embed", "").strip() if hasattr(sec, "get") else ""
    shapes = PipelineShapes(
        n_bins=stft_cfg.n_bins,
        hop=stft_cfg.hop,
        embed_dim=int(embed) if embed else 32,
    )
    reports = cost_sweep(shapes, sb_bands=(8, 16, 32, 64))
    table = format_cost_table(reports)
    print(table)
    out_dir = resolve_out_dir(args, cfg, "cost_report")
    os.makedirs(out_dir, exist_ok=True)
    payload = [json.loads(r.to_json()) for r in sorted(reports, key=lambda r: -r.macs_per_second)]
    with open(os.path.join(out_dir, "cost.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rows = [
        {"config": r.label(), "macs_per_second": r.macs_per_second, **r.breakdown}
        for r in sorted(reports, key=lambda r: -r.macs_per_second)
    ]
    _write_rows_csv(rows, os.path.join(out_dir, "cost.csv"))
    with open(os.path.join(out_dir, "cost.txt"), "w") as fh:
        fh.write(table + "\n")
    return 0


def cmd_metrics(args) -> int:
    est = read_wav(args.est)
    ref = read_wav(args.ref)
    if est.n_samples != ref.n_samples:
        raise DataError(
            f"length mismatch: {args.est} has {est.n_samples} samples, {args.ref} has {ref.n_samples}"
        )
    cfg = load_config(args.config)
    stft_cfg = stft_from_config(cfg)
    est_ch = Waveform(est.samples[:1], est.sample_rate)
    ref_ch = Waveform(ref.samples[:1], ref.sample_rate)
    report = {
        "est": str(args.est),
        "ref": str(args.ref),
        "si_snr_db": si_snr(est_ch.samples[0], ref_ch.samples[0]),
        "sdr_db": sdr(est_ch.samples[0], ref_ch.samples[0]),
        "loss": loss_value([est_ch], [ref_ch], stft_cfg),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_rows_csv([report], os.path.join(args.out, "metrics.csv"))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="melbeam",
        description="Mel-subband beamforming toolkit: simulate cabins, separate zones, report costs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a scene bundle with ground truth")
    p_sim.add_argument("--config", help="INI config path")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", help="output bundle directory")
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.set_defaults(func=cmd_simulate)

    p_sep = sub.add_parser("separate", help="separate a scene bundle into zone signals")
    p_sep.add_argument("--config", help="INI config path")
    p_sep.add_argument("--bundle", required=True, help="scene bundle directory")
    p_sep.add_argument("--mode", choices=SEPARATION_MODES, default=None)
    p_sep.add_argument("--bands", type=int, default=None, help="subband count K")
    p_sep.add_argument("--seed", type=int, default=None)
    p_sep.add_argument("--out", help="output directory")
    p_sep.add_argument("--threads", type=int, default=1)
    p_sep.add_argument("--figures", action="store_true", help="render spectrogram PNGs")
    p_sep.add_argument("--stub-weights", help="WeightBundle file for stub-srnn mode")
    p_sep.set_defaults(func=cmd_separate)

    p_cost = sub.add_parser("cost", help="MAC cost comparison across processing modes")
    p_cost.add_argument("--config", help="INI config path")
    p_cost.add_argument("--out", help="output directory")
    p_cost.set_defaults(func=cmd_cost)

    p_met = sub.add_parser("metrics", help="score an estimate against a reference WAV")
    p_met.add_argument("--est", required=True)
    p_met.add_argument("--ref", required=True)
    p_met.add_argument("--config", help="INI config path")
    p_met.add_argument("--out", help="optional output directory")
    p_met.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except MelbeamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
