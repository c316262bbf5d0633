"""Command-line surface tying the pipeline together.

Subcommands: simulate, ingest, featurize, train, eval, gesture. Exit codes:
0 success, 1 usage error, 2 data error, 3 numeric failure. Failures print a
single machine-readable line on stderr:

    error: kind=<ErrorClass> exit=<code> msg="..."

Every run is deterministic given its config and seed; the WISENSE_SEED
environment variable overrides the seed everywhere.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import classifiers as clf
from .config import SEED_ENV_VAR, PipelineConfig
from .errors import DataError, UsageError, WisenseError
from .evaluate import (
    MODEL_KINDS,
    evaluate,
    featurize_trial,
    train_model,
)
from .features import (
    FeatureKind,
    spectrogram_to_pgm,
    stft,
    stft_feature_frames,
    dwt_features,
)
from .gesture import classify_gesture, doppler_profile, estimate_noise_floor, load_templates, segment
from .ingest import (
    load_manifest,
    parse_canonical_csv,
    parse_capture_file,
    rate_filter,
    regularize,
    slice_by_manifest,
    write_canonical_csv,
)
from .model import ActivityLabel, CsiStream, LabeledDataset, amplitude_matrix
from .preprocess import fit_pca, pca_denoise, znormalize
from .simulate import load_scenario, scenario_preset, synthesize


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage problems; the CLI contract says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="wisense", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a CSI stream to canonical CSV")
    p.add_argument("--scenario", required=True, help="scenario file path or preset label (e.g. Walk)")
    p.add_argument("--out", required=True, help="output canonical CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=1000.0, help="sample rate in Hz")
    p.add_argument("--freq", type=float, default=5.0e9, help="center frequency in Hz")
    p.add_argument("--dims", default="3x1x30", help="rx x tx x subcarriers, e.g. 3x1x30")
    p.add_argument("--subject", default=None)
    p.add_argument("--trial", default=None)

    p = sub.add_parser("ingest", help="parse a capture, regularize, and cut labeled trials")
    p.add_argument("--in", dest="infile", required=True, help=".dat capture or canonical .csv")
    p.add_argument("--manifest", required=True, help="CSV: file,label,subject,trial,start_s,stop_s")
    p.add_argument("--out", required=True, help="output directory for trial CSVs")
    p.add_argument("--rate", type=float, default=1000.0, help="regularization target rate")
    p.add_argument("--freq", type=float, default=5.0e9, help="center frequency for .dat inputs")
    p.add_argument("--keep-rates", default="", help="comma list of rate codes to keep (default: modal)")

    p = sub.add_parser("featurize", help="export features for each trial CSV in a directory")
    p.add_argument("--kind", required=True, choices=["stft25", "dwt27", "raw"])
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on a directory of labeled trial CSVs")
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    p.add_argument("--config", default=None)
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", required=True, help="model file path")

    p = sub.add_parser("eval", help="cross-validate a model recipe on labeled trials")
    p.add_argument("--model", required=True, help="model file from `train` (supplies kind + config)")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--split", default="kfold:5", help="kfold:<k> | loso | fixed:<frac>")
    p.add_argument("--report", required=True, help="confusion CSV output path")
    p.add_argument("--png-spectrogram", dest="spectrogram_dir", default=None,
                   help="directory for per-trial spectrogram images (PGM)")

    p = sub.add_parser("gesture", help="segment and classify a gesture stream")
    p.add_argument("--in", dest="infile", required=True, help="canonical CSV")
    p.add_argument("--templates", required=True, help="JSON template list")
    p.add_argument("--noise-floor", type=float, default=None)
    return parser


def _load_config(path: str | None) -> PipelineConfig:
    return PipelineConfig.load(path) if path else PipelineConfig()


def _seed_override(seed: int) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else seed


def _parse_dims(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--dims must look like 3x1x30, got {text!r}")
    if len(parts) != 3 or min(parts) < 1:
        raise UsageError(f"--dims must be three positive integers, got {text!r}")
    return parts


def _load_trial_dir(indir: str) -> LabeledDataset:
    paths = sorted(Path(indir).glob("*.csv"))
    if not paths:
        raise DataError(f"no trial CSVs found in {indir}")
    trials = []
    for path in paths:
        stream = parse_canonical_csv(path.read_text())
        if stream.trial_id is None:
            stream = stream.with_meta(trial_id=path.stem)
        trials.append(stream)
    return LabeledDataset(tuple(trials))


def _cmd_simulate(args) -> int:
    seed = _seed_override(args.seed)
    scenario_arg = args.scenario
    if Path(scenario_arg).exists():
        scenario = load_scenario(Path(scenario_arg).read_text())
    else:
        name = scenario_arg.split(":", 1)[1] if scenario_arg.startswith("preset:") else scenario_arg
        try:
            label = ActivityLabel.from_string(name)
        except ValueError:
            raise UsageError(
                f"--scenario {scenario_arg!r} is neither an existing file nor a preset label"
            )
        scenario = scenario_preset(label, seed=seed)
    stream = synthesize(
        scenario,
        sample_rate=args.rate,
        center_frequency=args.freq,
        dims=_parse_dims(args.dims),
        seed=seed,
        subject_id=args.subject,
        trial_id=args.trial,
    )
    write_canonical_csv(stream, args.out)
    print(f"wrote {len(stream)} frames to {args.out}")
    return 0


def _cmd_ingest(args) -> int:
    infile = Path(args.infile)
    if not infile.exists():
        raise DataError(f"input file not found: {infile}")
    if infile.suffix.lower() == ".csv":
        stream = parse_canonical_csv(infile.read_text())
        frames = list(stream.frames)
        freq = stream.center_frequency
    else:
        frames = parse_capture_file(infile.read_bytes())
        freq = args.freq
    keep = tuple(int(c) for c in args.keep_rates.split(",") if c.strip())
    frames = rate_filter(frames, keep)
    stream = regularize(frames, args.rate, center_frequency=freq)

    entries = load_manifest(Path(args.manifest).read_text(), base_dir=infile.parent, check_paths=False)
    mine = [e for e in entries if Path(e.path).name == infile.name]
    if not mine:
        raise DataError(f"manifest has no rows for file {infile.name}")
    dataset = slice_by_manifest(stream, mine)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for trial in dataset:
        name = f"{trial.subject_id}-{trial.trial_id}-{trial.label.value}.csv"
        write_canonical_csv(trial, outdir / name)
    print(f"wrote {len(dataset)} trials to {outdir}")
    return 0


def _write_feature_csv(path: Path, kind: str, vectors: np.ndarray, frame_period: float, stream: CsiStream) -> None:
    meta = f"# kind={kind} frame_period={frame_period!r}"
    if stream.label is not None:
        meta += f" label={stream.label.value}"
    if stream.subject_id is not None:
        meta += f" subject={stream.subject_id}"
    if stream.trial_id is not None:
        meta += f" trial={stream.trial_id}"
    lines = [meta]
    for row in np.atleast_2d(vectors):
        lines.append(",".join(format(float(v), ".9g") for v in row))
    path.write_text("\n".join(lines) + "\n")


def _cmd_featurize(args) -> int:
    config = _load_config(args.config)
    dataset = _load_trial_dir(args.indir)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, stream in enumerate(dataset):
        amp = amplitude_matrix(stream)
        if args.kind in ("stft25", "dwt27"):
            model = fit_pca(amp)
            keep = [k for k in config.pca_keep if k < model.n_components] or [0]
            scores = pca_denoise(amp, model, keep)
            if args.kind == "stft25":
                seq = stft_feature_frames(
                    scores,
                    sample_rate=stream.sample_rate,
                    hop_ms=config.hop_ms,
                    window_len=config.stft_window,
                    fft_len=config.stft_fft,
                )
            else:
                seq = dwt_features(
                    scores,
                    sample_rate=stream.sample_rate,
                    interval_s=config.dwt_interval_s,
                    center_frequency=stream.center_frequency,
                    levels=config.dwt_levels,
                )
            vectors, period = seq.vectors, seq.frame_period
        else:  # raw: z-normalized, mean-pooled amplitude steps
            pooled = znormalize(amp)
            pool = config.lstm.pool_factor
            usable = (pooled.shape[0] // pool) * pool
            vectors = pooled[:usable].reshape(-1, pool, pooled.shape[1]).mean(axis=1)
            period = pool / stream.sample_rate
        name = (stream.trial_id or f"trial-{i}") + f".{args.kind}.csv"
        _write_feature_csv(outdir / name, args.kind, vectors, period, stream)
    print(f"wrote {len(dataset)} feature files to {outdir}")
    return 0


def _model_path_payload(kind: str, config: PipelineConfig, model) -> str:
    if kind == "hist" or kind == "forest" or kind == "hmm":
        inner = json.loads(model.to_json())
        return json.dumps(
            {
                "format": "wisense-model",
                "version": 1,
                "kind": kind,
                "pipeline": json.loads(config.to_json()),
                "model": inner,
            }
        )
    raise UsageError(f"no JSON payload for kind {kind!r}")


def _cmd_train(args) -> int:
    config = _load_config(args.config)
    seed = _seed_override(config.seed)
    if seed != config.seed:
        config = PipelineConfig.from_dict({**json.loads(config.to_json()), "seed": seed})
    dataset = _load_trial_dir(args.indir)
    feats = [featurize_trial(s, args.model, config) for s in dataset]
    model = train_model(args.model, feats, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.model == "lstm":
        clf.save_lstm(model, out, extra={"kind": "lstm", "pipeline": json.loads(config.to_json())})
    else:
        out.write_text(_model_path_payload(args.model, config, model))
    print(f"trained {args.model} on {len(feats)} trials -> {out}")
    return 0


def _read_model_recipe(path: Path) -> tuple[str, PipelineConfig]:
    data = path.read_bytes()
    if data.startswith(clf.lstm.MAGIC):
        header = clf.lstm.read_lstm_header(path)
        pipeline = header.get("pipeline")
        if pipeline is None:
            raise DataError(f"{path} has no embedded pipeline config")
        return "lstm", PipelineConfig.from_dict(pipeline)
    try:
        obj = json.loads(data.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path} is not a recognizable model file: {exc}") from exc
    if obj.get("format") != "wisense-model":
        raise DataError(f"{path} is not a wisense model file")
    return obj["kind"], PipelineConfig.from_dict(obj["pipeline"])


def _cmd_eval(args) -> int:
    model_path = Path(args.model)
    if not model_path.exists():
        raise DataError(f"model file not found: {model_path}")
    kind, config = _read_model_recipe(model_path)
    seed = _seed_override(config.seed)
    dataset = _load_trial_dir(args.indir)
    result = evaluate(kind, dataset, args.split, config, seed=seed)

    report = Path(args.report)
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text(result.trial_confusion.to_csv())
    print(f"model kind: {kind}   split: {args.split}   trials: {len(dataset)}")
    print(result.trial_confusion.render_text())
    print(f"window-level macro accuracy: {result.window_confusion.macro_accuracy():.4f}")
    print(f"report written to {report}")

    if args.spectrogram_dir:
        specdir = Path(args.spectrogram_dir)
        specdir.mkdir(parents=True, exist_ok=True)
        for i, stream in enumerate(dataset):
            amp = amplitude_matrix(stream)
            model = fit_pca(amp)
            keep = [k for k in config.pca_keep if k < model.n_components] or [0]
            scores = pca_denoise(amp, model, keep)
            spec = stft(
                scores[:, 0],
                stream.sample_rate,
                config.stft_window,
                max(1, int(round(config.hop_ms * 1e-3 * stream.sample_rate))),
                config.stft_fft,
            )
            name = (stream.trial_id or f"trial-{i}") + ".pgm"
            (specdir / name).write_bytes(spectrogram_to_pgm(spec))
        print(f"spectrograms written to {specdir}")
    return 0


def _cmd_gesture(args) -> int:
    stream = parse_canonical_csv(Path(args.infile).read_text())
    templates = load_templates(Path(args.templates).read_text())
    series = stream.gains_tensor[:, 0, 0, 0]
    profile = doppler_profile(series, stream.sample_rate)
    noise_floor = args.noise_floor if args.noise_floor is not None else estimate_noise_floor(profile)
    segments = segment(profile, noise_floor)
    payload = {
        "noise_floor": noise_floor,
        "segments": [
            {"start": s.start, "stop": s.stop, "symbol": s.symbol.value} for s in segments
        ],
    }
    if segments:
        name, score = classify_gesture(segments, templates)
        payload.update({"gesture": name, "score": score})
    else:
        payload.update({"gesture": None, "score": 0.0})
    print(json.dumps(payload, indent=2))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "ingest": _cmd_ingest,
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gesture": _cmd_gesture,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except WisenseError as exc:
        print(
            f'error: kind={type(exc).__name__} exit={exc.exit_code} msg="{exc}"',
            file=sys.stderr,
        )
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
