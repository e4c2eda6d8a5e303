"""Command-line front end.

Every subcommand accepts --seed, --config (JSON or TOML defaults), and
--out. Success prints a one-line JSON summary on stdout and exits 0; any
toolkit failure prints a one-line JSON error on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # stdlib from 3.11; same API before that
    import tomli as tomllib

from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .channel import ChannelModel
from .dsp import rational_resample
from .errors import ConfigError, InsufficientData, InvalidSpec, IqProtoError
from .capture import SplitSpec, generate_dataset, load_manifest, make_split, read_capture
from .evaluation import (
    grid_rows_to_csv,
    grid_search,
    multilabel_evaluate,
    report,
    snr_sweep,
    sweep_from_json,
    sweep_to_json,
)
from .legacy import detection_table
from .model.checkpoint import load_model, save_model
from .model.cnn import CnnConfig, cnn_config
from .model.training import (
    AugmentConfig,
    SequenceDataset,
    TrainConfig,
    history_to_csv,
    train,
)
from .model.transformer import (
    TransformerConfig,
    desk_model_config,
    lg_model_config,
    sm_model_config,
)
from .pipeline import (
    CHUNK_COMPLEX_SAMPLES,
    SOURCE_RATE_HZ,
    FileSource,
    QueueConfig,
    SyntheticSource,
    run_pipeline,
)
from .signals import add_awgn
from .tokenizer import TokenizationConfig
from .waveforms import (
    PROTOCOL_ORDER,
    Protocol,
    generate_overlapping_capture,
    overlap_presets,
    parse_protocol,
)


_MODEL_PRESETS = {
    "lg": (lg_model_config, TokenizationConfig(num_slices=64, slice_len=128)),
    "sm": (sm_model_config, TokenizationConfig(num_slices=24, slice_len=64)),
    "desk": (desk_model_config, TokenizationConfig(num_slices=24, slice_len=32)),
    "cnn": (cnn_config, TokenizationConfig(num_slices=64, slice_len=128)),
}


def _parse_protocols(text: str) -> list[Protocol]:
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        out.append(parse_protocol(piece))
    if not out:
        raise InvalidSpec("empty protocol list")
    return out


def _parse_channels(text: str) -> list[ChannelModel]:
    wanted = [p.strip() for p in text.split(",") if p.strip()]
    if not wanted:
        raise InvalidSpec("empty channel list")
    by_value = {c.value: c for c in ChannelModel}
    out = []
    for name in wanted:
        if name not in by_value:
            raise InvalidSpec(f"unknown channel {name!r} (have {sorted(by_value)})")
        out.append(by_value[name])
    return out


def _parse_snrs(text: str) -> list[float]:
    text = text.strip()
    if ":" in text:
        lo, hi, step = (float(p) for p in text.split(":"))
        if step <= 0 or hi < lo:
            raise InvalidSpec(f"bad SNR range {text!r}")
        return [lo + k * step for k in range(int((hi - lo) / step) + 1)]
    return [float(p) for p in text.split(",") if p.strip()]


def _parse_floats(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _load_config_file(path: str | Path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    try:
        if path.suffix == ".toml":
            return tomllib.loads(raw.decode())
        return json.loads(raw)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from e


def _apply_config(args: argparse.Namespace) -> None:
    """Config file supplies defaults; explicit flags win."""
    if not getattr(args, "config", None):
        return
    overrides = _load_config_file(args.config)
    sub = args._subparser
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr) or attr.startswith("_"):
            raise ConfigError(f"config key {key!r} is not a flag of this subcommand")
        if getattr(args, attr) == sub.get_default(attr):
            setattr(args, attr, value)


def _jsonable(value):
    """Strict-JSON view: non-finite floats become null."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def _emit(summary: dict) -> None:
    print(json.dumps(_jsonable(summary)))


def _entry_pairs(manifest, entries, multi_label=False):
    """Load manifest captures as (signal, label) evaluation pairs."""
    pairs = []
    for entry in entries:
        sig, _ = read_capture(manifest.resolve(entry))
        label = list(entry.protocols) if multi_label else entry.primary_protocol
        pairs.append((sig, label))
    if not pairs:
        raise InsufficientData("manifest split produced no captures")
    return pairs


def _dataset_classes(manifest) -> list[Protocol]:
    present = {p for e in manifest.entries for p in e.protocols}
    classes = list(PROTOCOL_ORDER)
    if Protocol.NOISE.label in present:
        classes.append(Protocol.NOISE)
    return classes


def _tok_from_extra(extra: dict) -> TokenizationConfig:
    tok = extra.get("tokenizer")
    if not tok:
        raise ConfigError("checkpoint lacks tokenizer geometry in its header")
    return TokenizationConfig(num_slices=int(tok["num_slices"]),
                              slice_len=int(tok["slice_len"]))


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_generate(args) -> dict:
    out = Path(args.out)
    if args.overlap_preset:
        presets = overlap_presets()
        if args.overlap_preset not in presets:
            raise InvalidSpec(
                f"unknown overlap preset {args.overlap_preset!r} "
                f"(have {sorted(presets)})"
            )
        spec = replace(
            presets[args.overlap_preset],
            incumbent=_parse_protocols(args.incumbent)[0],
            interferer=_parse_protocols(args.interferer)[0],
        )
        from .capture import Manifest, ManifestEntry, write_capture, write_manifest

        out.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(root=out, seed=args.seed)
        for i in range(args.captures):
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence((args.seed, i)))
            )
            sig = generate_overlapping_capture(spec, rng)
            name = f"overlap_{spec.name}_{i:04d}"
            write_capture(out / name, sig, {
                "protocols": list(spec.protocols),
                "scenario": f"overlap-{spec.name}",
                "seed_key": [args.seed, i],
            })
            manifest.entries.append(ManifestEntry(
                path=f"{name}.iq",
                protocols=tuple(p.label for p in spec.protocols),
                scenario=f"overlap-{spec.name}",
                num_samples=len(sig),
                seed_key=(args.seed, i),
            ))
        write_manifest(manifest)
        return {"status": "ok", "manifest": str(out), "captures": args.captures,
                "overlap": spec.name}

    manifest = generate_dataset(
        out, _parse_protocols(args.protocols), args.bursts_per_protocol,
        seed=args.seed, scenario=args.scenario,
    )
    return {"status": "ok", "manifest": str(out),
            "captures": len(manifest.entries)}


def _build_model(name: str, num_classes: int, multi_label: bool):
    if name not in _MODEL_PRESETS:
        raise InvalidSpec(f"unknown model preset {name!r} (have {sorted(_MODEL_PRESETS)})")
    builder, tok = _MODEL_PRESETS[name]
    if name == "cnn":
        if multi_label:
            raise ConfigError("the convolutional baseline has a single-label head")
        return builder(num_classes=num_classes), tok
    return builder(num_classes=num_classes, multi_label=multi_label), tok


def _cmd_train(args) -> dict:
    manifest = load_manifest(args.data)
    train_entries, _ = make_split(
        manifest, SplitSpec("time", train_fraction=args.train_fraction)
    )
    classes = _dataset_classes(manifest)
    model_config, tok = _build_model(args.model, len(classes), args.multi_label)
    augment = AugmentConfig(
        channels=tuple(_parse_channels(args.channels)),
        snr_range_db=(args.snr_lo, args.snr_hi),
    )
    dataset = SequenceDataset.from_manifest(
        manifest, train_entries, tok, classes=classes,
        multi_label=args.multi_label, augment=augment,
    )
    config = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, seed=args.seed, augment=augment,
    )
    result = train(dataset, model_config, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"{args.model}.ckpt"
    save_model(ckpt, result.params, result.model_config, result.classes,
               extra={"tokenizer": {"num_slices": tok.num_slices,
                                    "slice_len": tok.slice_len}})
    history_csv = out / "history.csv"
    history_to_csv(result.history, history_csv)
    best = result.history[result.best_epoch]
    return {
        "status": "ok", "checkpoint": str(ckpt), "history": str(history_csv),
        "epochs": len(result.history), "best_epoch": result.best_epoch,
        "val_acc": best["val_acc"], "val_loss": best["val_loss"],
    }


def _cmd_sweep(args) -> dict:
    params, model_config, classes, extra = load_model(args.model)
    tok = _tok_from_extra(extra)
    manifest = load_manifest(args.data)
    _, test_entries = make_split(
        manifest, SplitSpec("time", train_fraction=args.train_fraction)
    )
    class_protocols = [parse_protocol(c) for c in classes]
    pairs = _entry_pairs(manifest, test_entries)
    sweep = snr_sweep(
        params, model_config, tok, pairs,
        channels=tuple(_parse_channels(args.channels)),
        snrs_db=tuple(_parse_snrs(args.snrs)),
        trials_per_point=args.trials,
        seed=args.seed,
        model_id=Path(args.model).stem,
        classes=class_protocols,
    )
    out = Path(args.out)
    written = report([sweep], out)
    sweep_json = out / f"sweep_{sweep.model_id}.json"
    sweep_json.write_text(sweep_to_json(sweep))
    written.append(sweep_json)
    return {
        "status": "ok",
        "files": [str(p) for p in written],
        "spearman": sweep.spearman_by_channel(),
    }


def _cmd_legacy(args) -> dict:
    rows = detection_table(
        np.random.default_rng(args.seed),
        channels=tuple(_parse_channels(args.channels)),
        snrs_db=tuple(_parse_snrs(args.snrs)),
        trials_per_point=args.trials,
        grouping=args.grouping,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "legacy_accuracy.csv"
    with open(csv_path, "w") as fh:
        fh.write("channel,snr_db,accuracy,trials\n")
        for r in rows:
            fh.write(f"{r['channel']},{r['snr_db']:g},{r['accuracy']:.6f},{r['trials']}\n")
    return {"status": "ok", "table": str(csv_path), "rows": len(rows)}


def _cmd_overlap_eval(args) -> dict:
    params, model_config, classes, extra = load_model(args.model)
    tok = _tok_from_extra(extra)
    presets = overlap_presets()
    chosen = [p.strip() for p in args.presets.split(",") if p.strip()]
    unknown = [p for p in chosen if p not in presets]
    if unknown:
        raise InvalidSpec(f"unknown presets {unknown} (have {sorted(presets)})")
    class_protocols = [parse_protocol(c) for c in classes]
    results = {}
    for name in chosen:
        spec = replace(
            presets[name],
            incumbent=_parse_protocols(args.incumbent)[0],
            interferer=_parse_protocols(args.interferer)[0],
        )
        pairs = []
        for i in range(args.captures):
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence((args.seed, i)))
            )
            sig = generate_overlapping_capture(spec, rng)
            if sig.sample_rate_hz != 20e6:
                ratio = Fraction(20_000_000, int(round(sig.sample_rate_hz)))
                sig = rational_resample(sig, ratio.numerator, ratio.denominator)
            if args.snr_db is not None:
                sig = add_awgn(sig, args.snr_db, rng)
            pairs.append((sig, list(spec.protocols)))
        metrics = multilabel_evaluate(
            params, model_config, tok, pairs,
            threshold=args.threshold, seed=args.seed, classes=class_protocols,
        )
        results[name] = {
            "exact": metrics.exact, "single": metrics.single,
            "single_exact": metrics.single_exact, "auc": metrics.auc,
            "instances": metrics.num_instances,
        }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "overlap_metrics.json"
    path.write_text(json.dumps(_jsonable(results), indent=1))
    return {"status": "ok", "metrics": str(path), "presets": results}


def _cmd_grid_search(args) -> dict:
    manifest = load_manifest(args.data)
    train_entries, _ = make_split(
        manifest, SplitSpec("time", train_fraction=args.train_fraction)
    )
    pairs = _entry_pairs(manifest, train_entries)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = grid_search(
        pairs,
        slice_lengths=_parse_ints(args.slice_lengths),
        batch_sizes=_parse_ints(args.batch_sizes),
        learning_rates=_parse_floats(args.learning_rates),
        num_slices=args.num_slices,
        epochs=args.epochs,
        seed=args.seed,
        state_path=out / "grid_state.json",
        augment=AugmentConfig(
            channels=tuple(_parse_channels(args.channels)),
            snr_range_db=(args.snr_lo, args.snr_hi),
        ),
    )
    csv_path = out / "grid.csv"
    csv_path.write_text(grid_rows_to_csv(rows))
    return {"status": "ok", "table": str(csv_path), "rows": len(rows),
            "best": rows[0]}


def _cmd_pipeline(args) -> dict:
    params, model_config, classes, extra = load_model(args.model)
    if not isinstance(model_config, TransformerConfig):
        raise ConfigError("the streaming pipeline serves transformer checkpoints")
    tok = _tok_from_extra(extra)
    chunk_period_s = CHUNK_COMPLEX_SAMPLES / SOURCE_RATE_HZ
    pacing_s = 0.0 if args.rate == 0 else chunk_period_s / args.rate
    rng = np.random.default_rng(args.seed)
    if args.source.startswith("synthetic:"):
        proto = args.source.split(":", 1)[1]
        source = SyntheticSource(
            protocol=_parse_protocols(proto)[0], rng=rng,
            snr_db=args.snr_db, pacing_s=pacing_s,
        )
    else:
        root = Path(args.source)
        try:
            manifest = load_manifest(root)
            paths = [manifest.resolve(e) for e in manifest.entries]
        except IqProtoError:
            paths = sorted(root.glob("*.iq"))
        source = FileSource(paths, pacing_s=pacing_s, loop=args.loop)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "predictions.log"
    result = run_pipeline(
        source, params, model_config, tok, classes=classes,
        queue_config=QueueConfig(q1_capacity=args.q1, q2_capacity=args.q2),
        duration_s=args.duration, max_chunks=args.max_chunks,
        log_path=log_path,
    )
    timing_path = out / "timing.json"
    timing: dict = {
        "chunks_in": result.chunks_in,
        "predictions": len(result.records),
        "drops": {"q1": result.drops_q1, "q2": result.drops_q2},
        "in_flight": result.in_flight,
        "wall_time_s": result.wall_time_s,
        "max_queue_depth": result.max_queue_depth,
    }
    try:
        stats = result.profile()
        timing["stages"] = stats.stages
        timing["end_to_end_mean_s"] = stats.end_to_end_mean_s
        timing["predictions_per_second"] = stats.predictions_per_second
    except InsufficientData as e:
        timing["stages"] = None
        timing["note"] = str(e)
    timing_path.write_text(json.dumps(_jsonable(timing), indent=1))
    labels = [r.label for r in result.records]
    top = max(set(labels), key=labels.count) if labels else None
    return {
        "status": "ok", "log": str(log_path), "timing": str(timing_path),
        "predictions": len(result.records), "top_label": top,
        "conserved": result.conserved,
    }


def _cmd_report(args) -> dict:
    paths = [Path(p.strip()) for p in args.inputs.split(",") if p.strip()]
    if not paths:
        raise InvalidSpec("report needs at least one sweep JSON")
    sweeps = [sweep_from_json(p.read_text()) for p in paths]
    confusions = {}
    if args.confusion_at:
        channel, snr = args.confusion_at.rsplit(":", 1)
        for sweep in sweeps:
            for p in sweep.points:
                if p.channel == channel and p.snr_db == float(snr):
                    confusions[f"{sweep.model_id}_{channel}_{snr}db"] = p.confusion
    written = report(sweeps, Path(args.out), confusions=confusions or None)
    return {"status": "ok", "files": [str(p) for p in written]}


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(sub: argparse.ArgumentParser, default_out: str) -> None:
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--config", default=None,
                     help="JSON or TOML file of flag defaults")
    sub.add_argument("--out", default=default_out, help="output directory")
    sub.set_defaults(_subparser=sub)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iqproto",
        description="Burst synthesis, protocol classification, and streaming inference.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("generate", help="synthesize a labeled capture dataset")
    _add_common(p, "runs/dataset")
    p.add_argument("--protocols", default="b,g,n,ax")
    p.add_argument("--bursts-per-protocol", type=int, default=10)
    p.add_argument("--scenario", default="synthetic")
    p.add_argument("--overlap-preset", default=None,
                   help="emit two-transmitter overlap captures instead")
    p.add_argument("--incumbent", default="g")
    p.add_argument("--interferer", default="n")
    p.add_argument("--captures", type=int, default=8)
    p.set_defaults(handler=_cmd_generate)

    p = subs.add_parser("train", help="train a classifier on a manifest dataset")
    _add_common(p, "runs/train")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="desk", choices=sorted(_MODEL_PRESETS))
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=122)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--channels", default="none,rayleigh")
    p.add_argument("--snr-lo", type=float, default=0.0)
    p.add_argument("--snr-hi", type=float, default=30.0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--multi-label", action="store_true")
    p.set_defaults(handler=_cmd_train)

    p = subs.add_parser("sweep", help="accuracy over the (channel, SNR) grid")
    _add_common(p, "runs/sweep")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True)
    p.add_argument("--channels", default="none,rayleigh,tgn-b,tgax-b")
    p.add_argument("--snrs", default="-30:30:5")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(handler=_cmd_sweep)

    p = subs.add_parser("legacy", help="preamble-correlation benchmark table")
    _add_common(p, "runs/legacy")
    p.add_argument("--channels", default="none,rayleigh,tgn-b,tgax-b")
    p.add_argument("--snrs", default="-30:30:5")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--grouping", default="four-way",
                   choices=("four-way", "three-way"))
    p.set_defaults(handler=_cmd_legacy)

    p = subs.add_parser("overlap-eval", help="multi-label metrics on overlap captures")
    _add_common(p, "runs/overlap")
    p.add_argument("--model", required=True, help="multi-label checkpoint")
    p.add_argument("--presets", default="narrow-25,narrow-50,wide-25,wide-50")
    p.add_argument("--incumbent", default="g")
    p.add_argument("--interferer", default="n")
    p.add_argument("--captures", type=int, default=8)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--snr-db", type=float, default=None)
    p.set_defaults(handler=_cmd_overlap_eval)

    p = subs.add_parser("grid-search", help="hyperparameter grid at desk scale")
    _add_common(p, "runs/grid")
    p.add_argument("--data", required=True)
    p.add_argument("--slice-lengths", default="16,32")
    p.add_argument("--batch-sizes", default="32,128")
    p.add_argument("--learning-rates", default="1e-3,2e-4")
    p.add_argument("--num-slices", type=int, default=24)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--channels", default="none,rayleigh")
    p.add_argument("--snr-lo", type=float, default=0.0)
    p.add_argument("--snr-hi", type=float, default=30.0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(handler=_cmd_grid_search)

    p = subs.add_parser("pipeline", help="run the three-stage streaming classifier")
    _add_common(p, "runs/pipeline")
    p.add_argument("--model", required=True, help="transformer checkpoint")
    p.add_argument("--source", required=True,
                   help="capture directory or synthetic:<protocol>")
    p.add_argument("--rate", type=float, default=0.0,
                   help="real-time pacing factor; 0 streams unpaced")
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--max-chunks", type=int, default=None)
    p.add_argument("--q1", type=int, default=2)
    p.add_argument("--q2", type=int, default=2)
    p.add_argument("--snr-db", type=float, default=None,
                   help="noise level for synthetic sources")
    p.add_argument("--loop", action="store_true",
                   help="loop file sources instead of stopping at the end")
    p.set_defaults(handler=_cmd_pipeline)

    p = subs.add_parser("report", help="render stored sweeps to CSV and plots")
    _add_common(p, "runs/report")
    p.add_argument("--inputs", required=True,
                   help="comma-separated sweep JSON files")
    p.add_argument("--confusion-at", default=None,
                   help="channel:snr grid point to render as a heatmap")
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        summary = args.handler(args)
        _emit(summary)
        return 0
    except IqProtoError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1
    except OSError as e:
        print(json.dumps({"error": "OSError", "message": str(e)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
