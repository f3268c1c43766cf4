"""Command-line interface: one subcommand per pipeline stage.

Every command writes its artifacts to named files and prints a single JSON
summary on stdout.  Package errors exit with status 2 and a structured
message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from .confounder import AnnealerConfig, anneal, image_to_notes, load_image, render_comparison
from .diffusion import DiffusionSchedule
from .errors import NotefillError
from .guidance import (
    DensityGuidance,
    load_density_classifier,
    save_density_classifier,
    train_density_classifier,
)
from .model import DenoiserConfig, load_checkpoint, save_checkpoint
from .sampling import MaskPattern, infill, infill_central, accompany, guided_sample, unconditional
from .tokens import TokenSequence, export_midi
from .training import corpus_array, train

CONFIG_PRESETS = {
    "desk_melody": DenoiserConfig.desk_melody,
    "desk_trio": DenoiserConfig.desk_trio,
    "paper_melody": DenoiserConfig.paper_melody,
    "paper_trio": DenoiserConfig.paper_trio,
}


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _load_pieces(path: str) -> list[TokenSequence]:
    p = Path(path)
    if p.is_dir():
        return corpus_mod.load_token_dir(p)
    return [TokenSequence.load(p)]


def cmd_tokenize(args) -> dict:
    result = corpus_mod.tokenize_corpus(args.midi_dir, args.mode, steps=args.steps,
                                        min_bars=args.min_bars)
    corpus_mod.save_token_dir(result, args.out)
    ok = sum(1 for e in result.entries if e.status == "ok")
    return {
        "command": "tokenize",
        "out": str(args.out),
        "files_ok": ok,
        "files_rejected": len(result.entries) - ok,
        "windows": len(result.sequences),
    }


def cmd_train(args) -> dict:
    config = CONFIG_PRESETS[args.config](args.seq_steps) if args.config.startswith("desk") \
        else CONFIG_PRESETS[args.config]()
    sequences = corpus_mod.load_token_dir(args.corpus)
    if not sequences:
        raise NotefillError(f"no token files under {args.corpus}")
    schedule = DiffusionSchedule(args.timesteps)
    result = train(
        corpus_array(sequences), config, schedule, steps=args.steps, seed=args.seed,
        batch_size=args.batch_size, learning_rate=args.lr, metrics_path=args.metrics,
    )
    save_checkpoint(args.out, result.model, result.state.optimizer,
                    result.state.step, result.state.rng)
    return {
        "command": "train",
        "out": str(args.out),
        "steps": args.steps,
        "final_loss": float(result.loss_curve[-1]),
        "parameters": result.model.parameter_count(),
    }


def _load_model(path):
    checkpoint = load_checkpoint(path)
    checkpoint.model.eval()
    return checkpoint.model


def _write_piece(seq: TokenSequence, out: str, bpm: float = 120.0) -> dict:
    out_path = Path(out)
    seq.save(out_path)
    info = {"tokens": str(out_path), "steps": seq.steps, "tracks": seq.tracks}
    midi_path = out_path.with_suffix(".mid")
    info["midi"] = str(midi_path)
    midi_path.write_bytes(export_midi(seq, tempo_bpm=bpm))
    return info


def cmd_sample(args) -> dict:
    model = _load_model(args.ckpt)
    schedule = DiffusionSchedule(args.timesteps)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(args.n):
        rng = np.random.default_rng(args.seed + i)
        seq = unconditional(model, schedule, args.steps, rng)
        written.append(_write_piece(seq, out_dir / f"sample_{i:03d}.tok"))
    return {"command": "sample", "count": args.n, "pieces": written}


def _mask_for(args, seq: TokenSequence) -> MaskPattern:
    if args.mask == "central512":
        if seq.steps != 1024:
            raise NotefillError("central512 preset needs a 1024-step piece")
        return MaskPattern.central(seq.steps, seq.tracks)
    with open(args.mask) as fh:
        pattern = MaskPattern.from_json(json.load(fh))
    if pattern.grid.shape != seq.values.shape:
        raise NotefillError("mask shape does not match piece shape")
    return pattern


def cmd_infill(args) -> dict:
    model = _load_model(args.ckpt)
    schedule = DiffusionSchedule(args.timesteps)
    seq = TokenSequence.load(args.infile)
    rng = np.random.default_rng(args.seed)
    if args.mask == "central512":
        result = infill_central(seq, model, schedule, rng, steps=args.steps)
    else:
        result = infill(seq, _mask_for(args, seq), model, schedule, rng, steps=args.steps)
    return {"command": "infill", **_write_piece(result, args.out)}


def cmd_accompany(args) -> dict:
    model = _load_model(args.ckpt)
    schedule = DiffusionSchedule(args.timesteps)
    seq = TokenSequence.load(args.infile)
    rng = np.random.default_rng(args.seed)
    names = {"melody": 0, "bass": 1, "drums": 2}
    tracks = [names.get(t, t) for t in args.tracks.split(",")]
    tracks = [int(t) for t in tracks]
    result = accompany(seq, tracks, model, schedule, rng, steps=args.steps)
    return {"command": "accompany", "tracks": tracks, **_write_piece(result, args.out)}


def cmd_guide(args) -> dict:
    model = _load_model(args.ckpt)
    classifier = load_density_classifier(args.classifier)
    schedule = DiffusionSchedule(args.timesteps)
    bars = model.config.steps // 16
    targets = [float(v) for v in args.density.split(",")]
    if len(targets) == 1:
        targets = targets * bars
    if len(targets) != bars:
        raise NotefillError(f"need 1 or {bars} density targets, got {len(targets)}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(args.n):
        rng = np.random.default_rng(args.seed + i)
        guidance = DensityGuidance(classifier, targets, args.scale)
        seq = guided_sample(model, schedule, guidance, args.steps, rng)
        written.append(_write_piece(seq, out_dir / f"guided_{i:03d}.tok"))
    return {"command": "guide", "targets": targets, "count": args.n, "pieces": written}


def cmd_evaluate(args) -> dict:
    report = metrics_mod.evaluate(_load_pieces(args.set), _load_pieces(args.ground_truth))
    if args.out:
        metrics_mod.write_report(report, args.out)
    print(report.table(), file=sys.stderr)
    return {"command": "evaluate", "out": args.out, **report.to_json()}


def cmd_confound(args) -> dict:
    reference = TokenSequence.load(args.reference)
    image = load_image(args.image)
    rng = np.random.default_rng(args.seed)
    score = image_to_notes(image, args.threshold, rng)
    config = AnnealerConfig(iterations=args.iterations, seed=args.seed)
    result = anneal(score, reference, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    render_comparison(image, result.score, reference, out_dir / "comparison.png",
                      scores=result.scores)
    report = {
        "command": "confound",
        "converged": result.converged,
        "iterations_used": result.iterations_used,
        "objective": result.objective,
        "anchored_fraction": result.anchored_fraction,
        "scores": result.scores,
        "comparison": str(out_dir / "comparison.png"),
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report


def cmd_train_classifier(args) -> dict:
    sequences = corpus_mod.load_token_dir(args.corpus)
    if not sequences:
        raise NotefillError(f"no token files under {args.corpus}")
    rows = [seq.values[:, 0] for seq in sequences]
    classifier = train_density_classifier(rows, seed=args.seed)
    save_density_classifier(args.out, classifier)
    return {
        "command": "train-classifier",
        "out": str(args.out),
        "validation_accuracy": classifier.validation_accuracy,
    }


def cmd_export_midi(args) -> dict:
    seq = TokenSequence.load(args.infile)
    Path(args.out).write_bytes(export_midi(seq, tempo_bpm=args.bpm))
    return {"command": "export-midi", "out": str(args.out)}


def cmd_serve(args) -> dict:
    from .service import ModelRegistry, serve

    registry = ModelRegistry()
    for spec in args.model or []:
        name, _, path = spec.partition("=")
        registry.register(name, path, timesteps=args.timesteps)
    for spec in args.classifier or []:
        name, _, path = spec.partition("=")
        registry.register_classifier(name, path)
    if not registry.models:
        raise NotefillError("serve needs at least one --model name=checkpoint")
    serve(registry, args.store, port=args.port, host=args.host)
    return {"command": "serve"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="notefill")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="MIDI directory -> token windows + manifest")
    p.add_argument("midi_dir")
    p.add_argument("--mode", choices=("melody", "trio"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=corpus_mod.DEFAULT_STEPS)
    p.add_argument("--min-bars", type=int, default=corpus_mod.MIN_BARS)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("train", help="train the unmasking model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", choices=sorted(CONFIG_PRESETS), default="desk_melody")
    p.add_argument("--seq-steps", type=int, default=256)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--timesteps", type=int, default=1024)
    p.add_argument("--metrics", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="unconditional generation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timesteps", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("infill", help="regenerate masked positions of a piece")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--mask", required=True, help="central512 or a MaskPattern JSON file")
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timesteps", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infill)

    p = sub.add_parser("accompany", help="regenerate whole tracks of a trio")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tracks", required=True, help="comma list: melody,bass,drums or indices")
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timesteps", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_accompany)

    p = sub.add_parser("guide", help="density-guided generation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--density", required=True, help="one target or a per-measure comma list")
    p.add_argument("--scale", type=float, default=0.1)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timesteps", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_guide)

    p = sub.add_parser("evaluate", help="Consistency/Variance of a set vs ground truth")
    p.add_argument("--set", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("confound", help="anneal image-derived notes to match a reference")
    p.add_argument("--image", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--iterations", type=int, default=200_000)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_confound)

    p = sub.add_parser("train-classifier", help="fit the note-density classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("export-midi", help="token file -> MIDI")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bpm", type=float, default=120.0)
    p.set_defaults(func=cmd_export_midi)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", default="notefill-store")
    p.add_argument("--timesteps", type=int, default=1024)
    p.add_argument("--model", action="append", help="name=checkpoint (repeatable)")
    p.add_argument("--classifier", action="append", help="name=classifier (repeatable)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.func(args)
    except (NotefillError, ValueError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": {"type": "FileNotFoundError", "message": str(exc)}}),
              file=sys.stderr)
        return 2
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
