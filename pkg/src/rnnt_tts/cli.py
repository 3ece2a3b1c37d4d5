"""rnnt-tts command line: datagen, train, synth, align, eval.

Exit codes: 0 ok, 2 usage or config error, 3 I/O error, 4 numerical failure, 5 degenerate output.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .codec import CodecSpec, corpus_generate, load_corpus, make_speakers
from .formats import FormatError, read_codes, read_features, write_codes, write_features
from .model import TransducerTTS, UnknownKeyError
from .numerics import tensor as T
from .numerics.layers import ConfigError
from .rnnt import best_path
from .runtime import (
    DecodeConfig,
    RunConfig,
    evaluate,
    ground_truth_features,
    load_checkpoint,
    load_examples,
    new_optimizer,
    run_training,
    save_checkpoint,
    speaker_embedding,
    synthesize,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_DEGENERATE = 0, 2, 3, 4, 5
LOG_NAME = "train_log.jsonl"


class UsageError(Exception):
    pass


class DegenerateOutput(Exception):
    pass


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


# datagen ---------------------------------------------------------------------------

def cmd_datagen(args) -> int:
    cfg = RunConfig.load(args.config)
    if args.sentences < 1:
        raise UsageError("--sentences must be at least 1")
    if args.speakers < 1:
        raise UsageError("--speakers must be at least 1")
    if args.heldout < 0:
        raise UsageError("--heldout must be non-negative")
    speakers = make_speakers(args.speakers, cfg.codec.feature_dim, args.seed)
    meta = corpus_generate(args.out_dir, args.sentences, speakers, cfg.codec, args.seed,
                           vocab_size=cfg.text.vocab_size, char_only=cfg.text.char_only, heldout=args.heldout)
    codes = [read_codes(p) for p in sorted(Path(args.out_dir, "codes").glob("utt*.ttsc"))]
    frames = [len(c) for c in codes]
    _emit({"command": "datagen", "seed": args.seed, "out_dir": str(args.out_dir), "utterances": meta["sentences"],
           "heldout": meta["heldout"], "speakers": [s.id for s in speakers], "vocab_size": meta["vocab_size"],
           "frames_total": int(sum(frames)), "frames_mean": float(np.mean(frames))})
    return EXIT_OK


# train -----------------------------------------------------------------------------

def _truncate_log(path: Path, upto_step: int) -> None:
    if not path.exists():
        return
    keep = [line for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip() and json.loads(line)["step"] <= upto_step]
    path.write_text("".join(line + "\n" for line in keep), encoding="utf-8")


def cmd_train(args) -> int:
    data = Path(args.data)
    corpus, meta = load_corpus(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / LOG_NAME

    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if args.config is not None:
            requested = RunConfig.load(args.config)
            if args.seed is not None:
                requested.train.seed = args.seed
            if requested.hash() != ckpt.meta["config_hash"]:
                raise ConfigError(f"config hash {requested.hash()} does not match checkpoint "
                                  f"{ckpt.meta['config_hash']}; refusing to resume with a different configuration")
        elif args.seed is not None and args.seed != ckpt.config.train.seed:
            raise ConfigError("--seed differs from the checkpoint's training seed")
        cfg, model, opt, step = ckpt.config, ckpt.model, ckpt.optimizer, ckpt.step
        _truncate_log(log_path, step)
    else:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.train.seed = args.seed
        model = TransducerTTS(cfg.model)
        opt = new_optimizer(cfg.train)
        step = 0
        log_path.write_text("", encoding="utf-8")

    codec = CodecSpec(**meta["codec"])
    if codec != cfg.codec:
        raise ConfigError(f"corpus codec {codec} does not match configured codec {cfg.codec}")
    examples = load_examples(data / "manifest.jsonl", corpus.vocab)
    if max(int(e.ids.max()) for e in examples) >= cfg.model.text_vocab:
        raise ConfigError("corpus vocabulary is larger than the model's text_vocab")
    stop = cfg.train.total_steps if args.max_steps is None else min(args.max_steps, cfg.train.total_steps)
    t = cfg.train
    print(f"# alpha={t.alpha} batch_size={t.batch_size} total_steps={t.total_steps} seed={t.seed} "
          f"start_step={step} stop_step={stop} config_hash={cfg.hash()}", file=sys.stderr)

    def save(at: int, name: str) -> None:
        save_checkpoint(out / name, cfg, model, opt, at, corpus.vocab, corpus.codebooks)

    with log_path.open("a", encoding="utf-8") as log:
        def on_step(at, losses):
            log.write(json.dumps(losses.log_record(at)) + "\n")
            log.flush()
            if at % t.checkpoint_every == 0:
                save(at, f"ckpt-{at:06d}.ttsx")

        final = run_training(model, examples, t, opt, step, stop, on_step)
    save(final, "last.ttsx")
    _emit({"command": "train", "seed": t.seed, "alpha": t.alpha, "steps_run": final - step, "step": final,
           "checkpoint": str(out / "last.ttsx"), "config_hash": cfg.hash()})
    return EXIT_OK


# synth -----------------------------------------------------------------------------

def _histogram_summary(codes: np.ndarray) -> list[dict]:
    out = []
    for k in range(codes.shape[1]):
        values, counts = np.unique(codes[:, k], return_counts=True)
        top = int(np.argmax(counts))
        out.append({"level": k, "distinct": int(values.size), "most_common": int(values[top]),
                    "most_common_count": int(counts[top])})
    return out


def cmd_synth(args) -> int:
    if not 0.0 < args.p <= 1.0:
        raise UsageError("--p must lie in (0, 1]")
    ckpt = load_checkpoint(args.ckpt)
    ref = read_features(args.ref)
    d = ckpt.config.decode
    cfg = DecodeConfig(p=args.p, max_symbols_per_step=d.max_symbols_per_step, temperature=d.temperature,
                       seed=args.seed)
    result = synthesize(args.text, ref, ckpt.model, ckpt.vocab, ckpt.codebooks, cfg)
    if len(result.codes) == 0:
        raise DegenerateOutput("decode produced zero frames; nothing written")
    prefix = Path(args.out)
    if prefix.suffix in (".ttsf", ".ttsc"):
        prefix = prefix.with_suffix("")
    write_features(prefix.with_suffix(".ttsf"), result.features)
    write_codes(prefix.with_suffix(".ttsc"), result.codes)
    _emit({"command": "synth", "seed": args.seed, "p": args.p, "frames": int(len(result.codes)),
           "features": str(prefix.with_suffix(".ttsf")), "codes": str(prefix.with_suffix(".ttsc")),
           "histogram": _histogram_summary(result.codes)})
    return EXIT_OK


# align -----------------------------------------------------------------------------

def _align_with_model(ckpt, ids: np.ndarray, codes: np.ndarray, ref: np.ndarray):
    model = ckpt.model
    speaker = T.Tensor(speaker_embedding(model, ref))
    with T.no_grad():
        enc = model.encode_text(ids, speaker)
        logits = model.joint_grid(enc, model.predict_codes(codes[:, 0])).data.astype(np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return best_path(log_probs, codes[:, 0])


def cmd_align(args) -> int:
    if args.grid is not None:
        if args.codes is None:
            raise UsageError("--grid needs --codes (a .ttsc file or a comma-separated list)")
        log_probs = np.load(args.grid)
        targets = _parse_targets(args.codes)
        if targets.size == 0:
            raise UsageError("codes must be non-empty")
        path = best_path(log_probs, targets)
    else:
        if args.ckpt is None:
            raise UsageError("--ckpt is required unless --grid is given")
        ckpt = load_checkpoint(args.ckpt)
        if args.manifest_entry is not None:
            if args.manifest is None:
                raise UsageError("--manifest-entry needs --manifest")
            matches = [e for e in load_examples(args.manifest, ckpt.vocab) if e.id == args.manifest_entry]
            if not matches:
                raise UsageError(f"no entry {args.manifest_entry!r} in {args.manifest}")
            ids, codes, ref = matches[0].ids, matches[0].codes, matches[0].ref
        elif args.text is not None and args.codes is not None:
            if args.ref is None:
                raise UsageError("--text/--codes alignment needs --ref")
            ids, codes, ref = ckpt.vocab.encode(args.text).ids, read_codes(args.codes), read_features(args.ref)
        else:
            raise UsageError("give --manifest-entry, --text with --codes, or --grid with --codes")
        if len(codes) == 0:
            raise UsageError("codes must be non-empty")
        path = _align_with_model(ckpt, ids, codes, ref)
    _emit({"command": "align", **path.to_json(), "dwell": [int(x) for x in path.dwell()],
           "log_prob": path.log_prob})
    return EXIT_OK


def _parse_targets(spec: str) -> np.ndarray:
    if Path(spec).suffix == ".ttsc":
        return read_codes(spec)[:, 0]
    try:
        return np.asarray([int(x) for x in spec.split(",") if x.strip()], dtype=np.int64)
    except ValueError as exc:
        raise UsageError(f"cannot parse codes {spec!r}") from exc


# eval ------------------------------------------------------------------------------

def _resolve_manifest(manifest: Path, split: str | None) -> tuple[Path, str]:
    if manifest.is_dir():
        name = "manifest.jsonl" if split in (None, "train") else f"{split}.jsonl"
        return manifest / name, split or "train"
    return manifest, split or manifest.stem


def cmd_eval(args) -> int:
    manifest, split = _resolve_manifest(Path(args.manifest), args.split)
    if not manifest.exists():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    if args.ckpt is not None:
        ckpt = load_checkpoint(args.ckpt)
        model, vocab, codebooks, d = ckpt.model, ckpt.vocab, ckpt.codebooks, ckpt.config.decode
    elif args.oracle:
        corpus, _ = load_corpus(manifest.parent)
        model, vocab, codebooks, d = None, corpus.vocab, corpus.codebooks, DecodeConfig()
    else:
        raise UsageError("--ckpt is required unless --oracle is given")
    p = d.p if args.p is None else args.p
    cfg = DecodeConfig(p=p, max_symbols_per_step=d.max_symbols_per_step, temperature=d.temperature, seed=args.seed)
    examples = load_examples(manifest, vocab)
    if args.limit is not None:
        examples = examples[:args.limit]
    references = [ground_truth_features(manifest, e.id) for e in examples]
    report = evaluate(model, examples, references, codebooks, cfg, args.seed, split=split, oracle=args.oracle)
    _emit(report.to_dict())
    return EXIT_OK


# entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    defaults = json.dumps(RunConfig().to_dict(), indent=1, sort_keys=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="rnnt-tts", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Run configuration (--config) is one JSON object; unknown keys are rejected. Defaults:\n" + defaults)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a toy corpus", formatter_class=fmt)
    p.add_argument("--config", help="run configuration JSON (codec and text sections are used)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sentences", type=int, default=50)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--heldout", type=int, default=0, help="extra sentences written to heldout.jsonl")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train on a corpus directory", formatter_class=fmt)
    p.add_argument("--config", help="run configuration JSON; on resume it must hash-match the checkpoint")
    p.add_argument("--data", required=True, help="corpus directory written by datagen")
    p.add_argument("--out", required=True, help="output directory for checkpoints and the JSONL log")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--max-steps", type=int, help="stop once this global step is reached (default: total_steps)")
    p.add_argument("--seed", type=int, help="override train.seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="synthesize features and codes for a text", formatter_class=fmt)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--ref", required=True, help="reference TTSF feature file")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.ttsf and PREFIX.ttsc")
    p.add_argument("--p", type=float, default=0.95, help="nucleus mass for the first codebook")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("align", help="best alignment between text and codes", formatter_class=fmt)
    p.add_argument("--ckpt")
    p.add_argument("--manifest")
    p.add_argument("--manifest-entry", help="utterance id inside --manifest")
    p.add_argument("--text")
    p.add_argument("--codes", help="TTSC file, or comma-separated first-codebook codes with --grid")
    p.add_argument("--ref", help="reference TTSF file for --text/--codes")
    p.add_argument("--grid", help="precomputed (N, T+1, V+1) log-probability grid as .npy")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="decode a manifest and report metrics", formatter_class=fmt)
    p.add_argument("--ckpt")
    p.add_argument("--manifest", required=True, help="manifest file, or a corpus directory with --split")
    p.add_argument("--split", help="train -> manifest.jsonl, otherwise SPLIT.jsonl when --manifest is a directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, help="nucleus mass (default: from the checkpoint config)")
    p.add_argument("--oracle", action="store_true", help="pass ground-truth codes through instead of decoding")
    p.add_argument("--limit", type=int, help="only the first N utterances")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, UnknownKeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DegenerateOutput as exc:
        print(f"degenerate output: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
