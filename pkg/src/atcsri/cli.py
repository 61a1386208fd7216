"""Command-line surface: synth, train, eval, predict, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 failed
gradient check.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import tensor as T
from .audio import (AudioTooShort, WavFormatError, load_wav, log_filterbank,
                    normalize_waveform)
from .checkpoint import (CheckpointError, load_checkpoint, save_checkpoint,
                         vocab_hash)
from .config import ConfigError, load_config
from .data import Dataset, ManifestError, check_modalities, pad_features, pad_waves
from .gradcheck import run_primitive_suite
from .metrics import SingleClassError
from .models import MODEL_KINDS, Batch, UnknownModelKind, build_model, modalities_for
from .synth import SynthConfig, generate_corpus
from .text import EmptyTranscript, Vocabulary, build_vocab, encode_batch
from .training import TrainConfig, TrainingError, evaluate, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_GRADCHECK = 3

_DATA_ERRORS = (ManifestError, ConfigError, CheckpointError, WavFormatError,
                AudioTooShort, EmptyTranscript, UnknownModelKind, TrainingError,
                SingleClassError, OSError)

_TRAIN_KEYS = ("learning_rate", "batch_size", "max_epochs", "patience", "seed",
               "class_weights", "max_len")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="atcsri", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic radio corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=200)
    p.add_argument("--n-test", type=int, default=400)
    p.add_argument("--pilot-frac", type=float, default=0.582)
    p.add_argument("--dfg-rate", type=float, default=0.1)
    p.add_argument("--oov-rate", type=float, default=0.05)
    p.add_argument("--channel-swap-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--cjk", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a synthesized corpus")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--data", required=True,
                   help="directory with train.jsonl and dev.jsonl")
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--pooling", choices=("self_attention", "sum", "average"))
    p.add_argument("--fusion", choices=("modal_attention", "concat"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="directory with <split>.jsonl")
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one utterance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", help="RIFF PCM16 mono 8 kHz file")
    p.add_argument("--text", help="transcript")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def cmd_synth(args) -> int:
    try:
        cfg = SynthConfig(out_dir=args.out, n_train=args.n_train,
                          n_dev=args.n_dev, n_test=args.n_test,
                          pilot_fraction=args.pilot_frac, dfg_rate=args.dfg_rate,
                          oov_rate=args.oov_rate,
                          channel_swap_rate=args.channel_swap_rate,
                          seed=args.seed, cjk=args.cjk)
    except ValueError as e:
        raise UsageError(str(e)) from None
    manifests = generate_corpus(cfg)
    for split, path in manifests.items():
        print(f"{split}: {path}")
    return EXIT_OK


def _vocab_from_meta(meta: dict, checkpoint_path) -> Vocabulary:
    if "tokens" in meta:
        return Vocabulary(meta["tokens"])
    sidecar = Path(checkpoint_path).with_suffix(".vocab")
    if sidecar.is_file():
        return Vocabulary.load(sidecar)
    raise CheckpointError(
        f"{checkpoint_path}: no vocabulary in metadata and no {sidecar.name} beside it")


def cmd_train(args) -> int:
    overrides = load_config(args.config) if args.config else {}
    kwargs = {k: overrides[k] for k in _TRAIN_KEYS if k in overrides}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    try:
        tconfig = TrainConfig(**kwargs)
    except ValueError as e:
        raise UsageError(f"bad training configuration: {e}") from None
    kind = args.model
    pooling = args.pooling or overrides.get("pooling")
    fusion = args.fusion or overrides.get("fusion") or "modal_attention"

    data_dir = Path(args.data)
    train_ds = Dataset(data_dir / "train.jsonl")
    dev_ds = Dataset(data_dir / "dev.jsonl")
    mods = modalities_for(kind)
    check_modalities(train_ds, mods)
    check_modalities(dev_ds, mods)

    vocab = build_vocab(train_ds.texts()) if "text" in mods else None
    model = build_model(kind, vocab_size=len(vocab) if vocab else None,
                        pooling=pooling, fusion=fusion, seed=tconfig.seed)

    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    result = train(model, train_ds, dev_ds, tconfig, vocab=vocab,
                   history_path=out.with_suffix(".history.jsonl"),
                   log=lambda msg: print(msg, file=sys.stderr))

    extra = {"seed": tconfig.seed, "best_epoch": result.best_epoch,
             "best_dev_acc": result.best_dev_acc}
    if vocab is not None:
        extra["vocab_sha256"] = vocab_hash(vocab)
        extra["tokens"] = vocab.id_to_token[2:]
        vocab.save(out.with_suffix(".vocab"))
    save_checkpoint(model, out, extra_metadata=extra)
    print(json.dumps({"checkpoint": str(out), "best_epoch": result.best_epoch,
                      "best_dev_acc": result.best_dev_acc}))
    return EXIT_OK


def cmd_eval(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    ds = Dataset(Path(args.data) / f"{args.split}.jsonl")
    check_modalities(ds, model.modalities)
    vocab = _vocab_from_meta(meta, args.checkpoint) if "text" in model.modalities else None
    report = evaluate(model, ds, vocab=vocab)
    print(json.dumps(report.to_dict()))
    print(report.table())
    return EXIT_OK


def cmd_predict(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    mods = model.modalities
    batch = Batch(labels=np.zeros(1, dtype=np.int64))
    if "text" in mods:
        if not args.text:
            raise UsageError(f"model kind {meta['kind']!r} needs --text")
        vocab = _vocab_from_meta(meta, args.checkpoint)
        batch.token_ids, batch.token_lengths = encode_batch([args.text], vocab)
    if mods & {"features", "waves"}:
        if not args.wav:
            raise UsageError(f"model kind {meta['kind']!r} needs --wav")
        wave = load_wav(args.wav)
        if "features" in mods:
            batch.features, batch.feature_lengths = pad_features([log_filterbank(wave)])
        if "waves" in mods:
            batch.waves, batch.wave_lengths = pad_waves(
                [normalize_waveform(wave).samples])
    model.eval()
    with T.no_grad():
        probs = model.forward(batch)
    p_pilot = float(probs.data[0, 1])
    print(json.dumps({"role": "pilot" if p_pilot >= 0.5 else "atco",
                      "p_pilot": p_pilot}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = run_primitive_suite(seed=args.seed)
    width = max(len(r.name) for r in reports)
    worst = max(r.max_rel_error for r in reports)
    for r in reports:
        print(f"{r.name:<{width}}  {r.max_rel_error:12.3e}  "
              f"{'ok' if r.passed else 'FAIL'}")
    print(f"{len(reports)} primitives, max relative error {worst:.3e}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_GRADCHECK


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # argparse --help
        return int(e.code or 0)
    except _DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
